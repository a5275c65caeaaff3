"""Transition kernels: LWA-MCMC, full-data Metropolis-Hastings, the sequential-test subsampling baseline.

All kernels share one random-walk proposal type and a per-chain CostMeter.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import stats as sps

from . import summary
from .core import (
    WINDOW,
    ConfigError,
    CostMeter,
    Dataset,
    ModelContract,
    SubsetSelection,
    as_generator,
)
from .subset_kernels import SubsetProposal, UniformSubset, accept_subset

KINDS = ("lwa", "full_mh", "mhsublhd", "fixed_subset", "free_subset")


# ---------------------------------------------------------------- random-walk proposal


@dataclass
class AdaptConfig:
    """Robbins-Monro scaling: ``log s_j += c / t^a * (accepted - target)`` after each block step."""

    enabled: bool = True
    target: float = 0.3
    c: float = 1.0
    exponent: float = 0.6
    stop_after: Optional[int] = None

    def __post_init__(self):
        if not 0.0 < self.target < 1.0:
            raise ConfigError("adaptation target rate must lie in (0, 1)")
        if not 0.5 < self.exponent <= 1.0:
            raise ConfigError("adaptation exponent must lie in (0.5, 1] for diminishing adaptation")


class RwProposal:
    """Blockwise Gaussian random walk.

    Location coordinates move additively, positive coordinates
    multiplicatively (``s' = s * exp(scale * e)``); the latter contribute the
    Hastings correction ``log(s'/s)``. One block is updated per step, chosen
    uniformly when there are several. Each block carries one adaptive
    log-multiplier shared by its coordinates.
    """

    def __init__(self, scale, blocks=None, positive=None, adapt: Optional[AdaptConfig] = None):
        self.base = np.atleast_1d(np.asarray(scale, dtype=float)).copy()
        if np.any(self.base < 0):
            raise ConfigError("random-walk scales must be >= 0")
        d = self.base.size
        self.blocks = [np.asarray(b, dtype=np.int64) for b in (blocks if blocks is not None else [np.arange(d)])]
        self.positive = np.zeros(d, bool) if positive is None else np.asarray(positive, bool)
        self.adapt_cfg = adapt or AdaptConfig(enabled=False)
        self.log_mult = np.zeros(len(self.blocks))
        self.steps = np.zeros(len(self.blocks), dtype=np.int64)
        self._pos_in_block = [self.positive[b] for b in self.blocks]

    @classmethod
    def for_model(cls, model: ModelContract, scale, adapt: Optional[AdaptConfig] = None) -> "RwProposal":
        scale = np.broadcast_to(np.asarray(scale, dtype=float), (model.param_dim,))
        return cls(scale, model.blocks, model.positive, adapt)

    @property
    def scales(self) -> np.ndarray:
        out = self.base.copy()
        for j, b in enumerate(self.blocks):
            out[b] *= math.exp(self.log_mult[j])
        return out

    def propose(self, theta, rng):
        """Return ``(theta', log_hastings, block)``."""
        gen = as_generator(rng)
        j = int(gen.integers(len(self.blocks))) if len(self.blocks) > 1 else 0
        b = self.blocks[j]
        step = math.exp(self.log_mult[j]) * self.base[b] * gen.standard_normal(b.size)
        new = np.array(theta, dtype=float)
        pos = self._pos_in_block[j]
        if pos.any():
            loc = ~pos
            new[b[loc]] += step[loc]
            new[b[pos]] *= np.exp(step[pos])
            log_h = float(step[pos].sum())
        else:
            new[b] += step
            log_h = 0.0
        return new, log_h, j

    def adapt(self, block: int, accepted: bool) -> None:
        cfg = self.adapt_cfg
        if not cfg.enabled:
            return
        self.steps[block] += 1
        t = self.steps[block]
        if cfg.stop_after is not None and t > cfg.stop_after:
            return
        self.log_mult[block] += cfg.c / t ** cfg.exponent * ((1.0 if accepted else 0.0) - cfg.target)


def rw_propose(theta, proposal: RwProposal, rng):
    """``(theta', log_hastings)`` from one random-walk move."""
    new, log_h, _ = proposal.propose(theta, rng)
    return new, log_h


# ---------------------------------------------------------------- chain state


@dataclass
class ChainState:
    theta: np.ndarray
    subset: SubsetSelection
    loglik: float
    logprior: float
    logw: float = 0.0
    stats: Optional[np.ndarray] = None
    underflows: int = 0

    def copy(self) -> "ChainState":
        return ChainState(self.theta.copy(), self.subset, self.loglik, self.logprior, self.logw,
                          None if self.stats is None else self.stats.copy(), self.underflows)


def _finite_or_neg_inf(x: float) -> float:
    return x if math.isfinite(x) else -math.inf


def init_state(model, data, subset, theta, meter: Optional[CostMeter] = None) -> ChainState:
    theta = np.asarray(theta, dtype=float)
    lp = model.log_prior(theta)
    ll = model.log_lik_subset(theta, data, subset)
    if meter is not None:
        meter.add_lik(subset.n)
    return ChainState(theta.copy(), subset, _finite_or_neg_inf(ll), lp)


class SubsetWeigher:
    """Computes normalized statistics and log subset weights against the full-data reference."""

    def __init__(self, stat: summary.SummaryStatistic, data: Dataset, eps: float):
        if not eps > 0:
            raise ConfigError(f"kernel bandwidth must be > 0, got {eps!r}")
        stat.check_data(data)
        self.stat = stat
        self.data = data
        self.eps = float(eps)
        self.ref = np.asarray(stat.reference(data), dtype=float)
        self._dist = None
        if isinstance(stat, summary.WindowStatCache):
            self._dist = stat.window_distances(self.ref)
            self._n = stat.n

    def __call__(self, subset: SubsetSelection, meter: Optional[CostMeter] = None):
        if meter is not None:
            meter.add_stat(subset.n)
        if self._dist is not None and subset.mode == WINDOW and subset.n == self._n:
            d = self._dist[subset.start]
            s = self.stat.table[subset.start]
        else:
            s = self.stat.normalized(self.data, subset)
            d = math.sqrt(float(np.sum((s - self.ref) ** 2)))
        return -0.5 * (d / self.eps) ** 2, s


# ---------------------------------------------------------------- kernels


def mh_theta_step(state: ChainState, model: ModelContract, data: Dataset, proposal: RwProposal, rng,
                  meter: Optional[CostMeter] = None):
    """One Metropolis-Hastings update of theta against the sub-posterior of ``state.subset``.

    Consumes exactly ``n`` likelihood evaluations. A non-finite candidate
    density is a reject and is counted in ``state.underflows``. Returns
    ``(state, accepted)``; the state is updated in place.
    """
    gen = as_generator(rng)
    cand, log_h, block = proposal.propose(state.theta, gen)
    u = gen.random()
    if meter is not None:
        meter.add_lik(state.subset.n)
    lp = model.log_prior(cand)
    ll = model.log_lik_subset(cand, data, state.subset) if math.isfinite(lp) else -math.inf
    if not (math.isfinite(lp) and math.isfinite(ll)):
        state.underflows += 1
        accepted = False
    else:
        log_a = (lp + ll) - (state.logprior + state.loglik) + log_h
        accepted = log_a >= 0.0 or u < math.exp(log_a)
    if accepted:
        state.theta, state.loglik, state.logprior = cand, ll, lp
    proposal.adapt(block, accepted)
    return state, accepted


def lwa_transition(state: ChainState, model: ModelContract, data: Dataset, weigher: SubsetWeigher,
                   subset_proposal: SubsetProposal, rw: RwProposal, L: int, rng,
                   meter: Optional[CostMeter] = None, flat: bool = False):
    """One LWA-MCMC transition (subset refresh decision, then theta update).

    ``flat=True`` treats all subsets as equally weighted, which turns the
    kernel into the free-subset sampler: no statistics are computed and a
    symmetric proposal is always accepted. Returns
    ``(state, accepted_theta, refreshed)`` where ``refreshed`` means the
    subset changed. An accepted proposal equal to the current subset still
    runs the ``L`` inner steps, but the cached likelihood stays valid.
    """
    gen = as_generator(rng)
    proposed, log_ratio = subset_proposal.propose(state.subset, gen)
    if flat:
        refreshed = accept_subset(0.0, 0.0, log_ratio, gen)
        logw, s = 0.0, None
    else:
        logw, s = weigher(proposed, meter)
        refreshed = accept_subset(state.logw, logw, log_ratio, gen)
    if refreshed:
        changed = proposed != state.subset
        if changed:
            state.subset, state.logw, state.stats = proposed, logw, s
            # the cached log-likelihood belongs to the old subset
            state.loglik = _finite_or_neg_inf(model.log_lik_subset(state.theta, data, proposed))
            if meter is not None:
                meter.add_lik(proposed.n)
        refreshed = changed
        accepted = False
        for _ in range(L):
            state, a = mh_theta_step(state, model, data, rw, gen, meter)
            accepted = accepted or a
    else:
        state, accepted = mh_theta_step(state, model, data, rw, gen, meter)
    return state, accepted, refreshed


def full_mh_transition(state, model, data, rw, rng, meter=None):
    """Metropolis-Hastings on the full posterior (``state.subset`` must be the full selection)."""
    if not state.subset.is_full:
        raise ValueError("full M-H requires the full data selection")
    return mh_theta_step(state, model, data, rw, rng, meter)


class _TQuantiles:
    def __init__(self, q: float):
        self.q = q
        self._cache = {}

    def __call__(self, df: int) -> float:
        v = self._cache.get(df)
        if v is None:
            v = float(sps.t.ppf(self.q, df)) if self.q > 0.5 else 0.0
            self._cache[df] = v
        return v


def mhsublhd_transition(state: ChainState, model: ModelContract, data: Dataset, rw: RwProposal,
                        delta: float, batch_base: int, rng, meter: Optional[CostMeter] = None,
                        _tq: Optional[_TQuantiles] = None):
    """Sequential-test subsampled Metropolis-Hastings step.

    The M-H decision ``log u + log p(theta) - log p(theta') - log_hastings <
    sum_k log f(Y_k | theta') / f(Y_k | theta)`` is made on growing samples
    without replacement: stage ``l`` adds ``batch_base * l`` data. A decision
    is taken once a Student-t interval (two-sided level ``delta``, with
    finite-population correction) around the running mean of per-datum log
    ratios excludes the threshold, or when all data are used. Each datum
    costs two likelihood evaluations (current and candidate).

    Returns ``(state, accepted, data_used)``.
    """
    if data.flavor != "iid":
        raise ConfigError("the subsampling baseline needs iid data")
    if not 0.0 < delta <= 1.0:
        raise ConfigError("delta must lie in (0, 1]")
    gen = as_generator(rng)
    N = data.N
    tq = _tq or _TQuantiles(1.0 - delta / 2.0)
    cand, log_h, block = rw.propose(state.theta, gen)
    u = gen.random()
    lp = model.log_prior(cand)
    if not math.isfinite(lp):
        state.underflows += 1
        rw.adapt(block, False)
        return state, False, 0
    psi = (math.log(u) + state.logprior - lp - log_h) / N if u > 0 else -math.inf

    first = min(batch_base, N)
    order = gen.choice(N, size=first, replace=False)
    used, total, total_sq = 0, 0.0, 0.0
    stage = 1
    accepted = None
    while True:
        lo, hi = used, min(N, used + (batch_base * stage if stage > 1 else first))
        if hi > order.size:
            mask = np.ones(N, dtype=bool)
            mask[order] = False
            order = np.concatenate([order, gen.permutation(np.flatnonzero(mask))])
        idx = order[lo:hi]
        with np.errstate(over="ignore", invalid="ignore"):
            r = model.log_lik_terms(cand, data, idx) - model.log_lik_terms(state.theta, data, idx)
        if meter is not None:
            meter.add_lik(2 * idx.size)
        used = hi
        if not np.all(np.isfinite(r)):
            # a non-finite candidate term: reject outright
            state.underflows += 1
            accepted = False
            break
        total += float(r.sum())
        total_sq += float(np.dot(r, r))
        mean = total / used
        if used >= N:
            accepted = mean > psi
            break
        var = max(total_sq / used - mean * mean, 0.0) * used / (used - 1)
        half = tq(used - 1) * math.sqrt(var / used) * math.sqrt((N - used) / (N - 1))
        if abs(mean - psi) > half:
            accepted = mean > psi
            break
        stage += 1
    if accepted:
        state.theta, state.logprior = cand, lp
    rw.adapt(block, accepted)
    return state, accepted, used


# ---------------------------------------------------------------- chain driver


@dataclass
class SamplerConfig:
    n: Optional[int] = None
    eps: float = 1.0
    L: int = 1
    iterations: Optional[int] = None
    cost_budget: Optional[int] = None
    burn_in: int = 10_000
    delta: float = 0.1
    batch_base: int = 1000

    def validate(self, kind: str, N: int) -> None:
        if kind not in KINDS:
            raise ConfigError(f"unknown sampler kind {kind!r}")
        if self.iterations is None and self.cost_budget is None:
            raise ConfigError("a budget (iterations or cost units) is required")
        if (self.iterations is not None and self.iterations <= 0) or \
                (self.cost_budget is not None and self.cost_budget <= 0):
            raise ConfigError("budget must be > 0")
        if kind in ("lwa", "fixed_subset", "free_subset"):
            if self.n is None or not 1 <= self.n <= N:
                raise ConfigError(f"subset size n={self.n} must lie in [1, {N}]")
        if not self.eps > 0:
            raise ConfigError("eps must be > 0")
        if self.L < 1:
            raise ConfigError("L must be >= 1")
        if self.batch_base < 2:
            raise ConfigError("batch_base must be >= 2")


@dataclass
class Trace:
    """One row per transition; counters are cumulative and include initialization."""

    iteration: np.ndarray
    lik_evals: np.ndarray
    stat_touches: np.ndarray
    theta: np.ndarray
    accepted_theta: np.ndarray
    refreshed_subset: np.ndarray
    data_used: np.ndarray
    subset_start: np.ndarray
    subsets: Optional[list] = None
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return self.iteration.size

    @property
    def cost(self) -> np.ndarray:
        return self.lik_evals + self.stat_touches

    @property
    def dim(self) -> int:
        return self.theta.shape[1]

    def window(self, burn_in: int = 0) -> slice:
        if burn_in >= len(self):
            raise ValueError(f"burn-in {burn_in} leaves no rows of a {len(self)}-row trace")
        return slice(burn_in, None)

    def posterior_mean(self, burn_in: int = 0) -> np.ndarray:
        return self.theta[self.window(burn_in)].mean(axis=0)

    def posterior_sd(self, burn_in: int = 0) -> np.ndarray:
        return self.theta[self.window(burn_in)].std(axis=0, ddof=1) if len(self) - burn_in > 1 \
            else np.zeros(self.dim)

    def acceptance_rate(self, burn_in: int = 0) -> float:
        return float(self.accepted_theta[self.window(burn_in)].mean())

    def summary(self, burn_in: int = 0) -> dict:
        from .analysis import refresh_rate

        return {
            "iterations": int(len(self)),
            "burn_in": int(burn_in),
            "posterior_mean": self.posterior_mean(burn_in).tolist(),
            "posterior_sd": self.posterior_sd(burn_in).tolist(),
            "acceptance_rate": self.acceptance_rate(burn_in),
            "refresh_rate": refresh_rate(self, burn_in),
            "mean_data_used": float(self.data_used[self.window(burn_in)].mean()),
            "total_lik_evals": int(self.lik_evals[-1]),
            "total_stat_touches": int(self.stat_touches[-1]),
            "total_cost": int(self.cost[-1]),
            "underflows": int(self.meta.get("underflows", 0)),
        }


class _TraceBuilder:
    def __init__(self, d: int, record_subsets: bool):
        self.cols = {k: [] for k in ("lik", "stat", "acc", "ref", "used", "start")}
        self.theta = []
        self.subsets = [] if record_subsets else None

    def add(self, meter, theta, acc, ref, used, subset):
        c = self.cols
        c["lik"].append(meter.lik_evals)
        c["stat"].append(meter.stat_touches)
        c["acc"].append(acc)
        c["ref"].append(ref)
        c["used"].append(used)
        c["start"].append(subset.start if subset.mode == WINDOW and not subset.is_full else -1)
        self.theta.append(theta)
        if self.subsets is not None:
            self.subsets.append(subset)

    def build(self, meta) -> Trace:
        c = self.cols
        k = len(self.theta)
        return Trace(
            iteration=np.arange(1, k + 1, dtype=np.int64),
            lik_evals=np.array(c["lik"], dtype=np.int64),
            stat_touches=np.array(c["stat"], dtype=np.int64),
            theta=np.array(self.theta, dtype=float).reshape(k, -1),
            accepted_theta=np.array(c["acc"], dtype=bool),
            refreshed_subset=np.array(c["ref"], dtype=bool),
            data_used=np.array(c["used"], dtype=np.int64),
            subset_start=np.array(c["start"], dtype=np.int64),
            subsets=self.subsets,
            meta=meta,
        )


def random_subset(data: Dataset, n: int, windowed: bool, rng) -> SubsetSelection:
    gen = as_generator(rng)
    if windowed:
        return SubsetSelection.window(int(gen.integers(0, data.N - n + 1)), n, data.N)
    return SubsetSelection._trusted(np.sort(gen.choice(data.N, size=n, replace=False)), data.N)


def initial_theta(model, data, subset, rng, init_theta=None, attempts: int = 1000) -> np.ndarray:
    """``init_theta`` if given, else the first prior draw with a finite sub-posterior density."""
    if init_theta is not None:
        return np.asarray(init_theta, dtype=float)
    gen = as_generator(rng)
    for _ in range(attempts):
        theta = model.sample_prior(gen)
        with np.errstate(over="ignore", invalid="ignore"):
            if math.isfinite(model.log_prior(theta)) and math.isfinite(model.log_lik_subset(theta, data, subset)):
                return theta
    raise RuntimeError("no prior draw with a finite initial density")


def run_chain(kind: str, config: SamplerConfig, model: ModelContract, data: Dataset, rng,
              rw: RwProposal, stat: Optional[summary.SummaryStatistic] = None,
              subset_proposal: Optional[SubsetProposal] = None, init_theta=None,
              init_subset: Optional[SubsetSelection] = None, record_subsets: bool = False,
              windowed: Optional[bool] = None) -> Trace:
    """Run one chain of ``kind`` until its iteration or cost budget is exhausted.

    ``rw`` is copied, so one proposal setup can seed many runs. The
    full trace is returned; burn-in is applied only by analyses.
    """
    config.validate(kind, data.N)
    model.check_data(data)
    gen = as_generator(rng)
    rw = copy.deepcopy(rw)
    meter = CostMeter()
    if windowed is None:
        windowed = data.flavor == "time_series"

    if kind in ("full_mh", "mhsublhd"):
        subset = SubsetSelection.full(data.N)
    else:
        subset = init_subset or random_subset(data, config.n, windowed, gen)
    theta0 = initial_theta(model, data, subset, gen, init_theta)

    weigher = None
    if kind == "mhsublhd":
        state = ChainState(theta0.copy(), subset, math.nan, model.log_prior(theta0))
    else:
        state = init_state(model, data, subset, theta0, meter)
    if kind == "lwa":
        if stat is None or subset_proposal is None:
            raise ConfigError("lwa needs a summary statistic and a subset proposal")
        weigher = SubsetWeigher(stat, data, config.eps)
        state.logw, state.stats = weigher(subset, meter)
    elif kind == "free_subset":
        subset_proposal = UniformSubset()

    builder = _TraceBuilder(model.param_dim, record_subsets)
    tq = _TQuantiles(1.0 - config.delta / 2.0)
    max_iter = config.iterations if config.iterations is not None else math.inf
    budget = config.cost_budget if config.cost_budget is not None else math.inf
    k = 0
    while k < max_iter and meter.total < budget:
        used = 0
        refreshed = False
        if kind == "lwa":
            state, acc, refreshed = lwa_transition(state, model, data, weigher, subset_proposal, rw,
                                                   config.L, gen, meter)
            used = state.subset.n
        elif kind == "free_subset":
            state, acc, refreshed = lwa_transition(state, model, data, None, subset_proposal, rw,
                                                   config.L, gen, meter, flat=True)
            used = state.subset.n
        elif kind == "fixed_subset":
            state, acc = mh_theta_step(state, model, data, rw, gen, meter)
            used = state.subset.n
        elif kind == "full_mh":
            state, acc = full_mh_transition(state, model, data, rw, gen, meter)
            used = data.N
        else:
            state, acc, used = mhsublhd_transition(state, model, data, rw, config.delta, config.batch_base,
                                                   gen, meter, tq)
        k += 1
        builder.add(meter, state.theta, acc, refreshed, used, state.subset)

    meta = {"kind": kind, "underflows": state.underflows, "final_scales": rw.scales.tolist(),
            "n": config.n if kind not in ("full_mh", "mhsublhd") else data.N,
            "eps": config.eps, "L": config.L}
    return builder.build(meta)


def run_subset_chain(weigher: SubsetWeigher, proposal: SubsetProposal, init: SubsetSelection,
                     iterations: int, rng) -> list:
    """The subset component of the LWA chain on its own (steps 2-5 only); returns visited subsets."""
    gen = as_generator(rng)
    cur = init
    logw, _ = weigher(cur)
    out = []
    for _ in range(iterations):
        prop, log_ratio = proposal.propose(cur, gen)
        lw, _ = weigher(prop)
        if accept_subset(logw, lw, log_ratio, gen):
            cur, logw = prop, lw
        out.append(cur)
    return out
