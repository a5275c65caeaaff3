"""Grid posterior oracles, KL and total-variation distances, exact subset enumeration, chain diagnostics."""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import comb, logsumexp

from .core import Dataset, SubsetSelection
from .models import (
    ProbitModel,
    classify_ml,
    probit_log_partition,
    probit_loglik,
    probit_natural_param,
)
from .summary import SummaryStatistic, gaussian_log_kernel

MIN_GRID = 256
DEFAULT_GRID = 4096
BOUNDARY_MASS = 1e-10
ENUMERATION_BUDGET = 100_000


class GridTooNarrowError(ValueError):
    """The density has non-negligible mass at the grid boundary."""


class GridMismatchError(ValueError):
    """Two grid densities are defined on different grids."""


class EnumerationBudgetError(ValueError):
    """The number of subsets exceeds the enumeration budget."""


@dataclass(frozen=True)
class GridDensity:
    """Log-density values on the uniform grid ``linspace(lo, hi, count)``."""

    lo: float
    hi: float
    count: int
    log_values: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        if self.count < MIN_GRID:
            raise ValueError(f"grid needs at least {MIN_GRID} points, got {self.count}")
        if not self.hi > self.lo:
            raise ValueError("grid upper bound must exceed lower bound")
        lv = np.asarray(self.log_values, dtype=float)
        if lv.shape != (self.count,):
            raise ValueError("log_values must have one entry per grid point")
        object.__setattr__(self, "log_values", lv)

    @classmethod
    def from_function(cls, log_fn: Callable[[np.ndarray], np.ndarray], lo, hi, count=DEFAULT_GRID,
                      normalize=True) -> "GridDensity":
        x = np.linspace(lo, hi, count)
        g = cls(float(lo), float(hi), int(count), np.asarray(log_fn(x), dtype=float))
        return g.normalize() if normalize else g

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.count)

    @property
    def h(self) -> float:
        return (self.hi - self.lo) / (self.count - 1)

    @property
    def weights(self) -> np.ndarray:
        w = np.full(self.count, self.h)
        w[0] = w[-1] = 0.5 * self.h
        return w

    @property
    def density(self) -> np.ndarray:
        return np.exp(self.log_values)

    def same_grid(self, other: "GridDensity") -> bool:
        return (self.lo, self.hi, self.count) == (other.lo, other.hi, other.count)

    def log_mass(self) -> float:
        return float(logsumexp(self.log_values + np.log(self.weights)))

    def normalize(self) -> "GridDensity":
        lz = self.log_mass()
        if not np.isfinite(lz):
            raise FloatingPointError("density has no finite mass on the grid")
        return replace(self, log_values=self.log_values - lz, normalized=True)

    def expect(self, values) -> float:
        return float(np.sum(self.weights * self.density * np.asarray(values, dtype=float)))

    def mean(self) -> float:
        return self.expect(self.x)

    def sd(self) -> float:
        m = self.mean()
        return math.sqrt(max(self.expect((self.x - m) ** 2), 0.0))

    def boundary_mass(self) -> float:
        """Trapezoid mass of the first and last grid cells, relative to the total."""
        p = self.density
        ends = 0.5 * self.h * (p[0] + p[1] + p[-2] + p[-1])
        return float(ends / (np.sum(self.weights * p)))

    def cdf_at(self, points) -> np.ndarray:
        """Cumulative mass up to ``points`` (trapezoid, linear density between nodes)."""
        x, p = self.x, self.density
        cum = np.concatenate([[0.0], np.cumsum(0.5 * self.h * (p[1:] + p[:-1]))])
        pts = np.clip(np.asarray(points, dtype=float), self.lo, self.hi)
        i = np.clip(((pts - self.lo) / self.h).astype(np.int64), 0, self.count - 2)
        t = pts - x[i]
        slope = (p[i + 1] - p[i]) / self.h
        return cum[i] + p[i] * t + 0.5 * slope * t * t

    def quantiles(self, levels) -> np.ndarray:
        """Inverse of the piecewise-linear interpolant of the node cdf."""
        p = self.density
        cum = np.concatenate([[0.0], np.cumsum(0.5 * self.h * (p[1:] + p[:-1]))])
        cum = cum / cum[-1]
        return np.interp(np.asarray(levels, dtype=float), cum, self.x)

    def bin_masses(self, edges) -> np.ndarray:
        return np.diff(self.cdf_at(edges))


# ---------------------------------------------------------------- probit grid posteriors


def _probit_log_post(model: ProbitModel, counts):
    def f(x):
        out = model.log_prior_grid(x)
        if counts[0] > 0:
            out = out + probit_loglik(counts, x, model.gamma)
        return out
    return f


def _laplace_center(log_fn, guess: float, width: float):
    res = minimize_scalar(lambda t: -float(log_fn(np.array([t]))[0]), bracket=(guess - width, guess + width))
    m = float(res.x)
    h = 1e-4 * max(width, 1e-3)
    f0, fp, fm = (float(log_fn(np.array([v]))[0]) for v in (m, m + h, m - h))
    curv = -(fp - 2 * f0 + fm) / (h * h)
    s = 1.0 / math.sqrt(curv) if curv > 0 else width
    return m, s


def auto_grid(log_fn, center: float, scale: float, count: int = DEFAULT_GRID, max_expand: int = 60):
    """Grid of ``center +- 8 scale``, widened until boundary mass is below 1e-10."""
    lo, hi = center - 8 * scale, center + 8 * scale
    for _ in range(max_expand):
        g = GridDensity.from_function(log_fn, lo, hi, count, normalize=True)
        p = g.density
        left = 0.5 * g.h * (p[0] + p[1])
        right = 0.5 * g.h * (p[-2] + p[-1])
        if left < BOUNDARY_MASS and right < BOUNDARY_MASS:
            return lo, hi
        width = hi - lo
        if left >= BOUNDARY_MASS:
            lo -= 0.5 * width
        if right >= BOUNDARY_MASS:
            hi += 0.5 * width
    raise GridTooNarrowError("could not find a grid with negligible boundary mass")


def probit_grid_range(counts, model: ProbitModel, count: int = DEFAULT_GRID):
    """(lo, hi) bracketing the probit posterior given ``counts`` with negligible boundary mass."""
    n, ones = counts
    f = _probit_log_post(model, counts)
    if n > 0 and 0 < ones < n:
        guess = model.gamma * float(np.clip(_ndtri(ones / n), -8, 8))
        width = model.gamma / math.sqrt(n) + 1e-3
    else:
        guess, width = model.prior_mean, model.prior_sd
    m, s = _laplace_center(f, guess, width)
    s = min(s, model.prior_sd)
    return auto_grid(f, m, s, count)


def _ndtri(p):
    from scipy.special import ndtri

    return float(ndtri(p))


def grid_posterior_probit(counts, model: ProbitModel, grid=None, count: int = DEFAULT_GRID) -> GridDensity:
    """Normalized probit posterior of theta given counts ``(n, ones)`` on a uniform grid.

    ``grid`` is ``(lo, hi)`` or ``(lo, hi, count)``; when omitted the grid is
    chosen automatically. An explicit grid that leaves more than 1e-10 of the
    mass in its boundary cells raises GridTooNarrowError.
    """
    if grid is None:
        lo, hi = probit_grid_range(counts, model, count)
    else:
        lo, hi = grid[0], grid[1]
        if len(grid) > 2:
            count = int(grid[2])
    g = GridDensity.from_function(_probit_log_post(model, counts), lo, hi, count)
    if grid is not None and g.boundary_mass() > BOUNDARY_MASS:
        raise GridTooNarrowError(f"grid [{lo}, {hi}] is too narrow: boundary mass {g.boundary_mass():.3g}; widen it")
    return g


def common_probit_grid(counts_list: Sequence, model: ProbitModel, count: int = DEFAULT_GRID):
    """A single (lo, hi, count) grid covering the posteriors of every entry in ``counts_list``."""
    ranges = [probit_grid_range(c, model, count) for c in counts_list]
    return min(r[0] for r in ranges), max(r[1] for r in ranges), count


# ---------------------------------------------------------------- divergences


def _check_pair(p: GridDensity, q: GridDensity):
    if not p.same_grid(q):
        raise GridMismatchError("densities are defined on different grids")


def kl_on_grid(p: GridDensity, q: GridDensity) -> float:
    """Trapezoid estimate of KL(p || q); +inf (with a warning) when q vanishes where p does not."""
    _check_pair(p, q)
    if not (p.normalized and q.normalized):
        raise ValueError("both densities must be normalized")
    w, lp, lq = p.weights, p.log_values, q.log_values
    pp = np.exp(lp)
    support = pp > 0
    if np.any(support & ~np.isfinite(lq)):
        warnings.warn("KL divergence is infinite: q vanishes on the support of p", RuntimeWarning, stacklevel=2)
        return math.inf
    return float(np.sum(w[support] * pp[support] * (lp[support] - lq[support])))


def tv_distance(p, q) -> float:
    """Half the L1 distance between two discrete distributions or two grid densities."""
    if isinstance(p, GridDensity) or isinstance(q, GridDensity):
        if not (isinstance(p, GridDensity) and isinstance(q, GridDensity)):
            raise TypeError("cannot compare a grid density with a discrete distribution")
        _check_pair(p, q)
        return float(0.5 * np.sum(p.weights * np.abs(p.density - q.density)))
    a = np.asarray(p, dtype=float)
    b = np.asarray(q, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"supports differ: {a.shape} vs {b.shape}")
    return float(0.5 * np.abs(a - b).sum())


def histogram_tv(samples, density: GridDensity, bins: int = 50, edges=None) -> float:
    """TV between the binned empirical law of ``samples`` and the bin masses of ``density``.

    By default the bins have equal mass under ``density`` (its quantiles),
    the outer bins extending to infinity. Explicit ``edges`` give bins
    ``[e_i, e_{i+1})`` plus two unbounded outer bins.
    """
    s = np.asarray(samples, dtype=float).ravel()
    if edges is None:
        edges = density.quantiles(np.arange(1, bins) / bins)
    edges = np.asarray(edges, dtype=float)
    cdf = np.concatenate([[0.0], density.cdf_at(edges), [1.0]])
    mass = np.diff(cdf)
    freq = np.bincount(np.searchsorted(edges, s, side="right"), minlength=edges.size + 1) / s.size
    return float(0.5 * np.abs(freq - mass).sum())


# ---------------------------------------------------------------- KL bound


@dataclass(frozen=True)
class Prop1Bound:
    psi: float
    b: float
    xi_norm: float
    omega: float

    @property
    def total(self) -> float:
        return self.psi + self.b


def prop1_bound(posterior: GridDensity, counts_full, counts_subset, gamma: float = 1.0) -> Prop1Bound:
    """Subset-free term ``psi`` and subset term ``b`` of the KL upper bound for the probit model.

    The bound is evaluated in the exponential-family form
    ``log f(y | theta) = eta(theta) y - l(theta)`` with natural parameter
    ``eta = logit a(theta)`` and ``l = -log(1 - a(theta))``; expectations are
    under ``posterior`` (the full-data grid posterior) with its own
    quadrature, and the likelihood infimum is taken over the grid.
    ``omega`` is the exact subset term that ``b`` bounds from above.
    """
    if not posterior.normalized:
        raise ValueError("posterior must be normalized")
    N, ones_N = counts_full
    n, ones_U = counts_subset
    if not 0 < n <= N:
        raise ValueError("subset size must lie in (0, N]")
    x = posterior.x
    eta = probit_natural_param(x, gamma)
    ell = probit_log_partition(x, gamma)
    m_eta = posterior.expect(eta)
    log_alpha = float(np.min(probit_loglik(counts_full, x, gamma)))
    psi = (1.0 - n / N) * (m_eta * ones_N - log_alpha) + (n - N) * posterior.expect(ell)
    xi = ones_U / n - ones_N / N
    xi_norm = abs(xi)
    log_w = posterior.log_values + np.log(posterior.weights)
    with np.errstate(over="raise"):
        try:
            b = float(logsumexp(log_w + n * np.abs(eta - m_eta) * xi_norm))
            omega = float(logsumexp(log_w + n * (eta - m_eta) * xi))
        except FloatingPointError as exc:
            raise OverflowError("exponential moment overflows on this grid") from exc
    if not (np.isfinite(b) and np.isfinite(omega)):
        raise OverflowError("exponential moment overflows on this grid")
    if xi_norm == 0.0:
        b = omega = 0.0
    return Prop1Bound(psi=float(psi), b=max(b, 0.0), xi_norm=float(xi_norm), omega=omega)


# ---------------------------------------------------------------- exact enumeration


@dataclass
class EnumeratedTarget:
    """All size-n subsets with their exact normalized weights (and optionally sub-posteriors)."""

    subsets: list
    log_weights: np.ndarray
    distances: np.ndarray
    densities: Optional[list] = None
    index: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.index:
            self.index = {s.key(): i for i, s in enumerate(self.subsets)}

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)

    def frequencies(self, visited: Sequence[SubsetSelection]) -> np.ndarray:
        counts = np.zeros(len(self.subsets))
        for s in visited:
            counts[self.index[s.key()]] += 1
        return counts / max(len(visited), 1)


def enumerate_nu(stat: SummaryStatistic, data: Dataset, n: int, eps: float,
                 budget: int = ENUMERATION_BUDGET) -> EnumeratedTarget:
    """Exact subset weights by enumerating every size-n combination (log-sum-exp normalized)."""
    total = comb(data.N, n, exact=True)
    if total > budget:
        raise EnumerationBudgetError(f"C({data.N}, {n}) = {total} subsets exceeds the budget of {budget}")
    ref = stat.reference(data)
    subsets, dist = [], []
    for combo in itertools.combinations(range(data.N), n):
        s = SubsetSelection._trusted(np.array(combo, dtype=np.int64), data.N)
        subsets.append(s)
        dist.append(float(np.linalg.norm(stat.normalized(data, s) - ref)))
    dist = np.array(dist)
    logw = gaussian_log_kernel(dist, eps)
    logw = np.atleast_1d(logw - logsumexp(logw))
    return EnumeratedTarget(subsets, logw, dist)


def enumerate_marginal(model: ProbitModel, data: Dataset, n: int, eps: float, stat: SummaryStatistic,
                       grid, target: Optional[EnumeratedTarget] = None) -> GridDensity:
    """Exact mixture ``sum_U nu(U) pi(theta | Y_U)`` on a grid.

    ``grid`` is ``(lo, hi, count)``. Sub-posteriors depend on a subset only
    through its counts, so each distinct count is evaluated once. The
    per-subset densities are stored on ``target.densities``.
    """
    target = target or enumerate_nu(stat, data, n, eps)
    lo, hi, count = grid
    by_counts = {}
    per_subset = []
    for s in target.subsets:
        c = model.counts(data, s)
        if c not in by_counts:
            by_counts[c] = GridDensity.from_function(_probit_log_post(model, c), lo, hi, count)
        per_subset.append(by_counts[c])
    target.densities = per_subset
    stacked = np.array([d.log_values for d in per_subset])
    mix = logsumexp(stacked + target.log_weights[:, None], axis=0)
    return GridDensity(float(lo), float(hi), int(count), mix, normalized=False).normalize()


# ---------------------------------------------------------------- chain diagnostics


def refresh_rate(trace, burn_in: int = 0) -> float:
    """Fraction of post-burn-in transitions whose subset refresh was accepted."""
    if burn_in >= len(trace):
        raise ValueError("burn-in leaves an empty window")
    return float(trace.refreshed_subset[burn_in:].mean())


def mean_data_used(trace, burn_in: int = 0) -> float:
    if burn_in >= len(trace):
        raise ValueError("burn-in leaves an empty window")
    return float(trace.data_used[burn_in:].mean())


def running_mean(theta: np.ndarray) -> np.ndarray:
    t = np.asarray(theta, dtype=float)
    if t.ndim == 1:
        t = t[:, None]
    return np.cumsum(t, axis=0) / np.arange(1, t.shape[0] + 1)[:, None]


def mean_distance_curve(trace, theta_star, cost_points=None):
    """``[(cost, d)]`` with d the distance from the running posterior-mean estimate to ``theta_star``.

    At a cost point c the estimate uses every transition completed by cost c;
    points before the first completed transition are skipped. Without
    ``cost_points`` every transition is reported.
    """
    ref = np.atleast_1d(np.asarray(theta_star, dtype=float))
    if ref.size != trace.dim:
        raise ValueError(f"reference has dimension {ref.size}, trace has {trace.dim}")
    dist = np.linalg.norm(running_mean(trace.theta) - ref, axis=1)
    cost = trace.cost
    if cost_points is None:
        return list(zip(cost.tolist(), dist.tolist()))
    out = []
    for c in cost_points:
        k = int(np.searchsorted(cost, c, side="right")) - 1
        if k >= 0:
            out.append((float(c), float(dist[k])))
    return out


def classification_error(points, labels, theta) -> float:
    return float(np.mean(classify_ml(points, theta) != np.asarray(labels)))


def cost_to_error_threshold(trace, test_points, test_labels, threshold: float) -> float:
    """Smallest cumulative cost at which the chain's current theta classifies within ``threshold`` error.

    Rows are scanned in order; the classifier is re-evaluated only when theta
    changes. Returns +inf when the threshold is never met.
    """
    theta = trace.theta
    cost = trace.cost
    prev = None
    for k in range(len(trace)):
        if prev is not None and np.array_equal(theta[k], prev):
            continue
        prev = theta[k]
        if classification_error(test_points, test_labels, prev) <= threshold:
            return float(cost[k])
    return math.inf
