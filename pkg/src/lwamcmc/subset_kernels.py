"""Proposal kernels on subsets and the subset accept/reject step."""

from __future__ import annotations

import math

import numba
import numpy as np
from scipy.signal import lfilter
from scipy.special import gammaln

from .core import ConfigError, SubsetSelection, WINDOW, as_generator


class SubsetProposal:
    """``propose(U, rng) -> (U', log R(U', U) - log R(U, U'))``."""

    kind = "abstract"
    symmetric = False

    def propose(self, subset: SubsetSelection, rng):
        raise NotImplementedError

    def log_q(self, subset: SubsetSelection, proposed: SubsetSelection) -> float:
        """log R(subset, proposed): log-probability of proposing ``proposed`` from ``subset``."""
        raise NotImplementedError


def _log_comb(a: int, b: int) -> float:
    return float(gammaln(a + 1) - gammaln(b + 1) - gammaln(a - b + 1))


@numba.njit(cache=True)
def _floyd(pop, u):
    """Uniform random ``len(u)``-subset of ``range(pop)`` (Floyd's algorithm, one uniform per member)."""
    m = u.size
    out = np.empty(m, dtype=np.int64)
    for j in range(m):
        i = pop - m + j
        t = int(u[j] * (i + 1))
        for k in range(j):
            if out[k] == t:
                t = i
                break
        out[j] = t
    return out


@numba.njit(cache=True)
def _swap_indices(idx, N, u):
    """Replace ``len(u) // 2`` members of sorted ``idx`` by as many non-members, all uniformly."""
    n = idx.size
    m = u.size // 2
    out = _floyd(n, u[:m])
    new = _floyd(N - n, u[m:])
    keep = np.ones(n, dtype=np.bool_)
    for j in range(m):
        keep[out[j]] = False
    # r-th non-member (0-based) is r + #{i : idx[i] - i <= r}
    shift = idx - np.arange(n)
    res = np.empty(n, dtype=np.int64)
    c = 0
    for i in range(n):
        if keep[i]:
            res[c] = idx[i]
            c += 1
    for j in range(m):
        res[c] = new[j] + np.searchsorted(shift, new[j], side="right")
        c += 1
    res.sort()
    return res


class UniformSwap(SubsetProposal):
    """Replace ``m`` uniformly chosen members by ``m`` uniformly chosen non-members."""

    kind = "uniform_swap"
    symmetric = True

    def __init__(self, m: int):
        self.m = int(m)
        if self.m < 1:
            raise ConfigError("uniform_swap needs m >= 1")

    @staticmethod
    def default_m(n: int) -> int:
        return max(1, n // 10)

    def _check(self, n, N):
        if self.m > n or N - n < self.m:
            raise ConfigError(f"uniform_swap with m={self.m} is impossible for n={n}, N={N}")

    def propose(self, subset, rng):
        gen = as_generator(rng)
        n, N, m = subset.n, subset.N, self.m
        self._check(n, N)
        new = _swap_indices(subset.indices, N, gen.random(2 * m))
        return SubsetSelection._trusted(new, N), 0.0

    def log_q(self, subset, proposed):
        n, N, m = subset.n, subset.N, self.m
        self._check(n, N)
        shared = np.intersect1d(subset.indices, proposed.indices, assume_unique=True).size
        if shared != n - m:
            return -math.inf
        return -(_log_comb(n, m) + _log_comb(N - n, m))


class UniformSubset(SubsetProposal):
    """Uniform draw among all other subsets of the same shape (free-subset refresh).

    Excluding the current subset makes every proposal a genuine refresh; the
    kernel stays symmetric.
    """

    kind = "uniform_subset"
    symmetric = True

    @staticmethod
    def _log_count(subset) -> float:
        if subset.mode == WINDOW:
            return math.log(subset.N - subset.n + 1)
        return _log_comb(subset.N, subset.n)

    def propose(self, subset, rng):
        gen = as_generator(rng)
        if self._log_count(subset) == 0.0:
            raise ConfigError("free-subset refresh needs at least two possible subsets")
        if subset.mode == WINDOW:
            b = int(gen.integers(0, subset.N - subset.n))
            b += b >= subset.start
            return SubsetSelection.window(b, subset.n, subset.N), 0.0
        while True:
            idx = np.sort(gen.choice(subset.N, size=subset.n, replace=False))
            if not np.array_equal(idx, subset.indices):
                return SubsetSelection._trusted(idx, subset.N), 0.0

    def log_q(self, subset, proposed):
        if proposed == subset:
            return -math.inf
        lc = self._log_count(subset)
        return -(lc + math.log1p(-math.exp(-lc)))


def _two_sided_sums(w: np.ndarray, r: float) -> np.ndarray:
    """``out[x] = sum_c r^|x - c| w[c]`` in O(len(w))."""
    left = lfilter([1.0], [1.0, -r], w)
    right = lfilter([1.0], [1.0, -r], w[::-1])[::-1]
    return left + right - w


class WindowMixture(SubsetProposal):
    """Mixture proposal on window starts in {0, ..., N - n}.

    With probability ``omega`` a local discrete-Laplace move around the
    current start; otherwise a discrete-Laplace move around a uniform random
    offset. Both Laplace laws are renormalized over the valid starts, and the
    random offset is marginalized so the Hastings ratio is exact.
    """

    kind = "window_mixture"

    def __init__(self, omega: float, lam: float, N: int, n: int):
        if not 0.0 < omega < 1.0:
            raise ConfigError("window mixture weight omega must lie in (0, 1)")
        if not lam > 0:
            raise ConfigError("window Laplace rate lambda must be > 0")
        if not 1 <= n <= N:
            raise ConfigError(f"window size {n} invalid for N={N}")
        self.omega = float(omega)
        self.lam = float(lam)
        self.N = int(N)
        self.n = int(n)
        self.n_starts = self.N - self.n + 1
        self.r = math.exp(-self.lam)
        self.log_norm = np.log(_two_sided_sums(np.ones(self.n_starts), self.r))
        inv_norm = np.exp(-self.log_norm)
        self.gbar = _two_sided_sums(inv_norm, self.r) / self.n_starts
        self._log_gbar = np.log(self.gbar)
        # expected |step| of the untruncated law; beyond the range, sample by inversion
        self._use_inversion = 2 * self.r / max(1 - self.r * self.r, 1e-300) > self.n_starts

    def log_laplace(self, x, center) -> float:
        return -self.lam * abs(int(x) - int(center)) - float(self.log_norm[int(center)])

    def laplace_pmf(self, center: int) -> np.ndarray:
        x = np.arange(self.n_starts)
        return np.exp(-self.lam * np.abs(x - center) - self.log_norm[center])

    def _draw_laplace(self, center: int, gen) -> int:
        if self._use_inversion:
            cdf = np.cumsum(self.laplace_pmf(center))
            return int(min(np.searchsorted(cdf, gen.random() * cdf[-1], side="right"), self.n_starts - 1))
        p = 1.0 - self.r
        while True:
            step = int(gen.geometric(p)) - int(gen.geometric(p))
            x = center + step
            if 0 <= x < self.n_starts:
                return x

    def log_q_starts(self, a: int, b: int) -> float:
        local = math.log(self.omega) + self.log_laplace(b, a)
        remote = math.log1p(-self.omega) + float(self._log_gbar[b])
        return float(np.logaddexp(local, remote))

    def proposal_matrix(self) -> np.ndarray:
        """Full start-to-start proposal matrix (small instances only)."""
        x = np.arange(self.n_starts)
        lap = np.exp(-self.lam * np.abs(x[:, None] - x[None, :]) - self.log_norm[:, None])
        return self.omega * lap + (1 - self.omega) * self.gbar[None, :]

    def _check(self, subset):
        if subset.mode != WINDOW or subset.n != self.n or subset.N != self.N:
            raise ValueError(f"window proposal built for n={self.n}, N={self.N} got {subset!r}")

    def propose(self, subset, rng):
        gen = as_generator(rng)
        self._check(subset)
        a = subset.start
        if gen.random() < self.omega:
            center = a
        else:
            center = int(gen.integers(0, self.n_starts))
        b = self._draw_laplace(center, gen)
        log_ratio = self.log_q_starts(b, a) - self.log_q_starts(a, b)
        return SubsetSelection.window(b, self.n, self.N), log_ratio

    def log_q(self, subset, proposed):
        self._check(subset)
        self._check(proposed)
        return self.log_q_starts(subset.start, proposed.start)


def accept_subset(logw_cur: float, logw_prop: float, log_ratio: float, rng) -> bool:
    """Accept the proposed subset with probability ``min(1, exp(log_ratio + logw_prop - logw_cur))``."""
    u = as_generator(rng).random()
    log_a = log_ratio + logw_prop - logw_cur
    if log_a >= 0.0:
        return True
    return u < math.exp(log_a)


def make_subset_proposal(kind: str, params: dict, N: int, n: int) -> SubsetProposal:
    params = dict(params or {})
    if kind == "uniform_swap":
        return UniformSwap(params.get("m", UniformSwap.default_m(n)))
    if kind == "window_mixture":
        return WindowMixture(params.get("omega", 0.9), params.get("lam", 0.1), N, n)
    if kind == "uniform_subset":
        return UniformSubset()
    raise ConfigError(f"unknown subset proposal kind {kind!r}")
