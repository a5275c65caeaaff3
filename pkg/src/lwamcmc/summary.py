"""Summary statistics, the Gaussian subset-weight kernel and the unnormalized subset weight."""

from __future__ import annotations

import warnings
from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .core import ConfigError, CostMeter, Dataset, SubsetSelection, WINDOW


class DegenerateInputWarning(RuntimeWarning):
    """Emitted when a statistic is undefined for its input (e.g. zero variance)."""


def gaussian_log_kernel(distance, eps: float):
    """Log of the unnormalized Gaussian kernel, ``-d^2 / (2 eps^2)``."""
    if not eps > 0:
        raise ConfigError(f"kernel bandwidth must be > 0, got {eps!r}")
    d = np.asarray(distance, dtype=float)
    if np.any(d < 0):
        raise ValueError("distance must be non-negative")
    out = -0.5 * (d / eps) ** 2
    return float(out) if out.ndim == 0 else out


def quantile(values, lam: float) -> float:
    """Linear-interpolation quantile at position ``(len - 1) * lam`` of the sorted values."""
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise ValueError("quantile of an empty list")
    if not 0.0 < lam < 1.0:
        raise ValueError("quantile level must lie in (0, 1)")
    return float(np.quantile(v, lam, method="linear"))


def autocorr(values, lag: int) -> float:
    """Biased lag-``lag`` sample autocorrelation (mean-subtracted, denominator = length)."""
    v = np.asarray(values, dtype=float).ravel()
    if lag < 1:
        raise ValueError("lag must be >= 1")
    if v.size <= lag:
        raise ValueError(f"need more than {lag} values for a lag-{lag} autocorrelation")
    c = v - v.mean()
    denom = np.dot(c, c)
    if denom == 0.0:
        warnings.warn("autocorrelation of a constant series is undefined; returning 0",
                      DegenerateInputWarning, stacklevel=2)
        return 0.0
    return float(np.dot(c[:-lag], c[lag:]) / denom)


def _autocorr_rows(rows: np.ndarray, lags) -> np.ndarray:
    c = rows - rows.mean(axis=1, keepdims=True)
    denom = np.einsum("ij,ij->i", c, c)
    out = np.empty((rows.shape[0], len(lags)))
    for j, p in enumerate(lags):
        out[:, j] = np.einsum("ij,ij->i", c[:, :-p], c[:, p:])
    safe = denom > 0
    out[safe] /= denom[safe, None]
    out[~safe] = 0.0
    return out


class SummaryStatistic:
    """Per-datum normalized statistic of a subset, ``S_n(Y_U) / n`` or an intensive analogue."""

    name = "abstract"
    dim = 1

    def normalized(self, data: Dataset, subset: SubsetSelection) -> np.ndarray:
        raise NotImplementedError

    def reference(self, data: Dataset) -> np.ndarray:
        return self.normalized(data, SubsetSelection.full(data.N))

    def check_data(self, data: Dataset) -> None:
        pass

    def __repr__(self):
        return f"{type(self).__name__}()"


class IdentityMean(SummaryStatistic):
    """Mean observation vector over the subset (identity sufficient statistic)."""

    name = "identity_mean"

    def __init__(self, m: int = 1):
        self.dim = int(m)

    def normalized(self, data, subset):
        if subset.mode == WINDOW:
            block = data.observations[subset.start:subset.start + subset.n]
        else:
            block = data.observations[subset.indices]
        return np.add.reduce(block, axis=0) / subset.n


class ClassCounts(SummaryStatistic):
    """Per-class counts in the subset divided by its size."""

    name = "class_counts"

    def __init__(self, n_classes: int = 2):
        self.dim = int(n_classes)

    def check_data(self, data):
        if data.labels is None:
            raise ConfigError("class_counts statistic requires labeled data")

    def normalized(self, data, subset):
        self.check_data(data)
        labels = data.labels[subset.indices] if subset.mode != WINDOW else \
            data.labels[subset.start:subset.start + subset.n]
        return np.bincount(labels, minlength=self.dim)[: self.dim] / subset.n


class _SeriesStatistic(SummaryStatistic):
    """Statistic of the (time-ordered) values of a subset of a scalar series.

    These statistics are intensive (quantiles, correlations, extremes), so
    they are used as computed, without a further division by n.
    """

    def values(self, data, subset):
        if subset.mode == WINDOW:
            return data.series[subset.start:subset.start + subset.n]
        return data.series[subset.indices]

    def normalized(self, data, subset):
        return self.of_values(self.values(data, subset))

    def of_values(self, v: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def window_table(self, series: np.ndarray, n: int) -> np.ndarray:
        """Statistic of every length-``n`` window, one row per start."""
        rows = sliding_window_view(np.asarray(series, dtype=float), n)
        return np.vstack([self.of_values(r) for r in rows])


class ArmaS0(_SeriesStatistic):
    """(q.2, q.5, q.8, rho_1..rho_5): three quantiles and five autocorrelations."""

    name = "arma_s0"

    def __init__(self, levels=(0.2, 0.5, 0.8), lags=(1, 2, 3, 4, 5)):
        self.levels = tuple(levels)
        self.lags = tuple(lags)
        self.dim = len(self.levels) + len(self.lags)

    def of_values(self, v):
        q = np.quantile(v, self.levels, method="linear")
        return np.concatenate([q, _autocorr_rows(v[None, :], self.lags)[0]])

    def window_table(self, series, n):
        rows = sliding_window_view(np.asarray(series, dtype=float), n)
        out = np.empty((rows.shape[0], self.dim))
        chunk = 20_000
        for lo in range(0, rows.shape[0], chunk):
            r = rows[lo:lo + chunk]
            out[lo:lo + chunk, : len(self.levels)] = np.quantile(r, self.levels, axis=1, method="linear").T
            out[lo:lo + chunk, len(self.levels):] = _autocorr_rows(r, self.lags)
        return out


class ArmaS1(ArmaS0):
    """(rho_1..rho_15): fifteen autocorrelations."""

    name = "arma_s1"

    def __init__(self, lags=tuple(range(1, 16))):
        super().__init__(levels=(), lags=lags)

    def of_values(self, v):
        return _autocorr_rows(v[None, :], self.lags)[0]

    def window_table(self, series, n):
        rows = sliding_window_view(np.asarray(series, dtype=float), n)
        out = np.empty((rows.shape[0], self.dim))
        chunk = 20_000
        for lo in range(0, rows.shape[0], chunk):
            out[lo:lo + chunk] = _autocorr_rows(rows[lo:lo + chunk], self.lags)
        return out


class ArmaS2(_SeriesStatistic):
    """(min, max) of the subset values, taken raw."""

    name = "arma_s2"
    dim = 2

    def of_values(self, v):
        return np.array([v.min(), v.max()])

    def window_table(self, series, n):
        rows = sliding_window_view(np.asarray(series, dtype=float), n)
        return np.column_stack([rows.min(axis=1), rows.max(axis=1)])


class ScaledStatistic(SummaryStatistic):
    """Componentwise rescaling of another statistic (optional per-component weights)."""

    def __init__(self, base: SummaryStatistic, scale):
        self.base = base
        self.scale = np.asarray(scale, dtype=float)
        if self.scale.shape != (base.dim,) or np.any(self.scale <= 0):
            raise ConfigError("component scales must be positive, one per statistic component")
        self.name = base.name
        self.dim = base.dim

    def normalized(self, data, subset):
        return self.base.normalized(data, subset) * self.scale

    def check_data(self, data):
        self.base.check_data(data)


class WindowStatCache(SummaryStatistic):
    """Memo of a series statistic over every window start of one dataset.

    Lookups return exactly what the wrapped statistic computes; callers still
    charge ``n`` statistic touches per evaluation.
    """

    def __init__(self, base: _SeriesStatistic, data: Dataset, n: int):
        self.base = base
        self.name = base.name
        self.dim = base.dim
        self.n = int(n)
        self._data_id = id(data)
        self.table = base.window_table(data.series, self.n)
        self._ref = base.reference(data)

    def normalized(self, data, subset):
        if subset.mode == WINDOW and subset.n == self.n and id(data) == self._data_id:
            return self.table[subset.start]
        return self.base.normalized(data, subset)

    def reference(self, data):
        if id(data) == self._data_id:
            return self._ref
        return self.base.reference(data)

    def window_distances(self, ref: np.ndarray) -> np.ndarray:
        return np.sqrt(((self.table - ref) ** 2).sum(axis=1))


def make_statistic(kind: str, params: Optional[dict] = None, data: Optional[Dataset] = None) -> SummaryStatistic:
    """Build a statistic by name.

    kinds: identity_mean, arma_s0, arma_s1, arma_s2, class_counts. When
    ``data`` is given, class_counts is checked for labels and its class
    count is read from the data.
    """
    params = dict(params or {})
    scale = params.pop("scale", None)
    if kind == "identity_mean":
        stat = IdentityMean(params.get("m", data.m if data is not None else 1))
    elif kind == "arma_s0":
        stat = ArmaS0(**params)
    elif kind == "arma_s1":
        stat = ArmaS1(**params)
    elif kind == "arma_s2":
        stat = ArmaS2()
    elif kind == "class_counts":
        if data is not None and data.labels is None:
            raise ConfigError("class_counts statistic requires labeled data")
        n_classes = params.get("n_classes", data.n_classes if data is not None else 2)
        stat = ClassCounts(max(int(n_classes), 2))
    else:
        raise ConfigError(f"unknown summary statistic kind {kind!r}")
    if scale is not None:
        stat = ScaledStatistic(stat, scale)
    return stat


def stat_distance(stat: SummaryStatistic, data: Dataset, subset: SubsetSelection, ref,
                  meter: Optional[CostMeter] = None) -> float:
    """Euclidean distance between the subset's normalized statistic and ``ref``."""
    ref = np.asarray(ref, dtype=float)
    if ref.shape != (stat.dim,):
        raise ValueError(f"reference has shape {ref.shape}, statistic dimension is {stat.dim}")
    s = stat.normalized(data, subset)
    if meter is not None:
        meter.add_stat(subset.n)
    return float(np.sqrt(np.sum((s - ref) ** 2)))


def log_subset_weight_unnorm(stat, data, subset, eps, ref, meter=None) -> float:
    """log of the unnormalized subset weight; differs from log nu(U) by a U-free constant."""
    return gaussian_log_kernel(stat_distance(stat, data, subset, ref, meter), eps)
