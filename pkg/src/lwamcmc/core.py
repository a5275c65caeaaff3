"""Shared domain types: datasets, subsets, the model contract, RNG streams, cost meter."""

from __future__ import annotations

import abc
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

IID = "iid"
TIME_SERIES = "time_series"
INDEX_SET = "index_set"
WINDOW = "window"


class ConfigError(ValueError):
    """Invalid configuration or parameter value."""


class DensityUnderflowError(FloatingPointError):
    """A log-density evaluated to a non-finite value."""

    def __init__(self, theta, subset, value):
        self.theta = np.array(theta, dtype=float)
        self.subset = subset
        self.value = value
        super().__init__(f"density underflow: log-density {value!r} at theta={self.theta.tolist()} on {subset!r}")


class Dataset:
    """Immutable observation store.

    ``observations`` is an (N, m) float array; ``labels`` an optional length-N
    integer array with values in ``{0, ..., C-1}``.
    """

    __slots__ = ("observations", "labels", "flavor", "meta")

    def __init__(self, observations, labels=None, flavor: str = IID, meta: Optional[dict] = None):
        obs = np.array(observations, dtype=np.float64)
        if obs.ndim == 1:
            obs = obs[:, None]
        if obs.ndim != 2 or obs.shape[0] < 1 or obs.shape[1] < 1:
            raise ValueError(f"observations must be a non-empty (N, m) array, got shape {obs.shape}")
        if flavor not in (IID, TIME_SERIES):
            raise ValueError(f"unknown dataset flavor {flavor!r}")
        obs.setflags(write=False)
        if labels is not None:
            labels = np.array(labels, dtype=np.int64)
            if labels.shape != (obs.shape[0],):
                raise ValueError("labels must have one entry per observation")
            if labels.min() < 0:
                raise ValueError("labels must be non-negative class indices")
            labels.setflags(write=False)
        object.__setattr__(self, "observations", obs)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "flavor", flavor)
        object.__setattr__(self, "meta", dict(meta or {}))

    def __setattr__(self, name, value):
        raise AttributeError("Dataset is immutable")

    @property
    def N(self) -> int:
        return self.observations.shape[0]

    @property
    def m(self) -> int:
        return self.observations.shape[1]

    @property
    def n_classes(self) -> int:
        if self.labels is None:
            return 0
        return int(self.labels.max()) + 1

    @property
    def series(self) -> np.ndarray:
        """First observation coordinate as a flat array (the time series itself)."""
        return self.observations[:, 0]

    def __repr__(self):
        lab = "labeled" if self.labels is not None else "unlabeled"
        return f"Dataset(N={self.N}, m={self.m}, flavor={self.flavor}, {lab})"


class SubsetSelection:
    """The latent subset variable: a canonical index set or a contiguous window.

    Index sets are sorted and must not contain duplicates. Equality is
    structural, so a window and the equivalent index set compare equal.
    """

    __slots__ = ("mode", "n", "N", "start", "_indices", "_key")

    def __init__(self, mode, n, N, start=None, indices=None):
        self.mode = mode
        self.n = int(n)
        self.N = int(N)
        self.start = start
        self._indices = indices
        self._key = None

    @classmethod
    def from_indices(cls, indices, N: int) -> "SubsetSelection":
        idx = np.unique(np.asarray(indices, dtype=np.int64))
        if idx.size != len(indices):
            raise ValueError("subset indices must not contain duplicates")
        if idx.size == 0 or idx[0] < 0 or idx[-1] >= N:
            raise ValueError(f"subset indices must be non-empty and lie in [0, {N})")
        idx.setflags(write=False)
        return cls(INDEX_SET, idx.size, N, indices=idx)

    @classmethod
    def _trusted(cls, sorted_indices: np.ndarray, N: int) -> "SubsetSelection":
        # caller guarantees sorted, unique, in range
        sorted_indices.setflags(write=False)
        return cls(INDEX_SET, sorted_indices.size, N, indices=sorted_indices)

    @classmethod
    def window(cls, start: int, n: int, N: int) -> "SubsetSelection":
        start = int(start)
        if not 1 <= n <= N:
            raise ValueError(f"window size {n} must lie in [1, {N}]")
        if not 0 <= start <= N - n:
            raise ValueError(f"window start {start} must lie in [0, {N - n}]")
        return cls(WINDOW, n, N, start=start)

    @classmethod
    def full(cls, N: int) -> "SubsetSelection":
        return cls.window(0, N, N)

    @property
    def indices(self) -> np.ndarray:
        if self._indices is None:
            idx = np.arange(self.start, self.start + self.n, dtype=np.int64)
            idx.setflags(write=False)
            self._indices = idx
        return self._indices

    @property
    def is_full(self) -> bool:
        return self.n == self.N

    def as_window(self) -> Optional["SubsetSelection"]:
        """The equivalent window selection, or None when not contiguous."""
        if self.mode == WINDOW:
            return self
        idx = self._indices
        if idx[-1] - idx[0] == self.n - 1:
            return SubsetSelection.window(int(idx[0]), self.n, self.N)
        return None

    def key(self) -> tuple:
        if self._key is None:
            self._key = tuple(int(i) for i in self.indices)
        return self._key

    def __eq__(self, other):
        if not isinstance(other, SubsetSelection):
            return NotImplemented
        if self.n != other.n or self.N != other.N:
            return False
        if self.mode == WINDOW and other.mode == WINDOW:
            return self.start == other.start
        return self.indices.tobytes() == other.indices.tobytes()

    def __hash__(self):
        return hash((self.N, self.key()))

    def __len__(self):
        return self.n

    def __repr__(self):
        if self.mode == WINDOW:
            return f"SubsetSelection(window start={self.start}, n={self.n}, N={self.N})"
        shown = self.indices[:8].tolist()
        tail = ", ..." if self.n > 8 else ""
        return f"SubsetSelection(indices={shown}{tail}, n={self.n}, N={self.N})"


def validate_subset(data: Dataset, subset: SubsetSelection) -> None:
    if subset.N != data.N:
        raise ValueError(f"subset built for N={subset.N} used with dataset of N={data.N}")


@dataclass
class CostMeter:
    """Deterministic cost accounting in per-datum evaluations."""

    lik_evals: int = 0
    stat_touches: int = 0

    def add_lik(self, k: int) -> None:
        self.lik_evals += int(k)

    def add_stat(self, k: int) -> None:
        self.stat_touches += int(k)

    @property
    def total(self) -> int:
        return self.lik_evals + self.stat_touches

    def copy(self) -> "CostMeter":
        return CostMeter(self.lik_evals, self.stat_touches)


class ModelContract(abc.ABC):
    """Likelihood model interface consumed by the samplers.

    Subclasses describe the parameter layout through ``param_dim``,
    ``blocks`` (index groups updated together) and ``positive``
    (coordinates constrained to be > 0, moved multiplicatively).
    """

    param_dim: int = 1
    requires_labels: bool = False
    flavor: Optional[str] = None

    @property
    def blocks(self) -> list:
        return [np.arange(self.param_dim)]

    @property
    def positive(self) -> np.ndarray:
        return np.zeros(self.param_dim, dtype=bool)

    @abc.abstractmethod
    def log_prior(self, theta) -> float:
        ...

    @abc.abstractmethod
    def log_lik_subset(self, theta, data: Dataset, subset: SubsetSelection) -> float:
        ...

    def log_lik_terms(self, theta, data: Dataset, indices: np.ndarray) -> np.ndarray:
        """Per-datum log-likelihood terms (iid models only)."""
        raise NotImplementedError(f"{type(self).__name__} has no per-datum likelihood terms")

    def sample_prior(self, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def check_data(self, data: Dataset) -> None:
        if self.requires_labels and data.labels is None:
            raise ConfigError(f"{type(self).__name__} requires labeled data")
        if self.flavor is not None and data.flavor != self.flavor:
            raise ConfigError(f"{type(self).__name__} expects {self.flavor} data, got {data.flavor}")


def log_sub_posterior(model: ModelContract, data: Dataset, subset: SubsetSelection, theta,
                      meter: Optional[CostMeter] = None) -> float:
    """Unnormalized log sub-posterior ``log p(theta) + log f(Y_U | theta)``.

    Charges ``n`` likelihood evaluations to ``meter``. Raises
    DensityUnderflowError when either term is not finite.
    """
    theta = np.asarray(theta, dtype=float)
    lp = model.log_prior(theta)
    if not np.isfinite(lp):
        raise DensityUnderflowError(theta, subset, lp)
    ll = model.log_lik_subset(theta, data, subset)
    if meter is not None:
        meter.add_lik(subset.n)
    if not np.isfinite(ll):
        raise DensityUnderflowError(theta, subset, ll)
    return float(lp + ll)


@dataclass(frozen=True)
class RngStream:
    """Splittable counter-based random stream (Philox keyed by a seed sequence).

    ``path`` holds the chain of split ids from the root; ``stream_id`` is its
    last element. Identical (seed, path) pairs always produce identical draws.
    """

    seed: int
    path: tuple = ()
    _gen: np.random.Generator = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.seed < 0 or self.seed >= 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        ss = np.random.SeedSequence(entropy=int(self.seed), spawn_key=tuple(int(p) for p in self.path))
        object.__setattr__(self, "_gen", np.random.Generator(np.random.Philox(ss)))

    @property
    def stream_id(self) -> int:
        return self.path[-1] if self.path else 0

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    def __getattr__(self, name):
        # delegate draws (random, normal, integers, ...) to the generator
        if name.startswith("_"):
            raise AttributeError(name)
        return getattr(self._gen, name)


def split_stream(root: RngStream, stream_id: int) -> RngStream:
    """Child stream ``stream_id`` of ``root``; deterministic and independent of siblings."""
    if stream_id < 0:
        raise ValueError("stream id must be non-negative")
    return RngStream(root.seed, root.path + (int(stream_id),))


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator
    if isinstance(rng, np.random.Generator):
        return rng
    if rng is None or isinstance(rng, (int, np.integer)):
        return RngStream(int(rng or 0)).generator
    raise TypeError(f"cannot build a random generator from {type(rng).__name__}")


def full_selection(data: Dataset) -> SubsetSelection:
    return SubsetSelection.full(data.N)


def check_finite_theta(theta: Sequence[float]) -> np.ndarray:
    arr = np.asarray(theta, dtype=float)
    if arr.ndim != 1 or arr.size < 1:
        raise ValueError("parameter vector must be one-dimensional and non-empty")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"parameter vector has non-finite entries: {arr.tolist()}")
    return arr
