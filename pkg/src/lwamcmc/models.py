"""Likelihood models (probit, ARMA(1,1), labeled two-class Gaussian mixture) and simulators."""

from __future__ import annotations

import math
import warnings
from typing import Optional

import numba
import numpy as np
from scipy import stats as sps
from scipy.special import log_ndtr, ndtr

from .core import (
    IID,
    TIME_SERIES,
    WINDOW,
    ConfigError,
    Dataset,
    ModelContract,
    SubsetSelection,
    as_generator,
)

LOG_2PI = math.log(2.0 * math.pi)


# ---------------------------------------------------------------- probit


def probit_alpha(theta, gamma: float = 1.0):
    """P(X > 0) for X ~ N(theta, gamma^2)."""
    if not gamma > 0:
        raise ConfigError("probit scale gamma must be > 0")
    out = ndtr(np.asarray(theta, dtype=float) / gamma)
    return float(out) if np.ndim(out) == 0 else out


def probit_loglik(counts, theta, gamma: float = 1.0):
    """``ones * log a(theta) + (n - ones) * log(1 - a(theta))`` from counts ``(n, ones)``.

    Both logs are taken with ``log_ndtr``, so saturation of the success
    probability never produces ``-inf`` for representable arguments.
    """
    n, ones = counts
    if not 0 <= ones <= n:
        raise ValueError(f"need 0 <= ones <= n, got counts {counts!r}")
    if not gamma > 0:
        raise ConfigError("probit scale gamma must be > 0")
    if isinstance(theta, float):
        z = theta / gamma
        return float(ones * log_ndtr(z) + (n - ones) * log_ndtr(-z))
    z = np.asarray(theta, dtype=float) / gamma
    out = ones * log_ndtr(z) + (n - ones) * log_ndtr(-z)
    return float(out) if np.ndim(out) == 0 else out


def probit_log_partition(theta, gamma: float = 1.0):
    """``-log(1 - a(theta))``: log-normalizer in the exponential-family form."""
    out = -log_ndtr(-np.asarray(theta, dtype=float) / gamma)
    return float(out) if np.ndim(out) == 0 else out


def probit_natural_param(theta, gamma: float = 1.0):
    """logit of the success probability, the natural parameter paired with the identity statistic."""
    z = np.asarray(theta, dtype=float) / gamma
    out = log_ndtr(z) - log_ndtr(-z)
    return float(out) if np.ndim(out) == 0 else out


class ProbitModel(ModelContract):
    """Binary observations ``Y = 1{X > 0}``, ``X ~ N(theta, gamma^2)``; Gaussian prior on theta."""

    param_dim = 1
    flavor = IID

    def __init__(self, gamma: float = 1.0, prior_mean: float = 0.0, prior_sd: float = 10.0):
        if not gamma > 0:
            raise ConfigError("probit scale gamma must be > 0")
        if not prior_sd > 0:
            raise ConfigError("prior standard deviation must be > 0")
        self.gamma = float(gamma)
        self.prior_mean = float(prior_mean)
        self.prior_sd = float(prior_sd)
        self._last = None

    def log_prior_grid(self, grid):
        z = (np.asarray(grid, dtype=float) - self.prior_mean) / self.prior_sd
        return -0.5 * z * z - math.log(self.prior_sd) - 0.5 * LOG_2PI

    def log_prior(self, theta):
        z = (float(np.asarray(theta, dtype=float).reshape(-1)[0]) - self.prior_mean) / self.prior_sd
        return -0.5 * z * z - math.log(self.prior_sd) - 0.5 * LOG_2PI

    def counts(self, data: Dataset, subset: SubsetSelection):
        last = self._last
        if last is not None and last[0] is subset and last[1] is data:
            return last[2]
        if subset.mode == WINDOW:
            ones = data.observations[subset.start:subset.start + subset.n, 0].sum()
        else:
            ones = data.observations[subset.indices, 0].sum()
        out = (subset.n, int(round(ones)))
        # subsets are immutable, so the counts of the last one queried can be reused
        self._last = (subset, data, out)
        return out

    def log_lik_counts(self, n, ones, theta):
        return probit_loglik((n, ones), theta, self.gamma)

    def log_lik_subset(self, theta, data, subset):
        t = float(np.asarray(theta, dtype=float).reshape(-1)[0])
        return probit_loglik(self.counts(data, subset), t, self.gamma)

    def log_lik_terms(self, theta, data, indices):
        t = float(np.asarray(theta, dtype=float).reshape(-1)[0])
        y = data.observations[indices, 0]
        z = t / self.gamma
        return y * log_ndtr(z) + (1.0 - y) * log_ndtr(-z)

    def sample_prior(self, rng):
        return np.array([self.prior_mean + self.prior_sd * as_generator(rng).standard_normal()])

    def check_data(self, data):
        super().check_data(data)
        y = data.observations[:, 0]
        if not np.all((y == 0) | (y == 1)):
            raise ConfigError("probit data must be binary")


def simulate_probit(N: int, theta_star: float, gamma: float, rng) -> Dataset:
    gen = as_generator(rng)
    x = theta_star + gamma * gen.standard_normal(N)
    y = (x > 0).astype(np.float64)
    return Dataset(y, flavor=IID, meta={"model": "probit", "theta_star": float(theta_star), "gamma": float(gamma)})


# ---------------------------------------------------------------- ARMA(1,1)


@numba.njit(cache=True)
def _innovation_sumsq(y, alpha, beta, drift):
    z = 0.0
    s = 0.0
    for k in range(1, y.shape[0]):
        z = y[k] - (alpha * y[k - 1] + beta * z + drift)
        s += z * z
    return s


@numba.njit(cache=True)
def _innovations(y, alpha, beta, drift):
    z = np.zeros(y.shape[0])
    for k in range(1, y.shape[0]):
        z[k] = y[k] - (alpha * y[k - 1] + beta * z[k - 1] + drift)
    return z


@numba.njit(cache=True)
def _arma_recursion(y0, z, alpha, beta, drift):
    y = np.empty(z.shape[0])
    y[0] = y0
    for k in range(1, z.shape[0]):
        y[k] = alpha * y[k - 1] + beta * z[k - 1] + drift + z[k]
    return y


def arma_innovations(window, theta) -> np.ndarray:
    """Innovations reconstructed along a window, starting from a zero innovation at its first value."""
    y = np.ascontiguousarray(window, dtype=np.float64)
    a, b, g = (float(v) for v in theta)
    return _innovations(y, a, b, g)


def arma_window_loglik(window, theta, sigma: float = 1.0) -> float:
    """Conditional Gaussian log-likelihood of a contiguous window.

    Conditions on the first value, whose innovation is set to 0; every later
    value contributes ``log N(y_k; a y_{k-1} + b z_{k-1} + g, sigma^2)``.
    """
    if not sigma > 0:
        raise ConfigError("ARMA innovation scale sigma must be > 0")
    y = np.ascontiguousarray(window, dtype=np.float64)
    if y.shape[0] < 2:
        raise ValueError("ARMA window needs at least two values")
    a, b, g = (float(v) for v in theta)
    with np.errstate(over="ignore", invalid="ignore"):
        ss = _innovation_sumsq(y, a, b, g)
    m = y.shape[0] - 1
    return -0.5 * m * (LOG_2PI + 2.0 * math.log(sigma)) - 0.5 * ss / (sigma * sigma)


class ArmaModel(ModelContract):
    """ARMA(1,1) with drift, theta = (alpha, beta, drift), known innovation scale.

    With ``stationary`` set, the Gaussian prior is truncated to
    ``|alpha| < 1, |beta| < 1``. Outside that region the innovation recursion
    explodes and a random-walk chain started there can freeze.
    """

    param_dim = 3
    flavor = TIME_SERIES

    def __init__(self, sigma: float = 1.0, prior_sd: float = 10.0, prior_mean=(0.0, 0.0, 0.0),
                 stationary: bool = True):
        if not sigma > 0:
            raise ConfigError("ARMA innovation scale sigma must be > 0")
        if not prior_sd > 0:
            raise ConfigError("prior standard deviation must be > 0")
        self.sigma = float(sigma)
        self.prior_sd = float(prior_sd)
        self.prior_mean = np.asarray(prior_mean, dtype=float)
        self.stationary = bool(stationary)

    def log_prior(self, theta):
        t = np.asarray(theta, dtype=float)
        if self.stationary and not (abs(t[0]) < 1.0 and abs(t[1]) < 1.0):
            return -math.inf
        # truncation constant dropped: it cancels in every ratio
        z = (t - self.prior_mean) / self.prior_sd
        return float(-0.5 * np.dot(z, z) - 3.0 * (math.log(self.prior_sd) + 0.5 * LOG_2PI))

    def window_values(self, data, subset):
        w = subset if subset.mode == WINDOW else subset.as_window()
        if w is None:
            raise ValueError("ARMA likelihood is only tractable on contiguous windows")
        return data.series[w.start:w.start + w.n]

    def log_lik_subset(self, theta, data, subset):
        return arma_window_loglik(self.window_values(data, subset), theta, self.sigma)

    def sample_prior(self, rng):
        gen = as_generator(rng)
        if not self.stationary:
            return self.prior_mean + self.prior_sd * gen.standard_normal(3)
        m, s = self.prior_mean, self.prior_sd
        ab = sps.truncnorm.rvs((-1.0 - m[:2]) / s, (1.0 - m[:2]) / s, loc=m[:2], scale=s, random_state=gen)
        return np.array([ab[0], ab[1], m[2] + s * gen.standard_normal()])


def simulate_arma(N: int, theta_star, sigma: float = 1.0, mu0=(0.0, 1.0), rng=None) -> Dataset:
    """Simulate ``Y_0 ~ N(mu0)``, ``Y_k = a Y_{k-1} + b Z_{k-1} + g + Z_k`` with ``Z ~ N(0, sigma^2)``."""
    a, b, g = (float(v) for v in theta_star)
    if abs(a) >= 1:
        warnings.warn(f"ARMA autoregressive coefficient {a} is not stationary", RuntimeWarning, stacklevel=2)
    if sigma < 0:
        raise ConfigError("sigma must be >= 0")
    gen = as_generator(rng)
    y0 = mu0[0] + mu0[1] * gen.standard_normal()
    z = sigma * gen.standard_normal(N)
    y = _arma_recursion(float(y0), z, a, b, g)
    meta = {"model": "arma", "theta_star": [a, b, g], "sigma": float(sigma), "mu0": list(mu0)}
    return Dataset(y, flavor=TIME_SERIES, meta=meta)


# ---------------------------------------------------------------- Gaussian mixture classification


def _class_logpdf(points, mu, sigma):
    # bivariate normal with covariance diag(sigma^2, sigma^2 / 2)
    s2 = sigma * sigma
    dx = points[..., 0] - mu[0]
    dy = points[..., 1] - mu[1]
    return -LOG_2PI - 0.5 * math.log(0.5 * s2 * s2) - 0.5 * (dx * dx + 2.0 * dy * dy) / s2


def unpack_gaussmix(theta):
    t = np.asarray(theta, dtype=float)
    return (t[0:2], t[2:4]), (t[4], t[5])


def gaussmix_log_terms(points, labels, theta) -> np.ndarray:
    (mu1, mu2), (s1, s2) = unpack_gaussmix(theta)
    if s1 <= 0 or s2 <= 0:
        raise ValueError("class scales must be > 0")
    out = np.where(labels == 0, _class_logpdf(points, mu1, s1), _class_logpdf(points, mu2, s2))
    return out


def gaussmix_loglik(data: Dataset, subset: SubsetSelection, theta) -> float:
    """Sum over the subset of each datum's log-density under its labeled class."""
    if data.labels is None:
        raise ConfigError("Gaussian mixture likelihood requires labeled data")
    if subset.is_full:
        pts, lab = data.observations, data.labels
    else:
        idx = subset.indices
        pts, lab = data.observations[idx], data.labels[idx]
    return float(gaussmix_log_terms(pts, lab, theta).sum())


class GaussMixClassModel(ModelContract):
    """Supervised two-class bivariate Gaussian model.

    theta = (mu1_x, mu1_y, mu2_x, mu2_y, sigma1, sigma2); class j has
    covariance diag(sigma_j^2, sigma_j^2 / 2). Prior: N(0, mean_sd^2) on each
    mean coordinate and N(0, log_sd_sd^2) on each log sigma_j.
    """

    param_dim = 6
    flavor = IID
    requires_labels = True

    def __init__(self, mean_sd: float = 10.0, log_sd_sd: float = 3.0):
        self.mean_sd = float(mean_sd)
        self.log_sd_sd = float(log_sd_sd)

    @property
    def blocks(self):
        return [np.array([0, 1, 4]), np.array([2, 3, 5])]

    @property
    def positive(self):
        return np.array([False, False, False, False, True, True])

    def log_prior(self, theta):
        t = np.asarray(theta, dtype=float)
        if t[4] <= 0 or t[5] <= 0:
            return -math.inf
        zm = t[:4] / self.mean_sd
        ls = np.log(t[4:])
        zs = ls / self.log_sd_sd
        # log-normal density on sigma_j includes the -log sigma_j Jacobian
        return float(-0.5 * np.dot(zm, zm) - 0.5 * np.dot(zs, zs) - ls.sum()
                     - 4 * math.log(self.mean_sd) - 2 * math.log(self.log_sd_sd) - 3.0 * LOG_2PI)

    def log_lik_subset(self, theta, data, subset):
        return gaussmix_loglik(data, subset, theta)

    def log_lik_terms(self, theta, data, indices):
        return gaussmix_log_terms(data.observations[indices], data.labels[indices], theta)

    def sample_prior(self, rng):
        gen = as_generator(rng)
        means = self.mean_sd * gen.standard_normal(4)
        scales = np.exp(self.log_sd_sd * gen.standard_normal(2))
        return np.concatenate([means, scales])


GAUSSMIX_TRUE = {"mu1": (-1.0, 0.0), "mu2": (1.0, 0.0), "sigma1": 0.25, "sigma2": 0.25}


def gaussmix_theta(params: Optional[dict] = None) -> np.ndarray:
    p = dict(GAUSSMIX_TRUE, **(params or {}))
    return np.array([*p["mu1"], *p["mu2"], p["sigma1"], p["sigma2"]], dtype=float)


def simulate_gaussmix(N: int, params: Optional[dict] = None, rng=None) -> Dataset:
    """Balanced two-class sample: labels ~ Bernoulli(1/2), class-conditional Gaussians."""
    gen = as_generator(rng)
    theta = gaussmix_theta(params)
    (mu1, mu2), (s1, s2) = unpack_gaussmix(theta)
    labels = (gen.random(N) < 0.5).astype(np.int64)
    mu = np.where(labels[:, None] == 0, mu1, mu2)
    sd = np.where(labels == 0, s1, s2)
    noise = gen.standard_normal((N, 2)) * np.column_stack([sd, sd / math.sqrt(2.0)])
    meta = {"model": "gaussmix", "theta_star": theta.tolist()}
    return Dataset(mu + noise, labels=labels, flavor=IID, meta=meta)


def classify_ml(points, theta):
    """Class index maximizing the class-conditional log-density; ties go to the lower index."""
    p = np.asarray(points, dtype=float)
    single = p.ndim == 1
    p = np.atleast_2d(p)
    (mu1, mu2), (s1, s2) = unpack_gaussmix(theta)
    l1 = _class_logpdf(p, mu1, s1)
    l2 = _class_logpdf(p, mu2, s2)
    out = (l2 > l1).astype(np.int64)
    return int(out[0]) if single else out


def make_model(kind: str, params: Optional[dict] = None) -> ModelContract:
    params = dict(params or {})
    if kind == "probit":
        return ProbitModel(params.get("gamma", 1.0), params.get("prior_mean", 0.0), params.get("prior_sd", 10.0))
    if kind == "arma":
        return ArmaModel(params.get("sigma", 1.0), params.get("prior_sd", 10.0),
                         stationary=params.get("stationary", True))
    if kind == "gaussmix":
        return GaussMixClassModel(params.get("mean_sd", 10.0), params.get("log_sd_sd", 3.0))
    raise ConfigError(f"unknown model kind {kind!r}")
