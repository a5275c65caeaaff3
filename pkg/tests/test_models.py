import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lwamcmc.core import ConfigError, Dataset, RngStream, SubsetSelection
from lwamcmc.models import (
    ArmaModel,
    GaussMixClassModel,
    ProbitModel,
    arma_window_loglik,
    classify_ml,
    gaussmix_loglik,
    gaussmix_theta,
    make_model,
    probit_alpha,
    probit_loglik,
    simulate_arma,
    simulate_gaussmix,
    simulate_probit,
)
from lwamcmc.summary import autocorr
from oracles import (
    ar1_conditional_loglik,
    arma_loglik_loop,
    gaussmix_loglik_loop,
    normal_cdf_series,
    probit_loglik_per_datum,
)


def test_probit_alpha_values():
    assert probit_alpha(0.0, 1.0) == 0.5
    assert probit_alpha(1.0, 1.0) == pytest.approx(0.84134, abs=1e-5)
    assert probit_alpha(1.0, 1.0) == pytest.approx(normal_cdf_series(1.0), abs=1e-12)


@given(st.floats(-6, 6), st.floats(0.1, 5))
@settings(max_examples=100, deadline=None)
def test_probit_alpha_reflection(theta, gamma):
    assert probit_alpha(-theta, gamma) == pytest.approx(1 - probit_alpha(theta, gamma), abs=1e-14)


def test_probit_alpha_gamma_guard():
    with pytest.raises(ConfigError):
        probit_alpha(0.0, 0.0)


def test_probit_loglik_examples():
    assert probit_loglik((2, 1), 0.0, 1.0) == pytest.approx(2 * math.log(0.5))
    vals = [probit_loglik((10, 10), t) for t in (2.0, 5.0, 10.0)]
    assert all(v < 0 for v in vals) and vals[0] < vals[1] < vals[2]
    assert vals[-1] > -1e-20


def test_probit_loglik_far_tail_is_finite():
    assert np.isfinite(probit_loglik((10, 5), 40.0))


@given(st.lists(st.integers(0, 1), min_size=1, max_size=30), st.floats(-3, 3), st.floats(0.3, 3))
@settings(max_examples=100, deadline=None)
def test_probit_loglik_matches_per_datum(y, theta, gamma):
    got = probit_loglik((len(y), sum(y)), theta, gamma)
    assert got == pytest.approx(probit_loglik_per_datum(y, theta, gamma), abs=1e-10)


def test_probit_loglik_bad_counts():
    with pytest.raises(ValueError):
        probit_loglik((3, 4), 0.0)


def test_probit_model_counts_and_terms():
    d = Dataset([1, 0, 1, 1, 0])
    m = ProbitModel()
    u = SubsetSelection.from_indices([0, 1, 3], 5)
    assert m.counts(d, u) == (3, 2)
    terms = m.log_lik_terms([0.4], d, u.indices)
    assert terms.sum() == pytest.approx(m.log_lik_subset([0.4], d, u), abs=1e-12)


def test_probit_requires_binary():
    with pytest.raises(ConfigError):
        ProbitModel().check_data(Dataset([0.0, 0.5]))


@pytest.mark.parametrize("theta,expected", [(0.0, 0.5), (1.0, 0.841)])
def test_simulate_probit_fraction(theta, expected):
    d = simulate_probit(10_000, theta, 1.0, RngStream(11))
    assert d.observations.mean() == pytest.approx(expected, abs=0.02)


def test_simulate_probit_deterministic():
    a = simulate_probit(1000, 1.0, 1.0, RngStream(5))
    b = simulate_probit(1000, 1.0, 1.0, RngStream(5))
    np.testing.assert_array_equal(a.observations, b.observations)


def test_arma_window_examples():
    assert arma_window_loglik([0.0, 0.0], (0, 0, 0), 1.0) == pytest.approx(-0.5 * math.log(2 * math.pi))
    c = 1.7
    assert arma_window_loglik([0.0, c], (0, 0, 0), 1.0) == pytest.approx(-0.5 * math.log(2 * math.pi) - c * c / 2)


@given(st.lists(st.floats(-5, 5), min_size=2, max_size=30), st.floats(-0.95, 0.95), st.floats(-1, 1),
       st.floats(0.2, 3))
@settings(max_examples=100, deadline=None)
def test_arma_pure_ar1_matches_oracle(y, alpha, drift, sigma):
    got = arma_window_loglik(y, (alpha, 0.0, drift), sigma)
    assert got == pytest.approx(ar1_conditional_loglik(y, alpha, drift, sigma), abs=1e-10)


@given(st.lists(st.floats(-5, 5), min_size=2, max_size=30), st.floats(-0.9, 0.9), st.floats(-0.9, 0.9),
       st.floats(-1, 1))
@settings(max_examples=100, deadline=None)
def test_arma_matches_loop_oracle(y, alpha, beta, drift):
    got = arma_window_loglik(y, (alpha, beta, drift), 1.3)
    assert got == pytest.approx(arma_loglik_loop(y, alpha, beta, drift, 1.3), abs=1e-9)


def test_arma_window_too_short():
    with pytest.raises(ValueError):
        arma_window_loglik([1.0], (0, 0, 0))


def test_arma_model_rejects_scattered_subsets():
    d = Dataset(np.arange(10.0), flavor="time_series")
    with pytest.raises(ValueError):
        ArmaModel().log_lik_subset((0, 0, 0), d, SubsetSelection.from_indices([0, 2, 4], 10))
    w = ArmaModel().log_lik_subset((0, 0, 0), d, SubsetSelection.from_indices([2, 3, 4], 10))
    assert w == pytest.approx(arma_window_loglik([2.0, 3.0, 4.0], (0, 0, 0)))


def test_arma_prior_stationary_region():
    m = ArmaModel()
    assert m.log_prior([1.2, 0.0, 0.0]) == -math.inf
    assert m.log_prior([0.0, -1.0, 0.0]) == -math.inf
    assert np.isfinite(m.log_prior([0.5, 0.7, 25.0]))
    draws = np.array([m.sample_prior(RngStream(s)) for s in range(200)])
    assert np.all(np.abs(draws[:, :2]) < 1.0)
    assert draws[:, 2].std() > 5.0
    free = ArmaModel(stationary=False)
    assert np.isfinite(free.log_prior([1.2, -3.0, 0.0]))


def test_simulate_arma_white_noise():
    y = simulate_arma(100_000, (0, 0, 0), rng=RngStream(1)).series
    assert abs(autocorr(y[1:], 1)) < 0.02


def test_simulate_arma_ar1():
    y = simulate_arma(100_000, (0.5, 0, 0), rng=RngStream(2)).series
    assert autocorr(y, 1) == pytest.approx(0.5, abs=0.02)


def test_simulate_arma_deterministic():
    a = simulate_arma(500, (0.5, 0.7, 0.1), rng=RngStream(3)).series
    b = simulate_arma(500, (0.5, 0.7, 0.1), rng=RngStream(3)).series
    np.testing.assert_array_equal(a, b)


def test_gaussmix_single_datum_at_mean():
    theta = [-1.0, 0.0, 1.0, 0.0, 1.0, 1.0]
    d = Dataset([[-1.0, 0.0]], labels=[0])
    expected = -math.log(2 * math.pi) - 0.5 * math.log(0.5)
    assert gaussmix_loglik(d, SubsetSelection.full(1), theta) == pytest.approx(expected, abs=1e-12)


def test_gaussmix_additive_in_duplicates():
    theta = gaussmix_theta()
    d = Dataset([[0.3, -0.2], [0.3, -0.2]], labels=[1, 1])
    one = gaussmix_loglik(d, SubsetSelection.from_indices([0], 2), theta)
    two = gaussmix_loglik(d, SubsetSelection.full(2), theta)
    assert two == pytest.approx(2 * one, abs=1e-12)


def test_gaussmix_matches_loop_oracle(gen):
    d = simulate_gaussmix(40, rng=RngStream(4))
    for _ in range(5):
        theta = np.concatenate([gen.normal(size=4), gen.uniform(0.2, 2.0, size=2)])
        got = gaussmix_loglik(d, SubsetSelection.full(40), theta)
        assert got == pytest.approx(gaussmix_loglik_loop(d.observations, d.labels, theta), abs=1e-10)


def test_simulate_gaussmix_moments():
    d = simulate_gaussmix(100_000, rng=RngStream(6))
    assert d.labels.mean() == pytest.approx(0.5, abs=0.01)
    c1 = d.observations[d.labels == 0]
    np.testing.assert_allclose(c1.mean(axis=0), [-1.0, 0.0], atol=0.01)
    np.testing.assert_allclose(c1.var(axis=0), [0.0625, 0.03125], rtol=0.1)


def test_classify_ml_examples():
    theta = gaussmix_theta()
    assert classify_ml([-1.0, 0.0], theta) == 0
    assert classify_ml([0.0, 0.4], theta) == 0
    assert classify_ml([1.0, 0.0], theta) == 1


def test_classify_bayes_error_is_measured():
    from lwamcmc.analysis import classification_error

    test = simulate_gaussmix(100_000, rng=RngStream(8))
    err = classification_error(test.observations, test.labels, gaussmix_theta())
    # class means are 8 sd apart on the first axis: the Bayes error is tiny but measurable
    assert 0.0 <= err < 1e-3


def test_gaussmix_prior_and_blocks():
    m = GaussMixClassModel()
    assert m.log_prior([0, 0, 0, 0, -1.0, 1.0]) == -math.inf
    assert [b.tolist() for b in m.blocks] == [[0, 1, 4], [2, 3, 5]]
    assert np.all(m.sample_prior(RngStream(0))[4:] > 0)


def test_make_model():
    assert isinstance(make_model("probit", {"gamma": 2.0}), ProbitModel)
    assert isinstance(make_model("arma"), ArmaModel)
    with pytest.raises(ConfigError):
        make_model("logit")
