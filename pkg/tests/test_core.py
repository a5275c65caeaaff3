import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lwamcmc.core import (
    ConfigError,
    CostMeter,
    Dataset,
    DensityUnderflowError,
    RngStream,
    SubsetSelection,
    as_generator,
    check_finite_theta,
    log_sub_posterior,
    split_stream,
)
from lwamcmc.models import ArmaModel, ProbitModel


def test_dataset_is_immutable():
    d = Dataset([1.0, 2.0, 3.0])
    assert d.N == 3 and d.m == 1
    with pytest.raises(AttributeError):
        d.flavor = "time_series"
    with pytest.raises(ValueError):
        d.observations[0, 0] = 5.0


@pytest.mark.parametrize("bad", [[], [[]]])
def test_dataset_rejects_empty(bad):
    with pytest.raises(ValueError):
        Dataset(bad)


def test_dataset_label_checks():
    with pytest.raises(ValueError):
        Dataset([[0, 0], [1, 1]], labels=[0])
    with pytest.raises(ValueError):
        Dataset([[0, 0], [1, 1]], labels=[0, -1])
    assert Dataset([[0, 0], [1, 1]], labels=[0, 1]).n_classes == 2


def test_subset_rejects_duplicates_and_range():
    with pytest.raises(ValueError):
        SubsetSelection.from_indices([1, 1, 2], 5)
    with pytest.raises(ValueError):
        SubsetSelection.from_indices([0, 5], 5)
    with pytest.raises(ValueError):
        SubsetSelection.window(4, 2, 5)


def test_window_equals_index_set():
    w = SubsetSelection.window(2, 3, 10)
    s = SubsetSelection.from_indices([4, 2, 3], 10)
    assert w == s and hash(w) == hash(s)
    assert s.as_window().start == 2
    assert SubsetSelection.from_indices([0, 2], 10).as_window() is None


def test_cost_meter():
    m = CostMeter()
    m.add_lik(5)
    m.add_stat(3)
    assert m.total == 8
    c = m.copy()
    c.add_lik(1)
    assert m.total == 8


def test_log_sub_posterior_probit_example():
    data = Dataset([1, 1, 0, 0, 1])
    model = ProbitModel(gamma=1.0)
    u = SubsetSelection.from_indices([0, 1, 2], data.N)
    meter = CostMeter()
    v = log_sub_posterior(model, data, u, [0.0], meter)
    assert v == pytest.approx(model.log_prior([0.0]) + 3 * math.log(0.5), abs=1e-12)
    assert meter.lik_evals == 3


def test_log_sub_posterior_full_subset_is_full_posterior():
    data = Dataset([1, 0, 1, 1])
    model = ProbitModel()
    full = SubsetSelection.full(data.N)
    theta = 0.3
    direct = model.log_prior([theta]) + sum(model.log_lik_terms([theta], data, np.arange(4)))
    assert log_sub_posterior(model, data, full, [theta]) == pytest.approx(direct, abs=1e-12)


def test_log_sub_posterior_arma_two_point_window():
    data = Dataset([0.0, 0.0], flavor="time_series")
    model = ArmaModel(sigma=1.0)
    u = SubsetSelection.window(0, 2, 2)
    theta = [0.0, 0.0, 0.0]
    expected = model.log_prior(theta) - 0.5 * math.log(2 * math.pi)
    assert log_sub_posterior(model, data, u, theta) == pytest.approx(expected, abs=1e-12)


def test_log_sub_posterior_underflow():
    data = Dataset([1.0, 1.0])
    model = ProbitModel(prior_sd=1.0)
    with pytest.raises(DensityUnderflowError):
        log_sub_posterior(model, data, SubsetSelection.full(2), [1e200])


def test_split_stream_deterministic():
    a = split_stream(RngStream(1), 0).random(10_000)
    b = split_stream(RngStream(1), 0).random(10_000)
    np.testing.assert_array_equal(a, b)


@pytest.mark.parametrize("other", [(1, 1), (2, 0)])
def test_split_stream_distinct(other):
    a = split_stream(RngStream(1), 0).random(10_000)
    b = split_stream(RngStream(other[0]), other[1]).random(10_000)
    assert np.any(a != b)


@given(st.integers(0, 2**64 - 1), st.integers(0, 2**20))
@settings(max_examples=30, deadline=None)
def test_split_stream_replayable(seed, sid):
    x = split_stream(RngStream(seed), sid).integers(0, 2**62, size=4)
    y = split_stream(RngStream(seed), sid).integers(0, 2**62, size=4)
    np.testing.assert_array_equal(x, y)


def test_split_stream_rejects_negative():
    with pytest.raises(ValueError):
        split_stream(RngStream(0), -1)
    with pytest.raises(ValueError):
        RngStream(-3)


def test_as_generator():
    assert isinstance(as_generator(RngStream(3)), np.random.Generator)
    g = np.random.default_rng(0)
    assert as_generator(g) is g
    with pytest.raises(TypeError):
        as_generator("seed")


def test_check_finite_theta():
    np.testing.assert_allclose(check_finite_theta([1.0, 2.0]), [1.0, 2.0])
    with pytest.raises(ValueError):
        check_finite_theta([np.nan])


def test_config_error_is_value_error():
    assert issubclass(ConfigError, ValueError)
