import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lwamcmc.core import ConfigError, RngStream, SubsetSelection
from lwamcmc.subset_kernels import (
    UniformSubset,
    UniformSwap,
    WindowMixture,
    accept_subset,
    make_subset_proposal,
)


def test_swap_small_example():
    u = SubsetSelection.from_indices([0, 1], 3)
    prop = UniformSwap(1)
    rng = RngStream(0)
    counts = Counter(prop.propose(u, rng)[0].key() for _ in range(20_000))
    assert set(counts) == {(0, 2), (1, 2)}
    assert counts[(0, 2)] / 20_000 == pytest.approx(0.5, abs=0.015)
    for v in (SubsetSelection.from_indices([0, 2], 3), SubsetSelection.from_indices([1, 2], 3)):
        assert math.exp(prop.log_q(u, v)) == pytest.approx(0.5)


def test_swap_full_refresh_is_uniform():
    N, n = 6, 2
    u = SubsetSelection.from_indices([0, 1], N)
    prop = UniformSwap(n)
    rng = RngStream(1)
    counts = Counter(prop.propose(u, rng)[0].key() for _ in range(30_000))
    # all subsets disjoint from U: C(4, 2) = 6 of them
    assert len(counts) == 6
    assert all(set(k).isdisjoint({0, 1}) for k in counts)
    freq = np.array(list(counts.values())) / 30_000
    np.testing.assert_allclose(freq, 1 / 6, atol=0.015)


def test_swap_never_duplicates():
    N, n = 200, 30
    rng = RngStream(2)
    u = SubsetSelection.from_indices(np.arange(n), N)
    prop = UniformSwap(5)
    for _ in range(100_000 // 20):
        v, lr = prop.propose(u, rng)
        idx = v.indices
        assert idx.size == n and np.unique(idx).size == n
        assert idx[0] >= 0 and idx[-1] < N
        assert np.intersect1d(idx, u.indices).size == n - 5
        assert lr == 0.0
        u = v


@given(st.integers(3, 60), st.data())
@settings(max_examples=40, deadline=None)
def test_swap_membership_property(N, data):
    n = data.draw(st.integers(1, N - 1))
    m = data.draw(st.integers(1, min(n, N - n)))
    idx = data.draw(st.lists(st.integers(0, N - 1), min_size=n, max_size=n, unique=True))
    u = SubsetSelection.from_indices(idx, N)
    v, _ = UniformSwap(m).propose(u, RngStream(data.draw(st.integers(0, 1000))))
    assert np.unique(v.indices).size == n
    assert np.intersect1d(u.indices, v.indices).size == n - m
    assert UniformSwap(m).log_q(u, v) == UniformSwap(m).log_q(v, u)


def test_swap_impossible_m():
    with pytest.raises(ConfigError):
        UniformSwap(3).propose(SubsetSelection.from_indices([0, 1], 4), RngStream(0))
    with pytest.raises(ConfigError):
        UniformSwap(0)


def test_uniform_subset_excludes_current():
    prop = UniformSubset()
    rng = RngStream(3)
    w = SubsetSelection.window(2, 3, 8)
    starts = Counter(prop.propose(w, rng)[0].start for _ in range(30_000))
    assert 2 not in starts and set(starts) == {0, 1, 3, 4, 5}
    np.testing.assert_allclose(np.array(list(starts.values())) / 30_000, 0.2, atol=0.012)
    u = SubsetSelection.from_indices([0, 1], 4)
    for _ in range(200):
        assert prop.propose(u, rng)[0] != u
    assert prop.log_q(u, u) == -math.inf
    assert math.exp(prop.log_q(u, SubsetSelection.from_indices([0, 2], 4))) == pytest.approx(1 / 5)


def test_uniform_subset_single_subset():
    with pytest.raises(ConfigError):
        UniformSubset().propose(SubsetSelection.full(4), RngStream(0))


def test_window_interior_ratio_zero():
    wm = WindowMixture(0.999, 0.5, 10_000, 100)
    assert wm.log_q_starts(5000, 5003) - wm.log_q_starts(5003, 5000) == pytest.approx(0.0, abs=1e-12)


def test_window_three_starts_matrix():
    wm = WindowMixture(0.5, 1.0, 4, 2)
    P = wm.proposal_matrix()
    assert P.shape == (3, 3)
    # independent construction of the same matrix
    r = math.exp(-1.0)
    lap = np.array([[r ** abs(a - b) for b in range(3)] for a in range(3)])
    lap /= lap.sum(axis=1, keepdims=True)
    gbar = lap.mean(axis=0)
    expected = 0.5 * lap + 0.5 * gbar[None, :]
    np.testing.assert_allclose(P, expected, atol=1e-14)
    np.testing.assert_allclose(P.sum(axis=1), 1.0, atol=1e-14)
    for a in range(3):
        for b in range(3):
            assert math.exp(wm.log_q_starts(a, b)) == pytest.approx(expected[a, b], abs=1e-14)
    w = np.array([0.2, 0.5, 0.3])
    for a in range(3):
        for b in range(3):
            rho_ab = min(1.0, w[b] * P[b, a] / (w[a] * P[a, b]))
            rho_ba = min(1.0, w[a] * P[a, b] / (w[b] * P[b, a]))
            assert w[a] * P[a, b] * rho_ab == pytest.approx(w[b] * P[b, a] * rho_ba, abs=1e-14)


def test_window_gbar_flat_for_small_lambda():
    wm = WindowMixture(0.5, 1e-9, 60, 10)
    assert np.ptp(wm.gbar) < 1e-6


def test_window_propose_ratio_consistent():
    wm = WindowMixture(0.9, 0.1, 500, 20)
    rng = RngStream(4)
    a = SubsetSelection.window(3, 20, 500)
    for _ in range(200):
        b, lr = wm.propose(a, rng)
        assert 0 <= b.start <= 480
        assert lr == pytest.approx(wm.log_q(b, a) - wm.log_q(a, b), abs=1e-12)
        a = b


def test_window_empirical_law_matches_matrix():
    wm = WindowMixture(0.6, 0.7, 9, 3)
    rng = RngStream(5)
    a = SubsetSelection.window(2, 3, 9)
    draws = np.bincount([wm.propose(a, rng)[0].start for _ in range(40_000)], minlength=7) / 40_000
    np.testing.assert_allclose(draws, wm.proposal_matrix()[2], atol=0.012)


def test_window_inversion_path():
    wm = WindowMixture(0.5, 1e-4, 30, 10)
    assert wm._use_inversion
    rng = RngStream(6)
    a = SubsetSelection.window(0, 10, 30)
    draws = np.bincount([wm.propose(a, rng)[0].start for _ in range(30_000)], minlength=21) / 30_000
    np.testing.assert_allclose(draws, wm.proposal_matrix()[0], atol=0.012)


@pytest.mark.parametrize("omega,lam", [(0.0, 1.0), (1.0, 1.0), (0.5, 0.0)])
def test_window_bad_params(omega, lam):
    with pytest.raises(ConfigError):
        WindowMixture(omega, lam, 10, 2)


def test_accept_equal_weights_always():
    rng = RngStream(7)
    assert all(accept_subset(-3.0, -3.0, 0.0, rng) for _ in range(1000))


def test_accept_dominated_never():
    rng = RngStream(8)
    assert not any(accept_subset(0.0, -1e6, 0.0, rng) for _ in range(1000))


def test_accept_half():
    rng = RngStream(9)
    rate = np.mean([accept_subset(0.0, math.log(0.5), 0.0, rng) for _ in range(100_000)])
    assert abs(rate - 0.5) < 0.01


def test_make_subset_proposal():
    assert make_subset_proposal("uniform_swap", {}, 1000, 100).m == 10
    assert isinstance(make_subset_proposal("window_mixture", {}, 100, 10), WindowMixture)
    with pytest.raises(ConfigError):
        make_subset_proposal("shuffle", {}, 10, 2)
