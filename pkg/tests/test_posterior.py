import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from psrl_ssp.posterior import (DirichletBelief, new_belief, posterior_mean, sample_dirichlet_rows,
                                sample_kernel)


def dirichlet_mean_and_se(alpha, draws):
    alpha = np.asarray(alpha, dtype=float)
    a0 = alpha.sum()
    mean = alpha / a0
    var = alpha * (a0 - alpha) / (a0 ** 2 * (a0 + 1))
    return mean, np.sqrt(var / draws)


def test_new_belief_default_prior():
    b = new_belief(8, 2, 0.1)
    assert b.concentrations.shape == (8, 2, 9)
    assert np.all(b.concentrations == 0.1)


def test_new_belief_single_row():
    assert new_belief(1, 1, 1.0).concentrations.tolist() == [[[1.0, 1.0]]]


@pytest.mark.parametrize("alpha", [0.0, -1.0])
def test_new_belief_rejects_nonpositive(alpha):
    with pytest.raises(ValueError):
        new_belief(2, 2, alpha)


def test_update_increments_one_entry():
    b = new_belief(2, 1, 0.1)
    b.update(0, 0, 2)
    np.testing.assert_allclose(b.concentrations[0, 0], [0.1, 0.1, 1.1])
    np.testing.assert_allclose(b.concentrations[1, 0], [0.1, 0.1, 0.1])
    b.update(0, 0, 2)
    assert b.concentrations[0, 0, 2] == pytest.approx(2.1)


@pytest.mark.parametrize("bad", [(2, 0, 0), (0, 1, 0), (0, 0, 3), (-1, 0, 0)])
def test_update_rejects_out_of_range(bad):
    with pytest.raises(ValueError):
        new_belief(2, 1, 0.1).update(*bad)


def test_posterior_mean_hand_sequence():
    b = new_belief(1, 1, 0.5)
    for s_next in (0, 1, 1, 0, 1):
        b.update(0, 0, s_next)
    # counts (2, 3) + prior 0.5 each over 5 + 1 total
    np.testing.assert_allclose(posterior_mean(b)[0, 0], [2.5 / 6, 3.5 / 6])
    assert b.transition_counts()[0, 0].tolist() == [2, 3]


def test_posterior_mean_examples():
    np.testing.assert_allclose(posterior_mean(new_belief(8, 2, 0.1)), 1 / 9)
    b = new_belief(1, 1, 0.1)
    b.update(0, 0, 0)
    np.testing.assert_allclose(posterior_mean(b)[0, 0], [11 / 12, 1 / 12])


def test_sample_kernel_deterministic():
    b = new_belief(3, 2, 0.1)
    a = sample_kernel(b, np.random.default_rng(5))
    c = sample_kernel(b, np.random.default_rng(5))
    assert np.array_equal(a, c)


def test_sample_rows_are_probability_vectors():
    b = new_belief(8, 2, 0.1)
    rng = np.random.default_rng(0)
    for _ in range(200):
        k = b.sample_kernel(rng)
        assert np.all(k >= 0)
        assert np.max(np.abs(k.sum(axis=2) - 1)) <= 1e-12
        assert np.all(k[:, :, -1] > 0)           # goal always reachable


def test_sample_concentrated_row():
    rng = np.random.default_rng(1)
    draws = sample_dirichlet_rows(np.tile([1e9, 0.1], (1000, 1)), rng)
    assert np.all(draws[:, 0] > 0.999)


def test_zero_gamma_draws_are_redrawn():
    class ZeroFirst:
        def __init__(self):
            self.calls = 0
            self.inner = np.random.default_rng(0)

        def standard_gamma(self, shape):
            self.calls += 1
            out = self.inner.standard_gamma(shape)
            if self.calls == 1:
                out = np.array(out, copy=True)
                out.flat[0] = 0.0
            return out

    rng = ZeroFirst()
    row = sample_dirichlet_rows(np.full((1, 3), 0.1), rng)
    assert rng.calls == 2 and row[0, 0] > 0


@pytest.mark.parametrize("alpha", [0.1, 1.0])
def test_monte_carlo_mean_within_three_standard_errors(alpha):
    n = 10 ** 5
    conc = np.full(9, alpha)
    draws = sample_dirichlet_rows(np.tile(conc, (n, 1)), np.random.default_rng(2024))
    mean, se = dirichlet_mean_and_se(conc, n)
    assert np.all(np.abs(draws.mean(axis=0) - mean) <= 3 * se)


def test_monte_carlo_matches_posterior_mean():
    b = new_belief(1, 2, 0.1)
    for s_next in (0, 0, 1, 0):
        b.update(0, 0, s_next)
    b.update(0, 1, 1)
    n = 10 ** 5
    draws = sample_dirichlet_rows(np.broadcast_to(b.concentrations, (n,) + b.concentrations.shape),
                                  np.random.default_rng(7))
    for a in range(2):
        mean, se = dirichlet_mean_and_se(b.concentrations[0, a], n)
        np.testing.assert_allclose(posterior_mean(b)[0, a], mean)
        assert np.all(np.abs(draws[:, 0, a].mean(axis=0) - mean) <= 3 * se)


observations = st.lists(st.tuples(st.integers(0, 2), st.integers(0, 1), st.integers(0, 3)), max_size=60)


@settings(max_examples=50, deadline=None)
@given(observations, st.randoms(use_true_random=False))
def test_updates_conserve_and_commute(obs, rnd):
    a = DirichletBelief(3, 2, 0.1)
    for o in obs:
        a.update(*o)
    shuffled = list(obs)
    rnd.shuffle(shuffled)
    b = DirichletBelief(3, 2, 0.1)
    for o in shuffled:
        b.update(*o)
    assert np.array_equal(a.concentrations, b.concentrations)
    assert a.concentrations.sum() == pytest.approx(3 * 2 * 4 * 0.1 + len(obs))
    assert a.transition_counts().sum() == len(obs)
