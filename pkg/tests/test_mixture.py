import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate
from scipy.stats import multivariate_normal

from npmle import ContractViolation, ConfigurationError, MixingMeasure, ScaledMixture, sample
from npmle.mixture import as_points, log_density, log_density_and_score, log_likelihood, score

from conftest import random_mixture


def _direct_density(G, x):
    return sum(w * multivariate_normal(mean=a, cov=np.eye(G.dim)).pdf(x) for a, w in zip(G.atoms, G.weights))


mixtures = st.builds(
    lambda seed, m, d: random_mixture(np.random.default_rng(seed), m, d),
    st.integers(0, 2**32 - 1),
    st.integers(1, 6),
    st.integers(1, 3),
)


def test_single_point_returns_float():
    G = MixingMeasure.point_mass([0.0, 0.0])
    v = log_density(G, [0.0, 0.0])
    assert isinstance(v, float)
    assert v == pytest.approx(-math.log(2 * math.pi), abs=1e-15)


def test_two_atom_value():
    G = MixingMeasure([[0.0], [2.0]], [0.5, 0.5])
    want = 0.5 * (math.exp(-0.5) + math.exp(-0.5)) / math.sqrt(2 * math.pi)
    assert math.exp(log_density(G, 1.0)) == pytest.approx(want, rel=1e-14)
    assert score(G, 1.0)[0] == pytest.approx(0.0, abs=1e-15)


@given(mixtures, st.integers(0, 2**32 - 1))
def test_density_matches_scipy(G, seed):
    x = np.random.default_rng(seed).normal(scale=4, size=(5, G.dim))
    np.testing.assert_allclose(np.exp(log_density(G, x)), _direct_density(G, x).reshape(-1), rtol=1e-10)


@given(mixtures, st.integers(0, 2**32 - 1))
def test_score_matches_finite_differences(G, seed):
    x = np.random.default_rng(seed).normal(scale=3, size=(G.dim,))
    h = 1e-5
    fd = np.empty(G.dim)
    for k in range(G.dim):
        e = np.zeros(G.dim)
        e[k] = h
        fd[k] = (log_density(G, (x + e)[None])[0] - log_density(G, (x - e)[None])[0]) / (2 * h)
    np.testing.assert_allclose(score(G, x[None])[0], fd, atol=1e-6)


def test_score_far_tail_is_finite():
    G = MixingMeasure([[0.0], [1.0]], [0.5, 0.5])
    lf, sc = log_density_and_score(G, np.array([[1e3]]))
    assert np.isfinite(lf[0])
    assert sc[0, 0] == pytest.approx(1.0 - 1e3, rel=1e-12)


@given(mixtures, st.integers(0, 2**32 - 1))
def test_score_norm_bound(G, seed):
    x = np.random.default_rng(seed).normal(scale=6, size=(20, G.dim))
    lf, sc = log_density_and_score(G, x)
    slack = -G.dim * math.log(2 * math.pi) - 2 * lf - (sc**2).sum(axis=1)
    assert slack.min() >= -1e-9


def test_density_integrates_to_one(rng):
    G = random_mixture(rng, m=4, d=1)
    total, _ = integrate.quad(lambda t: math.exp(log_density(G, t)), -60, 60, limit=200, points=G.atoms[:, 0])
    assert total == pytest.approx(1.0, abs=1e-9)


def test_log_likelihood_is_order_invariant(rng):
    G = random_mixture(rng, m=3, d=2)
    x = rng.normal(size=(101, 2))
    assert log_likelihood(G, x) == log_likelihood(G, x[rng.permutation(101)])


@pytest.mark.parametrize(
    "atoms, weights",
    [
        ([[0.0]], [0.5]),
        ([[0.0], [1.0]], [1.0]),
        ([[0.0], [1.0]], [1.5, -0.5]),
        ([[np.nan]], [1.0]),
        (np.zeros((0, 1)), []),
    ],
)
def test_invalid_measures(atoms, weights):
    with pytest.raises(ContractViolation):
        MixingMeasure(atoms, weights)


def test_measure_is_read_only():
    G = MixingMeasure([[0.0], [1.0]], [0.5, 0.5])
    with pytest.raises(ValueError):
        G.weights[0] = 1.0


def test_empirical_merges_duplicates():
    G = MixingMeasure.empirical([[1.0, 1.0], [0.0, 0.0], [1.0, 1.0], [1.0, 1.0]])
    assert G.size == 2
    np.testing.assert_array_equal(G.weights, [0.25, 0.75])


def test_pruned_and_shifted():
    G = MixingMeasure([[0.0], [1.0], [2.0]], [0.5, 0.0, 0.5])
    P = G.pruned()
    assert P.size == 2
    np.testing.assert_array_equal(G.shifted(3.0).atoms[:, 0], [3.0, 4.0, 5.0])
    np.testing.assert_array_equal(log_density(G, [0.5, 1.5]), log_density(P, [0.5, 1.5]))


def test_as_points_shapes():
    assert as_points(3.0)[0].shape == (1, 1)
    assert as_points([1.0, 2.0])[0].shape == (2, 1)
    pts, single = as_points([1.0, 2.0], dim=2)
    assert pts.shape == (1, 2) and single
    with pytest.raises(ContractViolation):
        as_points(np.zeros((3, 2)), dim=3)
    with pytest.raises(ContractViolation):
        as_points([np.inf])


def test_scaled_mixture_density_and_score(rng):
    G = random_mixture(rng, m=3, d=2)
    s = 1.7
    H = ScaledMixture(G, s)
    x = rng.normal(scale=4, size=(6, 2))
    want = sum(w * multivariate_normal(mean=s * a, cov=s**2 * np.eye(2)).pdf(x) for a, w in zip(G.atoms, G.weights))
    np.testing.assert_allclose(np.exp(H.log_density(x)), want, rtol=1e-10)
    h = 1e-5
    fd = np.array([(H.log_density(x[0] + h * e) - H.log_density(x[0] - h * e)) / (2 * h) for e in np.eye(2)])
    np.testing.assert_allclose(H.score(x[0]), fd, atol=1e-6)
    with pytest.raises(ContractViolation):
        ScaledMixture(G, 0.0)


def test_sample_identity_noise():
    G = MixingMeasure([[0.0, 0.0], [5.0, 5.0]], [0.3, 0.7])
    s = sample(G, 20_000, seed=4)
    assert s.x.shape == (20_000, 2)
    np.testing.assert_array_equal(s.theta, G.atoms[s.component])
    assert np.mean(s.component == 1) == pytest.approx(0.7, abs=0.02)
    resid = s.x - s.theta
    np.testing.assert_allclose(np.cov(resid.T), np.eye(2), atol=0.05)


def test_sample_per_point_covariance():
    G = MixingMeasure.point_mass([0.0, 0.0])
    cov = np.array([[4.0, 1.0], [1.0, 2.0]])
    s = sample(G, 40_000, noise=np.broadcast_to(cov, (40_000, 2, 2)), seed=1)
    np.testing.assert_allclose(np.cov(s.x.T), cov, atol=0.1)


def test_sample_is_seeded():
    G = MixingMeasure([[0.0], [1.0]], [0.5, 0.5])
    np.testing.assert_array_equal(sample(G, 10, seed=3).x, sample(G, 10, seed=3).x)


@pytest.mark.parametrize("noise", [-1.0, np.eye(3), np.array([[1.0, 2.0], [2.0, 1.0]])])
def test_bad_noise(noise):
    with pytest.raises(ConfigurationError):
        sample(MixingMeasure.point_mass([0.0, 0.0]), 5, noise=noise)
