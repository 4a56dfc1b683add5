import json
import logging
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.stats import norm

from npmle import (
    Binned,
    ConfigurationError,
    ContractViolation,
    Exemplar,
    Grid,
    MixingMeasure,
    NumericalError,
    SolverConfig,
    Subsample,
    build_support,
    duality_gap,
    fit,
    solve,
)
from npmle.denoise import canonical_rho
from npmle.mixture import log_likelihood
from npmle.solver import default_grid_size, mixture_from_dict


def _kernel(x, atoms):
    d = x.shape[1]
    sq = ((x[:, None, :] - atoms[None]) ** 2).sum(-1)
    return np.exp(-0.5 * sq) / (2 * np.pi) ** (d / 2)


def _em_reference(x, atoms, iters):
    A = _kernel(x, atoms)
    w = np.full(atoms.shape[0], 1.0 / atoms.shape[0])
    for _ in range(iters):
        w = w * (A.T @ (1.0 / (A @ w))) / x.shape[0]
    return w


def test_two_point_problem_matches_grid_search(rng):
    x = np.concatenate([rng.normal(0, 1, 30), rng.normal(2, 1, 70)])
    res = solve(x, [0.0, 2.0])
    grid = np.linspace(0, 1, 100_001)
    ll = np.log(np.outer(grid, norm.pdf(x)) + np.outer(1 - grid, norm.pdf(x - 2))).mean(axis=1)
    p_star = grid[int(np.argmax(ll))]
    assert res.mixture.weights[0] == pytest.approx(p_star, abs=2e-5)
    assert res.loglik == pytest.approx(max(ll), abs=1e-9)


@pytest.mark.parametrize("method", ["em", "fw", "em-fw"])
def test_methods_reach_the_same_optimum(method, rng):
    x = rng.normal(size=(120, 2)) + rng.choice([-2.0, 2.0], size=(120, 1))
    tol = 1e-6 if method == "em" else 1e-7
    res = fit(x, Exemplar(), SolverConfig(method=method, gap_tol=tol, max_iters=200_000))
    ref = _em_reference(x, x, 5000)
    ref_ll = float(np.mean(np.log(_kernel(x, x) @ ref)))
    assert res.converged
    assert res.duality_gap <= tol
    # the certificate bounds the suboptimality, and the reference is feasible
    assert ref_ll <= res.loglik + 1e-12
    assert res.loglik - ref_ll <= 1e-3


@given(st.integers(0, 2**32 - 1), st.sampled_from([1, 2]), st.integers(5, 60))
def test_certificate_and_floor(seed, d, n):
    x = np.random.default_rng(seed).normal(scale=2.0, size=(n, d))
    res = fit(x)
    A = _kernel(x, x)
    w = res.mixture.weights
    f = A @ w
    gap = float((A.T @ (1 / f)).max() / n - 1)
    assert gap <= 1e-6
    assert res.duality_gap == pytest.approx(gap, abs=1e-9)
    np.testing.assert_allclose(res.fitted_log_densities, np.log(f), rtol=1e-10, atol=1e-12)
    # with gap g the fitted values are at least rho_n (1 - g)
    assert f.min() >= canonical_rho(n, d) * (1 - gap) - 1e-15
    assert abs(w.sum() - 1) <= 1e-12 and w.min() >= 0


@given(st.integers(0, 2**32 - 1))
def test_loglik_trace_is_nondecreasing(seed):
    x = np.random.default_rng(seed).normal(scale=3.0, size=(40, 1))
    for method in ("em", "em-fw"):
        tr = fit(x, Exemplar(), SolverConfig(method=method, max_iters=400)).loglik_trace
        assert np.all(np.diff(tr[:-1]) >= -1e-12)


def test_permutation_invariance(rng):
    x = rng.normal(size=(80, 2)) * 2
    perm = rng.permutation(80)
    a, b = fit(x), fit(x[perm])
    assert a.loglik == pytest.approx(b.loglik, abs=1e-9)


def test_translation_equivariance(rng):
    x = rng.normal(size=(60, 2)) * 2
    c = np.array([10.0, -4.0])
    a, b = fit(x), fit(x + c)
    assert a.loglik == pytest.approx(b.loglik, abs=1e-9)
    np.testing.assert_allclose(a.mixture.atoms + c, b.mixture.atoms, atol=1e-12)


def test_streamed_kernel_matches_materialized(rng):
    x = rng.normal(size=(90, 2)) * 2
    a = fit(x, Exemplar(), SolverConfig(materialize_limit=10**9))
    b = fit(x, Exemplar(), SolverConfig(materialize_limit=500))
    assert a.loglik == pytest.approx(b.loglik, abs=1e-9)
    assert b.duality_gap <= 1e-6


def test_not_converged_warns(rng, caplog):
    x = rng.normal(size=(50, 1)) * 3
    with caplog.at_level(logging.WARNING, logger="npmle.solver"):
        res = fit(x, Exemplar(), SolverConfig(method="em", max_iters=2))
    assert not res.converged
    assert res.iterations == 2
    assert "certificate gap" in caplog.text


def test_single_observation():
    res = fit(np.array([[1.0, 2.0]]))
    assert res.mixture.size == 1
    assert res.duality_gap == pytest.approx(0.0, abs=1e-15)


def test_duality_gap_reports_underflow():
    x = np.array([[0.0], [1000.0]])
    with pytest.raises(NumericalError, match="observation 1"):
        duality_gap(x, x, None, np.array([1.0, 0.0]))


def test_duality_gap_input_checks():
    x = np.zeros((3, 1))
    with pytest.raises(ContractViolation):
        duality_gap(x, x, None, np.array([0.5, 0.5]))
    with pytest.raises(ContractViolation):
        solve(x, x, obs_weights=[1.0, 1.0])


def test_grid_support():
    x = np.array([[0.0, 0.0], [1.0, 3.0]])
    sup = build_support(x, Grid(5))
    assert sup.atoms.shape == (25, 2)
    np.testing.assert_array_equal(sup.atoms.min(axis=0), [0, 0])
    np.testing.assert_array_equal(sup.atoms.max(axis=0), [1, 3])
    assert default_grid_size(100, 1) == 10
    assert default_grid_size(100, 2) == 8
    assert default_grid_size(10_000, 1) == 100
    with pytest.raises(ConfigurationError):
        build_support(x, Grid(2000, max_atoms=1000))
    with pytest.raises(ConfigurationError):
        Grid(1)


def test_subsample_support(rng):
    x = rng.normal(size=(30, 2))
    sup = build_support(x, Subsample(7, seed=3))
    assert sup.atoms.shape == (7, 2)
    assert all(any(np.array_equal(a, p) for p in x) for a in sup.atoms)
    np.testing.assert_array_equal(sup.atoms, build_support(x, Subsample(7, seed=3)).atoms)
    with pytest.raises(ConfigurationError):
        build_support(x, Subsample(31))


def test_binned_support(rng):
    x = rng.normal(size=(500, 2))
    sup = build_support(x, Binned(6))
    assert sup.obs_weights.sum() == 500
    assert sup.atoms.shape[0] <= 36
    res = fit(x, Binned(6))
    np.testing.assert_array_equal(res.weights_multiplicity, sup.obs_weights)
    assert res.duality_gap <= 1e-6


def test_grid_fit_close_to_exemplar(rng):
    x = np.concatenate([rng.normal(-3, 1, 200), rng.normal(3, 1, 200)])
    ex = fit(x)
    gr = fit(x, Grid(200))
    assert gr.duality_gap <= 1e-6
    assert abs(gr.loglik - ex.loglik) < 5e-3


def test_json_roundtrip(rng):
    x = rng.normal(size=(40, 2))
    res = fit(x)
    doc = json.loads(res.to_json())
    G = mixture_from_dict(doc)
    P = res.mixture.pruned()
    np.testing.assert_array_equal(G.atoms, P.atoms)
    np.testing.assert_array_equal(G.weights, P.weights)
    assert doc["loglik"] == res.loglik
    assert log_likelihood(G, x) == pytest.approx(res.loglik, abs=1e-12)
    with pytest.raises(ContractViolation):
        mixture_from_dict({"atoms": [[0.0]]})


@pytest.mark.parametrize(
    "kw", [{"method": "newton"}, {"gap_tol": 0.0}, {"max_iters": 0}, {"prune_tol": -1.0}]
)
def test_config_validation(kw):
    with pytest.raises(ConfigurationError):
        SolverConfig(**kw)


def test_recovers_well_separated_atoms(rng):
    truth = MixingMeasure([[-6.0], [6.0]], [0.3, 0.7])
    x, _ = truth.draw(2000, rng)
    G = fit(x, Grid(121)).mixture.pruned()
    left = G.weights[G.atoms[:, 0] < 0].sum()
    assert left == pytest.approx(0.3, abs=0.04)
    assert math.isclose(G.weights.sum(), 1.0, abs_tol=1e-12)
