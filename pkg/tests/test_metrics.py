import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate
from scipy.stats import norm

from npmle import ConfigurationError, ContractViolation, MixingMeasure, ScaledMixture
from npmle.metrics import hellinger_squared, mean_squared_error, total_variation

from conftest import random_mixture


def _closed_form(r):
    return 2.0 * (1.0 - math.exp(-r * r / 8.0))


@pytest.mark.parametrize("r", [0.0, 0.5, 1.0, 2.0, 4.0])
@pytest.mark.parametrize("d", [1, 2])
def test_quadrature_single_atoms(r, d):
    a = np.zeros(d)
    b = np.zeros(d)
    b[0] = r
    f, g = MixingMeasure.point_mass(a), MixingMeasure.point_mass(b)
    q = hellinger_squared(f, g, method="quadrature")
    assert q.method == "quadrature"
    assert q.value_sq == pytest.approx(_closed_form(r), abs=1e-8)
    assert hellinger_squared(f, g).method == "exact"
    assert hellinger_squared(f, g).value_sq == pytest.approx(_closed_form(r), abs=1e-15)


def test_quadrature_matches_adaptive_integration(rng):
    f, g = random_mixture(rng, 3, 1), random_mixture(rng, 4, 1)
    h = lambda t: (math.sqrt(math.exp(f.log_density(t))) - math.sqrt(math.exp(g.log_density(t)))) ** 2
    pts = np.concatenate([f.atoms[:, 0], g.atoms[:, 0]])
    want, _ = integrate.quad(h, -40, 40, points=np.sort(pts), limit=400, epsabs=1e-13)
    assert hellinger_squared(f, g).value_sq == pytest.approx(want, abs=1e-9)


@given(st.integers(0, 2**32 - 1), st.sampled_from([1, 2]))
def test_hellinger_properties(seed, d):
    rng = np.random.default_rng(seed)
    f, g = random_mixture(rng, None, d), random_mixture(rng, None, d)
    fg = hellinger_squared(f, g).value_sq
    assert 0.0 <= fg <= 2.0
    assert fg == pytest.approx(hellinger_squared(g, f).value_sq, abs=1e-12)
    assert hellinger_squared(f, f, method="quadrature").value_sq == pytest.approx(0.0, abs=1e-10)
    tv = total_variation(f, g)
    # H^2 / 2 <= TV <= H sqrt(1 - H^2 / 4)
    assert fg / 2 <= tv + 1e-8
    assert tv <= math.sqrt(fg) * math.sqrt(max(0.0, 1 - fg / 4)) + 1e-8


def test_montecarlo_agrees_with_quadrature(rng):
    for _ in range(10):
        f, g = random_mixture(rng, 3, 1, 2.0), random_mixture(rng, 3, 1, 2.0)
        q = hellinger_squared(f, g, method="quadrature").value_sq
        mc = hellinger_squared(f, g, method="montecarlo", budget=20_000, seed=int(rng.integers(2**31)))
        assert mc.std_error > 0
        assert abs(mc.value_sq - q) <= 4 * mc.std_error + 1e-12


def test_montecarlo_in_three_dimensions():
    f = MixingMeasure.point_mass([0.0, 0.0, 0.0])
    g = MixingMeasure.point_mass([1.0, 1.0, 0.0])
    mc = hellinger_squared(f, g, method="montecarlo", budget=50_000)
    auto = hellinger_squared(MixingMeasure([[0, 0, 0], [1, 0, 0]], [0.5, 0.5]), g)
    assert auto.method == "montecarlo"
    assert abs(mc.value_sq - _closed_form(math.sqrt(2))) <= 4 * mc.std_error
    with pytest.raises(ConfigurationError):
        hellinger_squared(f, g, method="quadrature")


def test_scale_invariance(rng):
    f, g = random_mixture(rng, 3, 2), random_mixture(rng, 2, 2)
    base = hellinger_squared(f, g, method="quadrature").value_sq
    s = 2.5
    scaled = hellinger_squared(ScaledMixture(f, s), ScaledMixture(g, s), method="quadrature").value_sq
    assert scaled == pytest.approx(base, abs=1e-9)


def test_tv_point_masses():
    f = MixingMeasure.point_mass([0.0])
    g = MixingMeasure.point_mass([2.0])
    want = 2 * norm.cdf(1.0) - 1
    assert total_variation(f, g) == pytest.approx(want, abs=1e-12)
    mc = total_variation(f, g, method="montecarlo", budget=100_000)
    assert mc == pytest.approx(want, abs=0.01)


def test_bad_inputs():
    f = MixingMeasure.point_mass([0.0])
    g = MixingMeasure.point_mass([0.0, 0.0])
    with pytest.raises(ContractViolation):
        hellinger_squared(f, g)
    with pytest.raises(ConfigurationError):
        hellinger_squared(f, f, method="simpson")
    with pytest.raises(ConfigurationError):
        hellinger_squared(MixingMeasure([[0.0], [1.0]], [0.5, 0.5]), f, method="exact")
    with pytest.raises(ConfigurationError):
        total_variation(f, f, method="simpson")


def test_mean_squared_error():
    a = np.array([[0.0, 0.0], [1.0, 1.0]])
    b = np.array([[1.0, 0.0], [1.0, 3.0]])
    assert mean_squared_error(a, b) == 2.5
    assert mean_squared_error(a, a) == 0.0
    with pytest.raises(ContractViolation):
        mean_squared_error(a, b[:1])
