"""Distances between mixture densities and risks between estimate vectors.

Densities are anything exposing ``dim``, ``log_density(points)``,
``bounding_box()`` and ``draw(n, rng)``: :class:`~npmle.mixture.MixingMeasure`
or :class:`~npmle.mixture.ScaledMixture`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import ConfigurationError, ContractViolation
from .mixture import MixingMeasure, as_points

# Gaussian mass beyond 8 standard deviations is below 1e-15
_PAD = 8.0
_DEFAULT_NODES = {1: 512, 2: 256}
_DEFAULT_MC = 20_000


@dataclass(frozen=True)
class HellingerEstimate:
    value_sq: float
    method: str  # "exact", "quadrature" or "montecarlo"
    n_eval: int
    std_error: float | None = None

    @property
    def value(self):
        return math.sqrt(self.value_sq)


def _scale_of(f):
    return getattr(f, "scale", 1.0)


def _check_pair(f, g):
    if f.dim != g.dim:
        raise ContractViolation(f"dimension mismatch: {f.dim} vs {g.dim}")


def _quadrature_grid(f, g, nodes):
    """Tensor Gauss-Legendre nodes and weights over the padded joint atom box."""
    d = f.dim
    if d > 2:
        raise ConfigurationError("quadrature is limited to d <= 2; use method='montecarlo'")
    nodes = nodes or _DEFAULT_NODES[d]
    pad = _PAD * max(_scale_of(f), _scale_of(g))
    lo_f, hi_f = f.bounding_box()
    lo_g, hi_g = g.bounding_box()
    lo = np.minimum(lo_f, lo_g) - pad
    hi = np.maximum(hi_f, hi_g) + pad
    t, wt = np.polynomial.legendre.leggauss(nodes)
    axes = [0.5 * (hi[k] - lo[k]) * t + 0.5 * (hi[k] + lo[k]) for k in range(d)]
    wts = [0.5 * (hi[k] - lo[k]) * wt for k in range(d)]
    if d == 1:
        return axes[0].reshape(-1, 1), wts[0]
    X, Y = np.meshgrid(axes[0], axes[1], indexing="ij")
    WX, WY = np.meshgrid(wts[0], wts[1], indexing="ij")
    return np.stack([X.ravel(), Y.ravel()], axis=1), (WX * WY).ravel()


def _single_atom(f):
    return isinstance(f, MixingMeasure) and np.count_nonzero(f.weights) == 1


def hellinger_squared(f, g, method="auto", budget=None, seed=0) -> HellingerEstimate:
    """Squared Hellinger distance ``int (sqrt f - sqrt g)^2 = 2 - 2 int sqrt(f g)``.

    ``method='auto'`` uses the closed form ``2 (1 - exp(-|a - b|^2 / 8))``
    for two point masses, quadrature for d <= 2 and Monte Carlo otherwise.
    ``budget`` is nodes per axis for quadrature and draws for Monte Carlo.
    Monte Carlo samples from ``f`` and averages ``sqrt(g / f)``.
    """
    _check_pair(f, g)
    if method == "auto":
        if _single_atom(f) and _single_atom(g):
            method = "exact"
        else:
            method = "quadrature" if f.dim <= 2 else "montecarlo"
    if method == "exact":
        if not (_single_atom(f) and _single_atom(g)):
            raise ConfigurationError("exact Hellinger distance needs two point masses")
        a = f.atoms[np.argmax(f.weights)]
        b = g.atoms[np.argmax(g.weights)]
        bc = math.exp(-float(np.sum((a - b) ** 2)) / 8.0)
        return HellingerEstimate(2.0 * (1.0 - bc), "exact", 0)
    if method == "quadrature":
        pts, wts = _quadrature_grid(f, g, budget)
        bc = math.fsum(wts * np.exp(0.5 * (f.log_density(pts) + g.log_density(pts))))
        return HellingerEstimate(min(2.0, max(0.0, 2.0 - 2.0 * bc)), "quadrature", len(wts))
    if method == "montecarlo":
        n = budget or _DEFAULT_MC
        x, _ = f.draw(n, np.random.default_rng(seed))
        ratio = np.exp(0.5 * (g.log_density(x) - f.log_density(x)))
        se = 2.0 * float(np.std(ratio, ddof=1)) / math.sqrt(n) if n > 1 else math.inf
        h2 = 2.0 - 2.0 * float(np.mean(ratio))
        return HellingerEstimate(min(2.0, max(0.0, h2)), "montecarlo", n, se)
    raise ConfigurationError(f"unknown method {method!r}")


def _tv_line(f, g, nodes):
    """1-d total variation with the integration range split at crossings of f and g."""
    pts, _ = _quadrature_grid(f, g, nodes)
    lo, hi = float(pts[0, 0]), float(pts[-1, 0])
    probe = np.linspace(lo, hi, 8 * nodes)
    diff = np.exp(f.log_density(probe)) - np.exp(g.log_density(probe))
    h = lambda t: math.exp(f.log_density(t)) - math.exp(g.log_density(t))
    cuts = [lo]
    for i in np.flatnonzero(np.sign(diff[:-1]) * np.sign(diff[1:]) < 0):
        cuts.append(brentq(h, probe[i], probe[i + 1], xtol=1e-14))
    cuts.append(hi)
    t, wt = np.polynomial.legendre.leggauss(nodes)
    total = []
    for a, b in zip(cuts[:-1], cuts[1:]):
        x = 0.5 * (b - a) * t + 0.5 * (b + a)
        vals = np.abs(np.exp(f.log_density(x)) - np.exp(g.log_density(x)))
        total.append(0.5 * (b - a) * float(wt @ vals))
    return 0.5 * math.fsum(total)


def total_variation(f, g, method="auto", budget=None, seed=0):
    """Total variation distance ``1/2 int |f - g|``.

    Quadrature (d <= 2) or Monte Carlo ``E_f[(1 - g/f)_+]``.  In one dimension
    the quadrature is split at the sign changes of ``f - g`` so the kink of
    the absolute value does not limit accuracy.
    """
    _check_pair(f, g)
    if method == "auto":
        method = "quadrature" if f.dim <= 2 else "montecarlo"
    if method == "quadrature":
        if f.dim == 1:
            tv = _tv_line(f, g, budget or _DEFAULT_NODES[1])
        else:
            pts, wts = _quadrature_grid(f, g, budget)
            tv = 0.5 * math.fsum(wts * np.abs(np.exp(f.log_density(pts)) - np.exp(g.log_density(pts))))
        return min(1.0, max(0.0, tv))
    if method == "montecarlo":
        n = budget or _DEFAULT_MC
        x, _ = f.draw(n, np.random.default_rng(seed))
        return float(np.mean(np.maximum(0.0, 1.0 - np.exp(g.log_density(x) - f.log_density(x)))))
    raise ConfigurationError(f"unknown method {method!r}")


total_variation_upper = total_variation


def mean_squared_error(a, b):
    """``(1/n) sum_i ||a_i - b_i||^2``, accumulated with ``math.fsum``."""
    pa, _ = as_points(a)
    pb, _ = as_points(b)
    if pa.shape != pb.shape:
        raise ContractViolation(f"shape mismatch: {pa.shape} vs {pb.shape}")
    return math.fsum(np.sum((pa - pb) ** 2, axis=1)) / pa.shape[0]
