"""Gaussian location mixtures with identity component covariance.

A mixing measure ``G = sum_j w_j delta_{a_j}`` on R^d defines the density

    f_G(x) = sum_j w_j phi_d(x - a_j),

with ``phi_d`` the standard d-variate normal density.  Everything here works
in log space: the per-atom terms ``log w_j - ||x - a_j||^2 / 2`` are combined
with a max-shifted log-sum-exp, so densities far in the tails stay finite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import kernels
from .errors import ConfigurationError, ContractViolation

LOG_2PI = math.log(2.0 * math.pi)


def log_phi0(d):
    """log of the standard normal density at its mode, ``-d/2 log(2 pi)``."""
    return -0.5 * d * LOG_2PI


def as_points(x, dim=None):
    """Coerce ``x`` to a C-contiguous (n, d) float array.

    A 1-d array is read as n scalar observations when ``dim`` is 1 or
    unspecified, and as a single point when ``dim`` equals its length.
    Returns ``(points, single)`` where ``single`` flags a lone point input.
    """
    arr = np.asarray(x, dtype=np.float64)
    single = False
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
        single = True
    elif arr.ndim == 1:
        if dim is not None and dim > 1:
            arr = arr.reshape(1, -1)
            single = True
        else:
            arr = arr.reshape(-1, 1)
    elif arr.ndim != 2:
        raise ContractViolation(f"expected points of shape (n, d), got {arr.shape}")
    if dim is not None and arr.shape[1] != dim:
        raise ContractViolation(f"dimension mismatch: points have d={arr.shape[1]}, expected {dim}")
    if not np.all(np.isfinite(arr)):
        raise ContractViolation("points must be finite")
    return np.ascontiguousarray(arr), single


@dataclass(frozen=True, eq=False)
class MixingMeasure:
    """Finite discrete probability measure on R^d.

    ``atoms`` has shape (m, d) and ``weights`` shape (m,).  Weights must be
    nonnegative and sum to one within 1e-12; use :meth:`from_weights` to
    normalise arbitrary nonnegative masses.
    """

    atoms: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        atoms = np.array(self.atoms, dtype=np.float64)
        if atoms.ndim == 1:
            atoms = atoms.reshape(-1, 1)
        weights = np.array(self.weights, dtype=np.float64).reshape(-1)
        if atoms.ndim != 2 or atoms.shape[0] < 1 or atoms.shape[1] < 1:
            raise ContractViolation(f"atoms must have shape (m, d) with m, d >= 1, got {atoms.shape}")
        if weights.shape[0] != atoms.shape[0]:
            raise ContractViolation(f"{atoms.shape[0]} atoms but {weights.shape[0]} weights")
        if not np.all(np.isfinite(atoms)):
            raise ContractViolation("atoms must be finite")
        if np.any(weights < 0) or not np.all(np.isfinite(weights)):
            raise ContractViolation("weights must be finite and nonnegative")
        if abs(math.fsum(weights) - 1.0) > 1e-12:
            raise ContractViolation(f"weights sum to {math.fsum(weights)!r}, not 1")
        atoms.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "atoms", np.ascontiguousarray(atoms))
        object.__setattr__(self, "weights", weights)

    @classmethod
    def from_weights(cls, atoms, weights):
        w = np.asarray(weights, dtype=np.float64)
        total = math.fsum(w)
        if not total > 0:
            raise ContractViolation("weights must have positive total mass")
        return cls(atoms, w / total)

    @classmethod
    def point_mass(cls, point):
        return cls(np.atleast_2d(np.asarray(point, dtype=np.float64)), [1.0])

    @classmethod
    def empirical(cls, points):
        """Empirical measure of ``points``; repeated rows merge into one atom."""
        pts, _ = as_points(points)
        uniq, counts = np.unique(pts, axis=0, return_counts=True)
        return cls(uniq, counts / pts.shape[0])

    @property
    def dim(self):
        return self.atoms.shape[1]

    @property
    def size(self):
        return self.atoms.shape[0]

    def log_weights(self):
        with np.errstate(divide="ignore"):
            return np.log(self.weights)

    def shifted(self, c):
        return MixingMeasure(self.atoms + np.asarray(c, dtype=np.float64), self.weights)

    def pruned(self):
        """Drop zero-weight atoms."""
        keep = self.weights > 0
        return MixingMeasure(self.atoms[keep], self.weights[keep])

    def bounding_box(self):
        return self.atoms.min(axis=0), self.atoms.max(axis=0)

    # convenience wrappers around the module-level functions
    def log_density(self, x):
        return log_density(self, x)

    def score(self, x):
        return score(self, x)

    def draw(self, n, rng):
        """Draw ``n`` observations ``theta + Z`` with ``theta ~ G``; returns (x, theta)."""
        comp = rng.choice(self.size, size=n, p=self.weights)
        theta = self.atoms[comp]
        return theta + rng.standard_normal(theta.shape), theta


@dataclass(frozen=True, eq=False)
class ScaledMixture:
    """Density ``x -> scale^{-d} f_G(x / scale)``.

    This is the mixture of N(scale * a_j, scale^2 I) components; it is what a
    fit on data divided by ``scale`` estimates on the original scale.
    """

    mixture: MixingMeasure
    scale: float = 1.0

    def __post_init__(self):
        if not self.scale > 0:
            raise ContractViolation("scale must be positive")

    @property
    def dim(self):
        return self.mixture.dim

    def log_density(self, x):
        pts, single = as_points(x, self.dim)
        out = log_density(self.mixture, pts / self.scale) - self.dim * math.log(self.scale)
        return float(out[0]) if single else out

    def score(self, x):
        """Gradient of the log-density."""
        pts, single = as_points(x, self.dim)
        out = score(self.mixture, pts / self.scale) / self.scale
        return out[0] if single else out

    def bounding_box(self):
        lo, hi = self.mixture.bounding_box()
        return lo * self.scale, hi * self.scale

    def draw(self, n, rng):
        x, theta = self.mixture.draw(n, rng)
        return x * self.scale, theta * self.scale


def _evaluate(G, x, want_score):
    pts, single = as_points(x, G.dim)
    lse, sc, top = kernels.mixture_logsumexp(pts, G.atoms, G.log_weights(), want_score)
    return pts, single, lse + log_phi0(G.dim), sc, top


def log_density(G, x):
    """log f_G(x) for one point (returns float) or for an (n, d) batch."""
    _, single, logf, _, _ = _evaluate(G, x, False)
    return float(logf[0]) if single else logf


def score(G, x):
    """Gradient of log f_G at x, i.e. ``E[theta | X = x] - x``.

    Computed as the softmax-responsibility average of ``a_j - x``, which stays
    well defined where f_G itself underflows.
    """
    _, single, _, sc, _ = _evaluate(G, x, True)
    return sc[0].copy() if single else sc


def log_density_and_score(G, x):
    """Both quantities from one pass over the atoms; batch input only."""
    _, _, logf, sc, _ = _evaluate(G, x, True)
    return logf, sc


def log_likelihood(G, data):
    """Average log-density ``(1/n) sum_i log f_G(X_i)``.

    Summed with ``math.fsum`` so the value is exactly invariant to the order
    of the observations.
    """
    pts, _ = as_points(data, G.dim)
    return math.fsum(log_density(G, pts)) / pts.shape[0]


class Sample(NamedTuple):
    x: np.ndarray
    theta: np.ndarray
    component: np.ndarray


def _noise_factors(noise, n, d):
    """Cholesky factors for the noise covariance spec (None when identity)."""
    if noise is None or (isinstance(noise, str) and noise == "identity"):
        return None
    arr = np.asarray(noise, dtype=np.float64)
    if arr.ndim == 0:
        if not arr > 0:
            raise ConfigurationError("scalar noise variance must be positive")
        return np.sqrt(arr) * np.eye(d)
    if arr.shape == (d, d) or arr.shape == (n, d, d):
        if not np.allclose(arr, np.swapaxes(arr, -1, -2)):
            raise ConfigurationError("noise covariance must be symmetric")
        try:
            return np.linalg.cholesky(arr)
        except np.linalg.LinAlgError as exc:
            raise ConfigurationError("noise covariance is not positive definite") from exc
    raise ConfigurationError(f"noise spec of shape {arr.shape} does not match d={d}, n={n}")


def sample(G, n, noise=None, seed=0):
    """Draw ``X_i = theta_i + Z_i`` with ``theta_i ~ G`` i.i.d.

    ``noise`` is None (identity), a positive scalar variance, a (d, d)
    covariance shared by all points, or an (n, d, d) stack of per-point
    covariances.  The latent means and component indices are returned with
    the observations.
    """
    if n < 1:
        raise ContractViolation("n must be >= 1")
    rng = np.random.default_rng(seed)
    chol = _noise_factors(noise, n, G.dim)
    comp = rng.choice(G.size, size=n, p=G.weights)
    theta = G.atoms[comp]
    z = rng.standard_normal((n, G.dim))
    if chol is not None:
        z = np.einsum("...ij,...j->...i", chol, z)
    return Sample(theta + z, theta.copy(), comp)
