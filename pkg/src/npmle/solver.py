"""NPMLE over a finite support.

Given observations X_1..X_n, candidate atoms a_1..a_m and observation
weights c_i, the restricted problem is

    maximise  sum_i c_i log (A w)_i   over the m-simplex,
    A_ij = phi_d(X_i - a_j).

The kernel rows are rescaled by their largest entry before exponentiation
(``B_ij = A_ij / max_j A_ij``); this leaves every ratio ``A_ij / (A w)_i``
unchanged, so EM updates, Frank-Wolfe directions and the certificate are
computed on B without underflow.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Union

import numpy as np
from scipy.optimize import nnls

from . import kernels
from .errors import ConfigurationError, ContractViolation, NumericalError
from .mixture import MixingMeasure, as_points, log_phi0

log = logging.getLogger(__name__)

# weight of the sum-to-one row in the corrective least-squares step
_SQRT_SUM_PENALTY = math.sqrt(1e3)

METHODS = ("em", "fw", "em-fw")


# -- support construction ---------------------------------------------------

@dataclass(frozen=True)
class Exemplar:
    """Atoms are the observations themselves (m = n)."""


@dataclass(frozen=True)
class Grid:
    """Tensor grid over the data bounding box.

    ``points_per_dim=None`` picks ``max(8, ceil(ceil(sqrt(n)) ** (1/d)))``.
    """

    points_per_dim: int | None = None
    max_atoms: int = 1_000_000

    def __post_init__(self):
        if self.points_per_dim is not None and self.points_per_dim < 2:
            raise ConfigurationError("grid needs at least 2 points per dimension")


@dataclass(frozen=True)
class Subsample:
    """``m`` observations drawn without replacement as atoms."""

    m: int
    seed: int = 0

    def __post_init__(self):
        if self.m < 1:
            raise ConfigurationError("subsample size must be >= 1")


@dataclass(frozen=True)
class Binned:
    """Occupied bin centres serve as both atoms and weighted pseudo-observations."""

    bins_per_dim: int

    def __post_init__(self):
        if self.bins_per_dim < 1:
            raise ConfigurationError("bins_per_dim must be >= 1")


SupportStrategy = Union[Exemplar, Grid, Subsample, Binned]


class Support(NamedTuple):
    atoms: np.ndarray
    obs_weights: np.ndarray
    points: np.ndarray  # observations the likelihood is evaluated at


def default_grid_size(n, d):
    return max(8, math.ceil(math.ceil(math.sqrt(n)) ** (1.0 / d)))


def build_support(data, strategy: SupportStrategy = Exemplar()) -> Support:
    x, _ = as_points(data)
    n, d = x.shape
    if n == 0:
        raise ContractViolation("empty dataset")
    ones = np.ones(n)
    if isinstance(strategy, Exemplar):
        return Support(x.copy(), ones, x)
    if isinstance(strategy, Grid):
        p = strategy.points_per_dim or default_grid_size(n, d)
        if p**d > strategy.max_atoms:
            raise ConfigurationError(
                f"grid of {p}^{d} = {p**d} atoms exceeds the cap of {strategy.max_atoms}"
            )
        lo, hi = x.min(axis=0), x.max(axis=0)
        axes = [np.linspace(lo[k], hi[k], p) for k in range(d)]
        mesh = np.meshgrid(*axes, indexing="ij")
        atoms = np.stack([g.reshape(-1) for g in mesh], axis=1)
        return Support(np.ascontiguousarray(atoms), ones, x)
    if isinstance(strategy, Subsample):
        if strategy.m > n:
            raise ConfigurationError(f"subsample size {strategy.m} exceeds n={n}")
        idx = np.random.default_rng(strategy.seed).choice(n, size=strategy.m, replace=False)
        return Support(x[idx].copy(), ones, x)
    if isinstance(strategy, Binned):
        b = strategy.bins_per_dim
        lo, hi = x.min(axis=0), x.max(axis=0)
        width = (hi - lo) / b
        safe = np.where(width > 0, width, 1.0)
        idx = np.clip(np.floor((x - lo) / safe).astype(np.int64), 0, b - 1)
        idx[:, width == 0] = 0
        cells, counts = np.unique(idx, axis=0, return_counts=True)
        centres = np.ascontiguousarray(lo + (cells + 0.5) * width)
        return Support(centres, counts.astype(np.float64), centres)
    raise ConfigurationError(f"unknown support strategy {strategy!r}")


# -- solver -----------------------------------------------------------------

@dataclass(frozen=True)
class SolverConfig:
    """Solver settings.

    ``gap_tol`` bounds the certificate ``max_j grad_j - 1`` (a per-observation
    quantity).  ``prune_tol=None`` means ``1e-10 / m``.  Kernels with more than
    ``materialize_limit`` entries are streamed in row blocks instead of stored.
    """

    method: str = "em-fw"
    max_iters: int = 20_000
    gap_tol: float = 1e-6
    prune_tol: float | None = None
    em_warmup: int = 200
    max_active: int = 1000
    materialize_limit: int = 50_000_000
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigurationError(f"method must be one of {METHODS}, got {self.method!r}")
        if not self.gap_tol > 0:
            raise ConfigurationError("gap_tol must be positive")
        if self.prune_tol is not None and self.prune_tol < 0:
            raise ConfigurationError("prune_tol must be nonnegative")
        if self.max_iters < 1:
            raise ConfigurationError("max_iters must be >= 1")


@dataclass(frozen=True, eq=False)
class FitResult:
    mixture: MixingMeasure
    fitted_log_densities: np.ndarray
    duality_gap: float
    iterations: int
    loglik_trace: list = field(repr=False)
    converged: bool
    weights_multiplicity: np.ndarray | None = None

    @property
    def loglik(self):
        """Weighted average log-likelihood at the returned weights."""
        return self.loglik_trace[-1]

    def to_dict(self):
        G = self.mixture.pruned()
        return {
            "dim": G.dim,
            "atoms": G.atoms.tolist(),
            "weights": G.weights.tolist(),
            "duality_gap": self.duality_gap,
            "iterations": self.iterations,
            "loglik": self.loglik,
            "converged": self.converged,
        }

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)


def mixture_from_dict(doc):
    """Rebuild the fitted mixture from a :meth:`FitResult.to_dict` document."""
    try:
        atoms = np.asarray(doc["atoms"], dtype=np.float64).reshape(-1, int(doc["dim"]))
        weights = np.asarray(doc["weights"], dtype=np.float64)
    except (KeyError, TypeError, ValueError) as exc:
        raise ContractViolation(f"malformed model document: {exc}") from exc
    return MixingMeasure.from_weights(atoms, weights)


class _Kernel:
    """Row-rescaled kernel B with ``log A_ij = shift_i + log B_ij + log phi_d(0)``.

    Materialised as ``bt`` (m, n) when small enough, otherwise recomputed in
    row blocks on every product.
    """

    def __init__(self, x, atoms, limit):
        self.x, self.atoms = x, atoms
        self.n, self.m = x.shape[0], atoms.shape[0]
        self.stream = self.n * self.m > limit
        self.block = max(1, limit // max(self.m, 1)) if self.stream else self.n
        if not self.stream:
            L = kernels.neg_half_sqdist(x, atoms)
            self.shift = L.max(axis=1)
            L -= self.shift[:, None]
            np.exp(L, out=L)
            self.bt = np.ascontiguousarray(L.T)
        else:
            self.bt = None
            self.shift = np.concatenate(
                [kernels.neg_half_sqdist(x[r], atoms).max(axis=1) for r in self._blocks()]
            )

    def _blocks(self):
        for s in range(0, self.n, self.block):
            yield slice(s, min(self.n, s + self.block))

    def _rows(self, r):
        L = kernels.neg_half_sqdist(self.x[r], self.atoms)
        L -= self.shift[r, None]
        return np.exp(L, out=L)

    def matvec(self, w):
        if not self.stream:
            return self.bt.T @ w
        return np.concatenate([self._rows(r) @ w for r in self._blocks()])

    def rmatvec(self, v):
        if not self.stream:
            return self.bt @ v
        g = np.zeros(self.m)
        for r in self._blocks():
            g += self._rows(r).T @ v[r]
        return g

    def columns(self, idx):
        """Dense (n, len(idx)) block of kernel columns."""
        if not self.stream:
            return self.bt[idx].T
        L = kernels.neg_half_sqdist(self.x, self.atoms[idx])
        L -= self.shift[:, None]
        return np.exp(L, out=L)

    def column(self, j):
        if not self.stream:
            return self.bt[j]
        diff = self.x - self.atoms[j]
        return np.exp(-0.5 * np.einsum("ij,ij->i", diff, diff) - self.shift)


def _check_positive(f):
    bad = np.flatnonzero(~(f > 0))
    if bad.size:
        raise NumericalError(
            f"fitted density underflowed at observation {int(bad[0])}: "
            "it is too far from every atom with positive weight"
        )


def _prepare(data, atoms, obs_weights):
    x, _ = as_points(data)
    a, _ = as_points(atoms, x.shape[1])
    if obs_weights is None:
        c = np.ones(x.shape[0])
    else:
        c = np.asarray(obs_weights, dtype=np.float64).reshape(-1)
    if c.shape[0] != x.shape[0]:
        raise ContractViolation(f"{x.shape[0]} observations but {c.shape[0]} observation weights")
    if np.any(c < 0) or not c.sum() > 0:
        raise ContractViolation("observation weights must be nonnegative with positive sum")
    return x, a, c / c.sum()


def duality_gap(data, atoms, obs_weights, w, *, materialize_limit=50_000_000):
    """Certificate ``max_j sum_i c_i A_ij / (A w)_i / sum_i c_i - 1``.

    Zero at the restricted optimum and positive elsewhere; it also bounds the
    suboptimality of the average log-likelihood.
    """
    x, a, c = _prepare(data, atoms, obs_weights)
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (a.shape[0],) or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
        raise ContractViolation("w must be a probability vector over the atoms")
    K = _Kernel(x, a, materialize_limit)
    f = K.matvec(w)
    _check_positive(f)
    return float(np.max(K.rmatvec(c / f)) - 1.0)


def _fw_step(K, w, f, g, c, max_active):
    """One fully corrective Frank-Wolfe update.

    First an exact line search toward the vertex with the largest gradient,
    then a Newton-type correction on the active set: the quadratic model of
    the log-likelihood at f is ``-1/2 sum_i c_i (B_i v / f_i - 2)^2``, which
    is minimised by NNLS with the simplex constraint added as a heavily
    weighted extra row, and followed by a second exact line search.
    """
    j = int(np.argmax(g))
    dvec = K.column(j) - f
    step = kernels.line_search(f, dvec, c, 1.0)
    w = w * (1.0 - step)
    w[j] += step
    f = f + step * dvec

    active = np.flatnonzero(w > 0)
    if active.size > max_active:
        active = np.sort(active[np.argsort(-w[active], kind="stable")[:max_active]])
    Bs = K.columns(active)
    sq = np.sqrt(c)
    A = np.vstack([Bs * (sq / f)[:, None], np.full((1, active.size), _SQRT_SUM_PENALTY)])
    b = np.append(2.0 * sq, _SQRT_SUM_PENALTY)
    try:
        v, _ = nnls(A, b, maxiter=10 * active.size)
    except RuntimeError:  # NNLS iteration limit; the toward step alone still makes progress
        return w
    total = v.sum()
    if not total > 0:
        return w
    v /= total
    step = kernels.line_search(f, Bs @ v - f, c, 1.0)
    target = np.zeros_like(w)
    target[active] = v
    if step == 1.0:
        return target
    return (1.0 - step) * w + step * target


def _objective(f, K, c, d):
    return math.fsum(c * (np.log(f) + K.shift)) + log_phi0(d)


def solve(data, atoms, obs_weights=None, cfg: SolverConfig = SolverConfig()) -> FitResult:
    """Maximise the weighted log-likelihood over mixing weights on ``atoms``.

    Runs EM sweeps, Frank-Wolfe steps, or EM warm-up followed by Frank-Wolfe,
    stopping once the certificate is at most ``cfg.gap_tol`` or after
    ``cfg.max_iters`` updates (then ``converged`` is False).  Weights below
    the pruning threshold are zeroed at the end unless that would push the
    certificate above tolerance.
    """
    x, a, c = _prepare(data, atoms, obs_weights)
    d, m = x.shape[1], a.shape[0]
    K = _Kernel(x, a, cfg.materialize_limit)

    w = np.full(m, 1.0 / m)
    f = K.matvec(w)
    _check_positive(f)
    trace = [_objective(f, K, c, d)]
    it = 0
    gap = math.inf

    em_budget = {"em": cfg.max_iters, "fw": 0, "em-fw": min(cfg.em_warmup, cfg.max_iters)}[cfg.method]
    while True:
        g = K.rmatvec(c / f)
        gap = float(g.max() - 1.0)
        if gap <= cfg.gap_tol or it >= cfg.max_iters:
            break
        if it < em_budget:
            w = w * g
            w /= w.sum()
        else:
            w = _fw_step(K, w, f, g, c, cfg.max_active)
        f = K.matvec(w)
        _check_positive(f)
        it += 1
        trace.append(_objective(f, K, c, d))

    converged = gap <= cfg.gap_tol
    w = np.maximum(w, 0.0)
    w /= w.sum()
    f = K.matvec(w)
    gap = float(K.rmatvec(c / f).max() - 1.0)

    prune_tol = cfg.prune_tol if cfg.prune_tol is not None else 1e-10 / m
    small = (w < prune_tol) & (w > 0)
    if small.any():
        wp = np.where(small, 0.0, w)
        wp /= wp.sum()
        fp = K.matvec(wp)
        if np.all(fp > 0):
            gap_p = float(K.rmatvec(c / fp).max() - 1.0)
            if gap_p <= max(gap, cfg.gap_tol):
                w, f, gap = wp, fp, gap_p
    _check_positive(f)
    trace[-1] = _objective(f, K, c, d)
    if not converged:
        log.warning("solver stopped after %d iterations with certificate gap %.3g", it, gap)

    logf = np.log(f) + K.shift + log_phi0(d)
    return FitResult(
        mixture=MixingMeasure.from_weights(a, w),
        fitted_log_densities=logf,
        duality_gap=gap,
        iterations=it,
        loglik_trace=trace,
        converged=converged,
    )


def fit(data, strategy: SupportStrategy = Exemplar(), cfg: SolverConfig = SolverConfig()) -> FitResult:
    """Build the support for ``data`` and solve.

    With :class:`Binned`, the fitted log-densities refer to the occupied bin
    centres and ``weights_multiplicity`` holds the bin counts.
    """
    sup = build_support(data, strategy)
    res = solve(sup.points, sup.atoms, sup.obs_weights, cfg)
    if isinstance(strategy, Binned):
        res = FitResult(
            mixture=res.mixture,
            fitted_log_densities=res.fitted_log_densities,
            duality_gap=res.duality_gap,
            iterations=res.iterations,
            loglik_trace=res.loglik_trace,
            converged=res.converged,
            weights_multiplicity=sup.obs_weights,
        )
    return res
