"""Empirical-Bayes and oracle denoisers for Gaussian observations.

With ``X_i ~ N(theta_i, I_d)`` and a mixture density ``f`` for the
observations, the denoiser is ``X_i + grad f(X_i) / f(X_i)``: plugging in the
NPMLE gives the empirical-Bayes rule, plugging in the empirical measure of
the true means gives the oracle Bayes rule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import solver
from .errors import ContractViolation, NumericalError
from .metrics import mean_squared_error
from .mixture import MixingMeasure, ScaledMixture, as_points, log_density_and_score, log_phi0


def canonical_rho(n, d):
    """``(2 pi)^{-d/2} / n``, a lower bound for an NPMLE's fitted values."""
    return math.exp(log_phi0(d)) / n


@dataclass(frozen=True, eq=False)
class DenoiseResult:
    estimates: np.ndarray
    rho_used: float = 0.0
    oracle: np.ndarray | None = None
    risk_vs_oracle: float | None = None
    risk_vs_truth: float | None = None

    def __post_init__(self):
        if self.oracle is not None and self.oracle.shape != self.estimates.shape:
            raise ContractViolation("oracle and estimates differ in shape")

    def compared(self, oracle=None, truth=None):
        """Copy with oracle estimates attached and risks filled in."""
        oracle = self.oracle if oracle is None else as_points(oracle, self.estimates.shape[1])[0]
        return DenoiseResult(
            estimates=self.estimates,
            rho_used=self.rho_used,
            oracle=oracle,
            risk_vs_oracle=None if oracle is None else mean_squared_error(self.estimates, oracle),
            risk_vs_truth=None if truth is None else mean_squared_error(self.estimates, truth),
        )

    def risk_summary(self):
        out = {"n": int(self.estimates.shape[0]), "rho": self.rho_used}
        if self.risk_vs_oracle is not None:
            out["risk_vs_oracle"] = self.risk_vs_oracle
        if self.risk_vs_truth is not None:
            out["risk_vs_truth"] = self.risk_vs_truth
        return out


def tweedie_denoise(fit: MixingMeasure, data, rho=0.0) -> DenoiseResult:
    """``X_i + grad f(X_i) / max(f(X_i), rho)`` for the mixture ``fit``.

    Rows with ``f(X_i) >= rho`` use the score directly, so when the floor
    never binds the output is bit-identical to ``rho=0``.
    """
    x, _ = as_points(data, fit.dim)
    rho = float(rho or 0.0)
    if rho < 0:
        raise ContractViolation("rho must be nonnegative")
    logf, sc = log_density_and_score(fit, x)
    if rho > 0:
        low = logf < math.log(rho)
        if low.any():
            sc[low] *= np.exp(logf[low] - math.log(rho))[:, None]
    return DenoiseResult(estimates=x + sc, rho_used=rho)


def oracle_bayes(truth: MixingMeasure, data):
    """Posterior means of theta given X under prior ``truth`` and N(theta, I) noise."""
    return tweedie_denoise(truth, data).estimates


def denoising_risk(result: DenoiseResult, reference):
    return mean_squared_error(result.estimates, reference)


# -- full-covariance oracles --------------------------------------------------

_BLOCK = 1 << 21


def _cov_factors(covs, n, d):
    covs = np.asarray(covs, dtype=np.float64)
    if covs.shape == (d, d):
        covs = np.broadcast_to(covs, (n, d, d))
    if covs.shape != (n, d, d):
        raise ContractViolation(f"expected {n} covariance matrices of shape ({d}, {d})")
    try:
        chol = np.linalg.cholesky(covs)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("covariance matrix is singular or not positive definite") from exc
    linv = np.linalg.inv(chol)
    logdet = 2.0 * np.log(np.diagonal(chol, axis1=1, axis2=2)).sum(axis=1)
    return linv, logdet


def _full_cov_posterior(latents, covs, data, want_precision_term):
    """Responsibility-weighted sums over the components ``N(theta_j, Sigma_j)``.

    For every observation returns ``sum_j r_j theta_j`` and, if requested,
    ``sum_j r_j Sigma_j^{-1} (x - theta_j)``, with ``r_j`` proportional to
    the component densities at x.
    """
    theta, _ = as_points(latents)
    n, d = theta.shape
    x, _ = as_points(data, d)
    linv, logdet = _cov_factors(covs, n, d)
    mean = np.empty_like(x)
    prec = np.empty_like(x) if want_precision_term else None
    step = max(1, _BLOCK // (n * d))
    for s in range(0, x.shape[0], step):
        r = slice(s, min(x.shape[0], s + step))
        diff = x[r, None, :] - theta[None, :, :]
        z = np.einsum("jab,ijb->ija", linv, diff)
        logp = -0.5 * np.einsum("ija,ija->ij", z, z) - 0.5 * logdet
        logp -= logp.max(axis=1, keepdims=True)
        resp = np.exp(logp)
        resp /= resp.sum(axis=1, keepdims=True)
        mean[r] = resp @ theta
        if want_precision_term:
            pd = np.einsum("jba,ijb->ija", linv, z)
            prec[r] = np.einsum("ij,ija->ia", resp, pd)
    return mean, prec


def best_separable_oracle(latents, covs, data):
    """``T*(x) = sum_j theta_j phi(x; theta_j, Sigma_j) / sum_j phi(x; theta_j, Sigma_j)``.

    The best separable rule when each observation carries its own unknown
    covariance; ``covs`` is an (n, d, d) stack or one shared (d, d) matrix.
    """
    mean, _ = _full_cov_posterior(latents, covs, data, False)
    return mean


def hetero_tweedie_oracle(latents, covs, data, sigma_min=1.0):
    """Tweedie target for heteroscedastic data with known ``(theta_i, Sigma_i)``.

    The marginal of the observations is the finite mixture
    ``h = (1/n) sum_j N(theta_j, Sigma_j)``, so the target
    ``x + sigma_min^2 grad log h(x)`` has the closed form
    ``x - sigma_min^2 sum_j r_j(x) Sigma_j^{-1} (x - theta_j)``.
    With ``sigma_min = 1`` this is the posterior mean of theta under the
    prior ``(1/n) sum_j N(theta_j, Sigma_j - I)``.
    """
    x, _ = as_points(data)
    _, prec = _full_cov_posterior(latents, covs, x, True)
    return x - sigma_min**2 * prec


# -- heteroscedastic fit --------------------------------------------------------

@dataclass(frozen=True)
class HeteroModel:
    """Noise model ``X_i ~ N(theta_i, Sigma_i)`` with ``Sigma_i >= sigma_min^2 I``."""

    sigma_min: float
    sigma_max: float | None = None
    per_point_cov: np.ndarray | None = None

    def __post_init__(self):
        if not self.sigma_min > 0:
            raise ContractViolation("sigma_min must be positive")
        if self.sigma_max is not None and self.sigma_max < self.sigma_min:
            raise ContractViolation("sigma_max must be >= sigma_min")

    def validate(self, n, d):
        if self.per_point_cov is None:
            return
        covs = np.asarray(self.per_point_cov, dtype=np.float64)
        if covs.shape != (n, d, d):
            raise ContractViolation(f"expected {n} covariance matrices of shape ({d}, {d})")
        eig = np.linalg.eigvalsh(covs)
        lo = self.sigma_min**2
        bad = np.flatnonzero(eig[:, 0] < lo * (1 - 1e-12))
        if bad.size:
            raise ContractViolation(
                f"covariance {int(bad[0])} has eigenvalue {eig[bad[0], 0]:.6g} below sigma_min^2 = {lo:.6g}"
            )
        if self.sigma_max is not None:
            hi = self.sigma_max**2
            bad = np.flatnonzero(eig[:, -1] > hi * (1 + 1e-12))
            if bad.size:
                raise ContractViolation(f"covariance {int(bad[0])} exceeds sigma_max^2 = {hi:.6g}")


class HeteroFit(NamedTuple):
    density: ScaledMixture
    result: DenoiseResult
    fit: solver.FitResult


def hetero_fit_and_denoise(
    data,
    model: HeteroModel,
    support: solver.SupportStrategy = solver.Exemplar(),
    cfg: solver.SolverConfig = solver.SolverConfig(),
    latents=None,
    rho=0.0,
) -> HeteroFit:
    """Fit the NPMLE to ``X / sigma_min`` and map the denoiser back.

    The density estimate on the original scale is
    ``sigma_min^{-d} f(x / sigma_min)`` and the estimates are
    ``sigma_min * T(X / sigma_min)`` with T the Tweedie rule of the fit.
    When ``latents`` and ``model.per_point_cov`` are both given, the
    closed-form heteroscedastic target is attached as the oracle and the
    risks against it and against ``latents`` are filled in.
    """
    x, _ = as_points(data)
    n, d = x.shape
    model.validate(n, d)
    s = float(model.sigma_min)
    scaled = x / s
    res = solver.fit(scaled, support, cfg)
    G = res.mixture.pruned()
    inner = tweedie_denoise(G, scaled, rho)
    out = DenoiseResult(estimates=s * inner.estimates, rho_used=inner.rho_used)
    if latents is not None:
        oracle = None
        if model.per_point_cov is not None:
            oracle = hetero_tweedie_oracle(latents, model.per_point_cov, x, s)
        out = out.compared(oracle=oracle, truth=latents)
    return HeteroFit(ScaledMixture(G, s), out, res)
