"""Nonparametric maximum likelihood for Gaussian location mixtures, with
empirical-Bayes denoising and a simulation harness."""

from .denoise import (
    DenoiseResult,
    HeteroFit,
    HeteroModel,
    best_separable_oracle,
    canonical_rho,
    denoising_risk,
    hetero_fit_and_denoise,
    hetero_tweedie_oracle,
    oracle_bayes,
    tweedie_denoise,
)
from .errors import ConfigurationError, ContractViolation, NPMLEError, NumericalError
from .kernels import BACKEND
from .metrics import HellingerEstimate, hellinger_squared, mean_squared_error, total_variation
from .mixture import MixingMeasure, ScaledMixture, log_density, log_likelihood, sample, score
from .sim import ScenarioSpec, adjusted_rand_index, gap_statistic, generate, kmeans, run_experiment
from .solver import (
    Binned,
    Exemplar,
    FitResult,
    Grid,
    SolverConfig,
    Subsample,
    build_support,
    duality_gap,
    fit,
    solve,
)

__version__ = "0.1.0"
