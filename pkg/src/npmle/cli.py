"""Command line: ``npmle fit``, ``npmle denoise`` and ``npmle simulate``.

Exit status is 0 on success (a fit that hit the iteration limit only warns),
2 for usage or input errors and 3 for numerical failures.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from . import io, kernels
from .denoise import canonical_rho, oracle_bayes, tweedie_denoise
from .errors import ConfigurationError, ContractViolation, NumericalError
from .metrics import mean_squared_error
from .mixture import MixingMeasure
from .sim import SCENARIOS, run_experiment
from .solver import Binned, Exemplar, Grid, SolverConfig, Subsample, fit, mixture_from_dict

log = logging.getLogger("npmle")

FULL_N_LIST = [300, 600, 900, 1200, 1500, 1800, 2100]
DESK_N_LIST = [300, 600, 900]


class UsageError(Exception):
    pass


def _default_seed():
    raw = os.environ.get("NPMLE_SEED")
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"NPMLE_SEED must be an integer, got {raw!r}") from None


def _add_common(p):
    p.add_argument("--seed", type=int, default=None, help="random seed (default: $NPMLE_SEED or 0)")
    p.add_argument("--threads", type=int, default=0, help="kernel threads (0 = all cores)")
    p.add_argument("-v", "--verbose", action="count", default=0)


def _add_solver(p):
    p.add_argument("--support", choices=["exemplar", "grid", "subsample", "binned"], default="exemplar")
    p.add_argument("--grid-points", type=int, default=None, help="grid points per dimension")
    p.add_argument("--subsample-m", type=int, default=None, help="atoms for --support subsample")
    p.add_argument("--bins", type=int, default=None, help="bins per dimension for --support binned")
    p.add_argument("--method", choices=["em", "fw", "em-fw"], default="em-fw")
    p.add_argument("--gap-tol", type=float, default=1e-6)
    p.add_argument("--max-iters", type=int, default=20_000)


def build_parser():
    parser = argparse.ArgumentParser(prog="npmle", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit the NPMLE to a CSV of observations")
    p.add_argument("--input", required=True)
    p.add_argument("--out", help="model JSON path (default: stdout)")
    _add_solver(p)
    _add_common(p)

    p = sub.add_parser("denoise", help="empirical-Bayes estimates for a CSV of observations")
    p.add_argument("--input", required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--model", help="model JSON written by 'npmle fit'")
    src.add_argument("--fit-inline", action="store_true", help="fit the NPMLE to --input first")
    p.add_argument("--sigma-min", type=float, default=None, help="noise std lower bound; fits X / sigma_min")
    p.add_argument("--rho", choices=["0", "auto"], default="0", help="density floor; auto = (2 pi)^(-d/2) / n")
    p.add_argument("--latents", help="CSV of true means; adds oracle columns and a risk summary")
    p.add_argument("--out", help="estimates CSV path (default: stdout)")
    p.add_argument("--risk-out", help="risk summary JSON path")
    _add_solver(p)
    _add_common(p)

    p = sub.add_parser("simulate", help="replicated simulation experiment")
    p.add_argument("--scenario", required=True, help=f"one of: {', '.join(SCENARIOS)}")
    p.add_argument("--n", type=int, nargs="+", default=None, help=f"sample sizes (default {DESK_N_LIST})")
    p.add_argument("--replicates", type=int, default=None, help="replicates per n (default 50)")
    p.add_argument("--full", action="store_true", help=f"n in {FULL_N_LIST} with 1000 replicates")
    p.add_argument("--methods", nargs="+", choices=["eb", "oracle", "kmeans", "gap"], default=None)
    p.add_argument("--k-max", type=int, default=10)
    p.add_argument("--b-refs", type=int, default=10)
    p.add_argument("--restarts", type=int, default=10)
    p.add_argument("--workers", type=int, default=1, help="replicate worker processes")
    p.add_argument("--out", help="long-format CSV path (default: stdout)")
    p.add_argument("--summary", help="aggregated JSON path")
    _add_solver(p)
    _add_common(p)
    return parser


def _strategy(args, n):
    if args.support == "exemplar":
        return Exemplar()
    if args.support == "grid":
        return Grid(args.grid_points)
    if args.support == "subsample":
        m = args.subsample_m or max(1, int(round(n**0.5)))
        return Subsample(min(m, n), args.seed)
    return Binned(args.bins or 32)


def _config(args):
    return SolverConfig(method=args.method, gap_tol=args.gap_tol, max_iters=args.max_iters, seed=args.seed)


def _emit(path, text):
    if path:
        io.write_text(path, text)
    else:
        sys.stdout.write(text)


def _report_fit(res):
    n_atoms = int(np.count_nonzero(res.mixture.weights))
    log.info("gap=%.3g loglik=%.10g atoms=%d iterations=%d", res.duality_gap, res.loglik, n_atoms, res.iterations)
    if not res.converged:
        log.warning("not converged: certificate gap %.3g above tolerance", res.duality_gap)


def cmd_fit(args):
    x = io.read_points_csv(args.input)
    res = fit(x, _strategy(args, x.shape[0]), _config(args))
    _report_fit(res)
    _emit(args.out, io.dumps(res.to_dict()))
    return 0


def cmd_denoise(args):
    x = io.read_points_csv(args.input)
    n, d = x.shape
    s = 1.0 if args.sigma_min is None else args.sigma_min
    if not s > 0:
        raise UsageError("--sigma-min must be positive")
    scaled = x / s
    if args.model:
        G = mixture_from_dict(io.read_json(args.model))
        if G.dim != d:
            raise ContractViolation(f"model has dimension {G.dim} but data has {d} columns")
    else:
        res = fit(scaled, _strategy(args, n), _config(args))
        _report_fit(res)
        G = res.mixture.pruned()
    rho = canonical_rho(n, d) if args.rho == "auto" else 0.0
    est = s * tweedie_denoise(G, scaled, rho).estimates
    oracle = None
    if args.latents:
        theta = io.read_points_csv(args.latents)
        if theta.shape != x.shape:
            raise ContractViolation(f"latents have shape {theta.shape}, data {x.shape}")
        oracle = oracle_bayes(MixingMeasure.empirical(theta), x)
        summary = {
            "n": n,
            "rho": rho,
            "risk_vs_oracle": mean_squared_error(est, oracle),
            "risk_vs_truth": mean_squared_error(est, theta),
            "oracle_risk_vs_truth": mean_squared_error(oracle, theta),
        }
        if args.risk_out:
            io.write_text(args.risk_out, io.dumps(summary))
        else:
            sys.stderr.write(io.dumps(summary))
    _emit(args.out, io.estimates_csv(x, est, oracle))
    return 0


def cmd_simulate(args):
    if args.scenario not in SCENARIOS:
        raise UsageError(f"unknown scenario {args.scenario!r}; valid names: {', '.join(SCENARIOS)}")
    if args.full:
        n_list, reps = FULL_N_LIST, 1000
    else:
        n_list, reps = DESK_N_LIST, 50
    n_list = args.n or n_list
    reps = args.replicates or reps
    n0 = min(n_list)
    report = run_experiment(
        args.scenario,
        n_list,
        reps,
        methods=args.methods,
        seed=args.seed,
        cfg=_config(args),
        support=_strategy(args, n0) if args.support != "subsample" else Exemplar(),
        k_max=args.k_max,
        b_refs=args.b_refs,
        restarts=args.restarts,
        workers=args.workers,
    )
    _emit(args.out, report.to_csv())
    if args.summary:
        io.write_text(args.summary, report.to_json() + "\n")
    return 0


COMMANDS = {"fit": cmd_fit, "denoise": cmd_denoise, "simulate": cmd_simulate}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose > 1 else logging.INFO,
        format="%(levelname)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        if args.seed is None:
            args.seed = _default_seed()
        kernels.set_num_threads(args.threads)
        return COMMANDS[args.command](args)
    except (UsageError, ContractViolation, ConfigurationError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"npmle {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"npmle {args.command}: numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
