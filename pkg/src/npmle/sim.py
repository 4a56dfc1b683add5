"""Simulation scenarios, k-means competitors and replicated experiments.

Shape scenarios place the true means on curves in the plane; clustering
scenarios draw them from a few fixed atoms.  Observations are always the
means plus N(0, I_2) noise.
"""

from __future__ import annotations

import csv
import io
import json
import math
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import kernels
from .denoise import oracle_bayes, tweedie_denoise
from .errors import ConfigurationError, ContractViolation, NumericalError
from .metrics import mean_squared_error
from .mixture import MixingMeasure, as_points
from .solver import Exemplar, SolverConfig, SupportStrategy, fit

SHAPES = ("two-circles", "triangle", "digit-eight", "letter-a")
CLUSTERINGS = ("clustering1", "clustering2", "clustering3", "clustering4")
SCENARIOS = SHAPES + CLUSTERINGS

# each part is ("circle", centre, radius) or ("segment", start, end)
_SHAPE_PARTS = {
    "two-circles": [("circle", (0.0, 0.0), 2.0), ("circle", (0.0, 0.0), 6.0)],
    "triangle": [
        ("segment", (-3.0, 0.0), (0.0, 6.0)),
        ("segment", (0.0, 6.0), (3.0, 0.0)),
        ("segment", (3.0, 0.0), (-3.0, 0.0)),
    ],
    "digit-eight": [("circle", (0.0, 0.0), 3.0), ("circle", (0.0, 6.0), 3.0)],
    # two legs meeting at the apex, plus the crossbar
    "letter-a": [
        ("segment", (-4.0, -6.0), (-2.0, 0.0)),
        ("segment", (-2.0, 0.0), (0.0, 6.0)),
        ("segment", (0.0, 6.0), (2.0, 0.0)),
        ("segment", (2.0, 0.0), (4.0, -6.0)),
        ("segment", (-2.0, 0.0), (2.0, 0.0)),
    ],
}

_CLUSTER_ATOMS = {
    "clustering1": ([(0.0, 0.0), (2.0, 2.0)], [0.5, 0.5]),
    "clustering2": ([(0.0, 0.0), (2.0, 2.0)], [0.25, 0.75]),
    "clustering3": ([(0.0, 0.0), (0.0, 2.0), (2.0, -2.0)], [0.25, 0.25, 0.5]),
    "clustering4": ([(0.0, 0.0), (0.0, 3.0), (3.0, 0.0), (3.0, 3.0)], None),
}


@dataclass(frozen=True, eq=False)
class ScenarioSpec:
    """``kind`` is one of :data:`SCENARIOS` or ``"custom"`` (with ``mixture``)."""

    kind: str
    n: int
    seed: int = 0
    mixture: MixingMeasure | None = None

    def __post_init__(self):
        if self.n < 1:
            raise ContractViolation("n must be >= 1")
        if self.kind == "custom":
            if self.mixture is None:
                raise ConfigurationError("custom scenario needs a mixture")
        elif self.kind not in SCENARIOS:
            raise ConfigurationError(
                f"unknown scenario {self.kind!r}; valid: {', '.join(SCENARIOS + ('custom',))}"
            )

    @property
    def has_clusters(self):
        return self.kind not in SHAPES


class Scenario(NamedTuple):
    latents: np.ndarray
    x: np.ndarray
    labels: np.ndarray
    prior: MixingMeasure | None  # generating mixing measure, when discrete


def _split(n, parts):
    """Equal share per part; the remainder goes to the first part."""
    counts = [n // parts] * parts
    counts[0] += n - sum(counts)
    return counts


def _draw_shape(kind, n, rng):
    parts = _SHAPE_PARTS[kind]
    chunks, labels = [], []
    for idx, (part, count) in enumerate(zip(parts, _split(n, len(parts)))):
        if part[0] == "circle":
            _, centre, radius = part
            ang = rng.uniform(0.0, 2.0 * math.pi, count)
            pts = np.asarray(centre) + radius * np.column_stack([np.cos(ang), np.sin(ang)])
        else:
            _, p, q = part
            t = rng.uniform(0.0, 1.0, count)[:, None]
            pts = np.asarray(p) + t * (np.asarray(q) - np.asarray(p))
        chunks.append(pts)
        labels.append(np.full(count, idx))
    return np.concatenate(chunks), np.concatenate(labels)


def generate(spec: ScenarioSpec) -> Scenario:
    rng = np.random.default_rng(spec.seed)
    if spec.kind in SHAPES:
        theta, labels = _draw_shape(spec.kind, spec.n, rng)
        prior = None
    else:
        if spec.kind == "custom":
            prior = spec.mixture
        else:
            atoms, probs = _CLUSTER_ATOMS[spec.kind]
            if probs is None:
                probs = rng.dirichlet(np.ones(len(atoms)))
            prior = MixingMeasure.from_weights(atoms, probs)
        labels = rng.choice(prior.size, size=spec.n, p=prior.weights)
        theta = prior.atoms[labels]
    x = theta + rng.standard_normal(theta.shape)
    return Scenario(theta, x, labels, prior)


# -- k-means and the gap statistic ---------------------------------------------

class KMeansResult(NamedTuple):
    centers: np.ndarray
    labels: np.ndarray
    within_ss: float


def kmeans(data, k, restarts=10, seed=0, max_iter=300) -> KMeansResult:
    """Lloyd's algorithm from ``restarts`` random-point starts; best run wins."""
    x, _ = as_points(data)
    n = x.shape[0]
    if not 1 <= k <= n:
        raise ContractViolation(f"k must lie in [1, {n}], got {k}")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(max(1, restarts)):
        centers = np.ascontiguousarray(x[rng.choice(n, size=k, replace=False)])
        labels, inertia, _ = kernels.lloyd(x, centers, max_iter)
        if best is None or inertia < best.within_ss:
            best = KMeansResult(centers, np.asarray(labels), float(inertia))
    return best


class GapResult(NamedTuple):
    k: int
    gap: np.ndarray  # Gap(k) for k = 1..k_max
    s: np.ndarray  # s_k = sd_k * sqrt(1 + 1/B)
    log_w: np.ndarray
    clustering: KMeansResult  # k-means fit at the chosen k


def gap_statistic(data, k_max=10, b_refs=10, seed=0, restarts=10) -> GapResult:
    """Choose k by the gap statistic with uniform bounding-box references.

    Returns the smallest k with ``Gap(k) >= Gap(k+1) - s_{k+1}``, or
    ``k_max`` when none qualifies.  Degenerate data (a single distinct point)
    gives k = 1.
    """
    x, _ = as_points(data)
    if k_max < 1 or b_refs < 1:
        raise ContractViolation("k_max and b_refs must be >= 1")
    distinct = np.unique(x, axis=0).shape[0]
    rng = np.random.default_rng(seed)
    if distinct == 1:
        fit1 = kmeans(x, 1, 1, seed)
        return GapResult(1, np.zeros(1), np.zeros(1), np.array([-np.inf]), fit1)
    k_max = min(k_max, distinct)
    ks = range(1, k_max + 1)
    fits = [kmeans(x, k, restarts, int(rng.integers(2**63))) for k in ks]
    with np.errstate(divide="ignore"):
        log_w = np.log([f.within_ss for f in fits])
    lo, hi = x.min(axis=0), x.max(axis=0)
    ref = np.empty((b_refs, k_max))
    for b in range(b_refs):
        xb = lo + rng.uniform(size=x.shape) * (hi - lo)
        for i, k in enumerate(ks):
            ref[b, i] = math.log(kmeans(xb, k, restarts, int(rng.integers(2**63))).within_ss)
    gap = ref.mean(axis=0) - log_w
    s = ref.std(axis=0) * math.sqrt(1.0 + 1.0 / b_refs)
    chosen = k_max
    for i in range(k_max - 1):
        if gap[i] >= gap[i + 1] - s[i + 1]:
            chosen = i + 1
            break
    return GapResult(chosen, gap, s, log_w, fits[chosen - 1])


def adjusted_rand_index(labels_a, labels_b):
    """Adjusted Rand index from the pair-counting contingency table."""
    a = np.asarray(labels_a).reshape(-1)
    b = np.asarray(labels_b).reshape(-1)
    if a.shape != b.shape:
        raise ContractViolation(f"label vectors differ in length: {a.size} vs {b.size}")
    _, ia = np.unique(a, return_inverse=True)
    _, ib = np.unique(b, return_inverse=True)
    table = np.zeros((ia.max() + 1, ib.max() + 1), dtype=np.int64)
    np.add.at(table, (ia, ib), 1)
    pairs = lambda v: int((v * (v - 1) // 2).sum())
    index = pairs(table)
    rows, cols = pairs(table.sum(axis=1)), pairs(table.sum(axis=0))
    total = a.size * (a.size - 1) // 2
    expected = rows * cols / total if total else 0.0
    top = 0.5 * (rows + cols)
    if top == expected:
        return 1.0
    return (index - expected) / (top - expected)


def eb_cluster_assign(fit: MixingMeasure, data):
    """Label each point by the atom with the largest posterior responsibility."""
    x, _ = as_points(data, fit.dim)
    _, _, top = kernels.mixture_logsumexp(x, fit.atoms, fit.log_weights(), False)
    return top


# -- experiments ------------------------------------------------------------------

METRICS = (
    "mse_eb_vs_truth",
    "mse_oracle_vs_truth",
    "mse_eb_vs_oracle",
    "mse_kmeans_oracle_k",
    "mse_kmeans_gap",
    "ari_eb",
    "ari_kmeans_oracle_k",
    "ari_kmeans_gap",
    "ari_oracle_bayes",
    "fit_duality_gap",
    "kmeans_gap_k",
)


def replicate_seeds(seed, n, replicate):
    """Independent integer seeds for (data, k-means, gap) of one replicate."""
    state = np.random.SeedSequence([seed, n, replicate]).generate_state(3)
    return tuple(int(v) for v in state)


@dataclass
class ExperimentReport:
    scenario: str
    seed: int
    n_replicates: int
    n_list: list
    records: list = field(default_factory=list)  # (n, replicate, metric, value)

    def values(self, n, metric):
        return np.array([v for (nn, _, m, v) in self.records if nn == n and m == metric])

    def mean(self, n, metric):
        return float(np.mean(self.values(n, metric)))

    def std_error(self, n, metric):
        v = self.values(n, metric)
        return float(np.std(v, ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0

    def summary(self):
        cells = defaultdict(dict)
        for n in self.n_list:
            for metric in METRICS:
                v = self.values(n, metric)
                if v.size:
                    cells[str(n)][metric] = {
                        "mean": float(np.mean(v)),
                        "std_error": self.std_error(n, metric),
                        "count": int(v.size),
                    }
        return {
            "scenario": self.scenario,
            "seed": self.seed,
            "n_replicates": self.n_replicates,
            "n_list": list(self.n_list),
            "cells": dict(cells),
        }

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["scenario", "n", "replicate", "metric", "value"])
        for n, r, metric, value in self.records:
            w.writerow([self.scenario, n, r, metric, format(value, ".17g")])
        return buf.getvalue()

    def to_json(self):
        return json.dumps(self.summary(), indent=2, sort_keys=True)


def _default_methods(spec_kind):
    return ("eb", "oracle") if spec_kind in SHAPES else ("eb", "oracle", "kmeans", "gap")


def run_replicate(kind, n, replicate, seed, methods, cfg, support, k_max, b_refs, restarts, mixture=None):
    """All metrics for one (n, replicate) cell, as a sorted list of records."""
    s_data, s_km, s_gap = replicate_seeds(seed, n, replicate)
    scen = generate(ScenarioSpec(kind, n, s_data, mixture))
    clustered = scen.prior is not None
    out = {}
    try:
        res = fit(scen.x, support, cfg)
    except NumericalError as exc:
        raise NumericalError(f"n={n}, replicate={replicate}: {exc}") from exc
    G = res.mixture.pruned()
    eb = tweedie_denoise(G, scen.x).estimates
    out["fit_duality_gap"] = res.duality_gap
    out["mse_eb_vs_truth"] = mean_squared_error(eb, scen.latents)
    if "oracle" in methods:
        ob = oracle_bayes(MixingMeasure.empirical(scen.latents), scen.x)
        out["mse_oracle_vs_truth"] = mean_squared_error(ob, scen.latents)
        out["mse_eb_vs_oracle"] = mean_squared_error(eb, ob)
    if clustered:
        out["ari_eb"] = adjusted_rand_index(eb_cluster_assign(G, scen.x), scen.labels)
        if "oracle" in methods:
            out["ari_oracle_bayes"] = adjusted_rand_index(eb_cluster_assign(scen.prior, scen.x), scen.labels)
    if "kmeans" in methods:
        k_true = scen.prior.size if clustered else len(_SHAPE_PARTS[kind])
        km = kmeans(scen.x, min(k_true, n), restarts, s_km)
        out["mse_kmeans_oracle_k"] = mean_squared_error(km.centers[km.labels], scen.latents)
        if clustered:
            out["ari_kmeans_oracle_k"] = adjusted_rand_index(km.labels, scen.labels)
    if "gap" in methods:
        gs = gap_statistic(scen.x, k_max, b_refs, s_gap, restarts)
        km = gs.clustering
        out["kmeans_gap_k"] = float(gs.k)
        out["mse_kmeans_gap"] = mean_squared_error(km.centers[km.labels], scen.latents)
        if clustered:
            out["ari_kmeans_gap"] = adjusted_rand_index(km.labels, scen.labels)
    return [(n, replicate, m, float(out[m])) for m in METRICS if m in out]


def run_experiment(
    kind,
    n_list,
    n_replicates,
    methods=None,
    seed=0,
    cfg: SolverConfig = SolverConfig(),
    support: SupportStrategy = Exemplar(),
    k_max=10,
    b_refs=10,
    restarts=10,
    mixture=None,
    workers=1,
) -> ExperimentReport:
    """Replicated comparison of empirical Bayes, oracle Bayes and k-means.

    Replicate r at sample size n is seeded from ``(seed, n, r)`` alone, so any
    cell can be rerun in isolation and the report does not depend on
    ``workers``.
    """
    if n_replicates < 1:
        raise ContractViolation("n_replicates must be >= 1")
    ScenarioSpec(kind, 1, 0, mixture)  # validates the name early
    methods = tuple(methods) if methods else _default_methods(kind)
    jobs = [
        (kind, int(n), r, seed, methods, cfg, support, k_max, b_refs, restarts, mixture)
        for n in n_list
        for r in range(n_replicates)
    ]
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(run_replicate, *zip(*jobs)))
    else:
        chunks = [run_replicate(*job) for job in jobs]
    records = sorted((rec for chunk in chunks for rec in chunk), key=lambda t: (t[0], t[1], METRICS.index(t[2])))
    return ExperimentReport(kind, seed, n_replicates, [int(n) for n in n_list], records)
