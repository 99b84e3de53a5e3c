"""Monte Carlo harness for the grouped-status simulation design.

Each replication draws ten group-level statuses, assigns nodes to groups,
mixes two sparsity levels over the nodes, samples a network and fits it.
Every replication owns the random stream ``(base_seed, rep_index)``, so the
metrics of a replication do not depend on which worker ran it or when.
"""

from __future__ import annotations

import concurrent.futures
import csv
import io
import logging
import math
import os
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DomainError, SignedBetaError
from .estimation import SolverConfig, asymptotic_variances, fit
from .inference import rank_report
from .kappa import estimate_kappa
from .model import KappaVector, Theta, sample_network
from .numerics import RandomStream, std_normal_quantile

__all__ = [
    "ScenarioConfig",
    "Scenario",
    "ReplicationMetrics",
    "ReplicationFailure",
    "AggregateTable",
    "CellResult",
    "generate_scenario",
    "run_replication",
    "aggregate",
    "run_cell",
    "cell_csv",
    "manifest",
    "WORKERS_ENV",
]

log = logging.getLogger(__name__)

WORKERS_ENV = "SIGNED_BETA_WORKERS"
N_GROUPS = 10


@dataclass(frozen=True)
class ScenarioConfig:
    """One cell of the simulation grid.

    ``group_spread`` is the second parameter of the normal draws of the group
    statuses; ``spread_reading`` says whether it is a standard deviation
    (``"sd"``, default) or a variance (``"variance"``).

    ``kappa_mode="estimate"`` classifies nodes and estimates the high
    sparsity level from each sampled network; ``"true"`` fits with the
    generating sparsity vector.
    """

    n: int = 200
    kappa01: float = 0.05
    kappa00: float = 0.001
    group_probs: tuple = (0.15,) * 5 + (0.05,) * 5
    alpha_group_mean: float = -0.5
    beta_group_mean: float = 0.0
    group_spread: float = 0.5
    spread_reading: str = "sd"
    p_high_kappa: float = 0.8
    replications: int = 100
    base_seed: int = 0
    kappa_mode: str = "estimate"
    n_pairs: int = 100
    alpha: float = 0.05
    level: float = 0.95
    per_other_group: int = 10
    xi: float | None = None
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        probs = np.asarray(self.group_probs, dtype=float)
        if probs.shape != (N_GROUPS,) or np.any(probs < 0):
            raise DomainError(f"group_probs must be {N_GROUPS} non-negative numbers")
        if abs(probs.sum() - 1.0) > 1e-12:
            raise DomainError(f"group_probs must sum to 1, got {probs.sum()!r}")
        object.__setattr__(self, "group_probs", tuple(float(p) for p in probs))
        if self.n < 3:
            raise DomainError(f"n must be at least 3, got {self.n}")
        if not 0.0 < self.kappa00 < self.kappa01 < 1.0:
            raise DomainError("need 0 < kappa00 < kappa01 < 1")
        if not 0.0 <= self.p_high_kappa <= 1.0:
            raise DomainError(f"p_high_kappa must lie in [0, 1], got {self.p_high_kappa}")
        if self.spread_reading not in ("sd", "variance"):
            raise DomainError("spread_reading must be 'sd' or 'variance'")
        if self.group_spread < 0:
            raise DomainError("group_spread must be non-negative")
        if self.kappa_mode not in ("estimate", "true"):
            raise DomainError("kappa_mode must be 'estimate' or 'true'")
        if self.replications < 1:
            raise DomainError("replications must be positive")
        if not 0 <= self.base_seed < 2**64:
            raise DomainError("base_seed must be a 64-bit unsigned integer")
        if not 0.0 < self.alpha < 1.0 or not 0.0 < self.level < 1.0:
            raise DomainError("alpha and level must lie in (0, 1)")

    @property
    def group_sd(self) -> float:
        if self.spread_reading == "sd":
            return self.group_spread
        return math.sqrt(self.group_spread)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["group_probs"] = list(self.group_probs)
        return out


@dataclass(frozen=True)
class Scenario:
    theta: Theta
    kappa: KappaVector
    groups: np.ndarray
    alpha_groups: np.ndarray
    beta_groups: np.ndarray


METRIC_NAMES = (
    "linf_check", "linf_hat", "mse_check", "mse_hat",
    "coverage_check", "coverage_hat", "fdp_check", "fdp_hat",
    "power_check", "power_hat", "kappa01_hat", "class_recovered", "z_alpha0",
)


@dataclass(frozen=True)
class ReplicationMetrics:
    """Per-replication metrics.

    ``z_alpha0`` is ``(alpha_hat_0 - alpha*_0) / sqrt(avar)`` with the
    asymptotic variance of the one-step estimate evaluated at the truth.
    ``kappa01_hat`` and ``class_recovered`` are NaN when the true sparsity
    vector is used.  ``k_null`` and ``k_candidates`` count the true-null and
    all candidates of the multiple comparison.
    """

    rep_index: int
    linf_check: float
    linf_hat: float
    mse_check: float
    mse_hat: float
    coverage_check: float
    coverage_hat: float
    fdp_check: float
    fdp_hat: float
    power_check: float
    power_hat: float
    kappa01_hat: float
    class_recovered: float
    z_alpha0: float
    k_null: int = 0
    k_candidates: int = 0


@dataclass(frozen=True)
class ReplicationFailure:
    rep_index: int
    error: str
    message: str


def generate_scenario(config: ScenarioConfig, rng) -> Scenario:
    """Draw group statuses, memberships and the sparsity vector.

    Draw order: alpha groups, beta groups, memberships, sparsity classes.
    """
    sd = config.group_sd
    a = rng.normal(config.alpha_group_mean, sd, N_GROUPS)
    b = rng.normal(config.beta_group_mean, sd, N_GROUPS)
    groups = rng.choice(N_GROUPS, size=config.n, p=np.asarray(config.group_probs))
    alpha = a[groups]
    beta = b[groups].copy()
    beta[-1] = 0.0
    high = rng.random(config.n) < config.p_high_kappa
    kappa = KappaVector.from_classes(high, config.kappa00, config.kappa01)
    return Scenario(Theta(alpha, beta), kappa, groups, a, b)


def _coverage_pairs(n, count, rng):
    rows, cols = np.triu_indices(n, 1)
    pick = rng.choice(rows.size, size=min(count, rows.size), replace=False)
    return rows[pick], cols[pick]


def _coverage(theta, u, truth, rows, cols, z):
    diff = theta.alpha[rows] - theta.alpha[cols]
    target = truth.alpha[rows] - truth.alpha[cols]
    half = z * np.sqrt(1.0 / u.u[rows] + 1.0 / u.u[cols])
    return float(np.mean(np.abs(diff - target) <= half))


def _comparison_design(scenario: Scenario, rng, per_other_group: int):
    """Focal node from the top in-status group, candidates from every group.

    The pinned last node is left out since its in-status has no standard
    error.  Returns ``(focal, candidates, null_mask)``.
    """
    n = scenario.groups.size
    eligible = np.arange(n - 1)
    groups = scenario.groups[: n - 1]
    order = np.argsort(-scenario.beta_groups, kind="stable")
    top = next(g for g in order if np.any(groups == g))
    members = eligible[groups == top]
    focal = int(rng.choice(members))
    candidates = [int(i) for i in members if i != focal]
    for g in range(N_GROUPS):
        if g != top:
            candidates.extend(int(i) for i in eligible[groups == g][:per_other_group])
    candidates = np.array(sorted(candidates), dtype=int)
    null = scenario.groups[candidates] == top
    return focal, candidates, null


def _fdp_power(result, facet, focal, candidates, null, config, estimate):
    if candidates.size == 0:
        return math.nan, math.nan
    rep = rank_report(result, facet, focal, candidates, config.alpha,
                      estimate=estimate).report
    rejected = np.isin(candidates, list(rep.rejected))
    n_rej = int(rejected.sum())
    fdp = float((rejected & null).sum() / n_rej) if n_rej else 0.0
    n_alt = int((~null).sum())
    power = float((rejected & ~null).sum() / n_alt) if n_alt else math.nan
    return fdp, power


def _population_avar_alpha0(theta, kappa):
    return float(asymptotic_variances(theta, kappa)[1][0])


def run_replication(config: ScenarioConfig, rep_index: int):
    """Run one replication; solver and data failures become ReplicationFailure."""
    rng = RandomStream(config.base_seed, rep_index)
    scenario = generate_scenario(config, rng)
    graph = sample_network(scenario.theta, scenario.kappa, rng)
    rows, cols = _coverage_pairs(config.n, config.n_pairs, rng)
    focal, candidates, null = _comparison_design(scenario, rng, config.per_other_group)
    try:
        if config.kappa_mode == "true":
            kappa = scenario.kappa
            kappa01_hat = recovered = math.nan
        else:
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always", RuntimeWarning)
                est = estimate_kappa(graph, config.xi, kappa00=config.kappa00,
                                     config=config.solver)
            for w in caught:
                log.debug("replication %d: %s", rep_index, w.message)
            kappa = est.kappa_vector(config.n)
            kappa01_hat = est.kappa01_hat
            truth = frozenset(np.flatnonzero(scenario.kappa.high).tolist())
            recovered = float(est.class_high == truth)
        result = fit(graph, kappa, config.solver)
        truth = scenario.theta.free
        err_c = result.theta_check.free - truth
        err_h = result.theta_hat.free - truth
        dim = truth.size
        z = std_normal_quantile(0.5 + config.level / 2.0)
        fdp_c, pow_c = _fdp_power(result, "beta", focal, candidates, null, config, "check")
        fdp_h, pow_h = _fdp_power(result, "beta", focal, candidates, null, config, "hat")
        avar = _population_avar_alpha0(scenario.theta, scenario.kappa)
        z_alpha0 = float((result.theta_hat.alpha[0] - scenario.theta.alpha[0]) / math.sqrt(avar))
        return ReplicationMetrics(
            rep_index=rep_index,
            linf_check=float(np.abs(err_c).max()),
            linf_hat=float(np.abs(err_h).max()),
            mse_check=float(err_c @ err_c / dim),
            mse_hat=float(err_h @ err_h / dim),
            coverage_check=_coverage(result.theta_check, result.u_check,
                                     scenario.theta, rows, cols, z),
            coverage_hat=_coverage(result.theta_hat, result.u_hat,
                                   scenario.theta, rows, cols, z),
            fdp_check=fdp_c, fdp_hat=fdp_h, power_check=pow_c, power_hat=pow_h,
            kappa01_hat=float(kappa01_hat), class_recovered=float(recovered),
            z_alpha0=z_alpha0,
            k_null=int(null.sum()), k_candidates=int(candidates.size),
        )
    except SignedBetaError as exc:
        log.warning("replication %d failed: %s", rep_index, exc)
        return ReplicationFailure(rep_index, type(exc).__name__, str(exc))


@dataclass(frozen=True)
class AggregateTable:
    """Mean and sample standard deviation per metric.

    ``sd_undefined`` is set when fewer than two replications succeeded; the
    SDs are then reported as 0.
    """

    mean: dict
    sd: dict
    n_ok: int
    n_failed: int
    failed_reps: tuple
    sd_undefined: bool


def aggregate(results) -> AggregateTable:
    """Order-independent aggregation of replication results."""
    results = list(results)
    if not results:
        raise DomainError("cannot aggregate an empty result list")
    ok = sorted((r for r in results if isinstance(r, ReplicationMetrics)),
                key=lambda r: r.rep_index)
    failed = tuple(sorted(r.rep_index for r in results
                          if isinstance(r, ReplicationFailure)))
    mean, sd = {}, {}
    for name in METRIC_NAMES:
        vals = np.array([getattr(r, name) for r in ok], dtype=float)
        vals = vals[~np.isnan(vals)]
        if vals.size == 0:
            mean[name], sd[name] = math.nan, math.nan
            continue
        mean[name] = math.fsum(vals) / vals.size
        sd[name] = float(np.std(vals, ddof=1)) if vals.size > 1 else 0.0
    return AggregateTable(mean, sd, len(ok), len(failed), failed, len(ok) < 2)


@dataclass(frozen=True)
class CellResult:
    config: ScenarioConfig
    results: tuple
    table: AggregateTable


def _worker_count(workers):
    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV, "1") or 1)
    return max(1, int(workers))


def run_cell(config: ScenarioConfig, workers: int | None = None) -> CellResult:
    """Run all replications of a cell, optionally across worker processes.

    The worker count defaults to the ``SIGNED_BETA_WORKERS`` environment
    variable (1 if unset); results do not depend on it.
    """
    reps = range(config.replications)
    workers = _worker_count(workers)
    if workers == 1:
        results = [run_replication(config, r) for r in reps]
    else:
        with concurrent.futures.ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(run_replication, [config] * len(reps), reps))
    results = tuple(sorted(results, key=lambda r: r.rep_index))
    return CellResult(config, results, aggregate(results))


CSV_FIELDS = ("n", "kappa01", "metric", "estimator", "mean", "sd",
              "replications", "failed")


def cell_csv(cells) -> str:
    """Long-format table text: one row per (cell, metric, estimator)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_FIELDS)
    for cell in cells:
        tab = cell.table
        for name in METRIC_NAMES:
            base, _, est = name.rpartition("_")
            if est not in ("check", "hat"):
                base, est = name, ""
            writer.writerow([cell.config.n, repr(cell.config.kappa01), base, est,
                             repr(tab.mean[name]), repr(tab.sd[name]),
                             tab.n_ok, tab.n_failed])
    return buf.getvalue()


def manifest(cells, command: str | None = None) -> dict:
    """Configuration, seeds and failure accounting for a bench run."""
    out = {"cells": []}
    if command is not None:
        out["command"] = command
    for cell in cells:
        out["cells"].append({
            "config": cell.config.to_dict(),
            "succeeded": cell.table.n_ok,
            "failed": cell.table.n_failed,
            "failed_reps": list(cell.table.failed_reps),
            "failures": [asdict(r) for r in cell.results
                         if isinstance(r, ReplicationFailure)],
        })
    return out
