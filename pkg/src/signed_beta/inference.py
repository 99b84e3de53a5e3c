"""Pairwise comparisons of node statuses and multiple testing.

Differences ``theta_a - theta_b`` of fitted statuses are studentized with
``delta_ab = sqrt(1/u_a + 1/u_b)``, where ``u`` are the observed curvatures at
the one-step estimate.  Ranking one focal node against a candidate set uses a
Benjamini-Hochberg step-up rule with the harmonic factor
``L = sum_{l <= K} 1/l`` in the thresholds, which keeps the FDR under control
for the dependent p-values produced here.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import CurvatureError, DomainError, ReferenceNodeError
from .estimation import FitResult
from .numerics import std_normal_quantile, std_normal_sf

__all__ = [
    "Facet",
    "PairwiseResult",
    "MultipleComparisonReport",
    "RankedComparison",
    "RankReport",
    "pairwise_interval",
    "pairwise_pvalue",
    "bh_multiple_comparison",
    "rank_report",
]


class Facet(enum.Enum):
    """Which status is compared: out-status ``alpha`` or in-status ``beta``."""

    ALPHA = "alpha"
    BETA = "beta"

    @classmethod
    def _missing_(cls, value):
        aliases = {"out_status": cls.ALPHA, "out": cls.ALPHA,
                   "in_status": cls.BETA, "in": cls.BETA}
        if isinstance(value, str):
            return aliases.get(value.lower()) or cls.__members__.get(value.upper())
        return None


@dataclass(frozen=True)
class PairwiseResult:
    i: int
    j: int
    facet: Facet
    point: float
    delta_hat: float
    level: float
    lower: float
    upper: float
    p_value: float


@dataclass(frozen=True)
class MultipleComparisonReport:
    """Outcome of the step-up procedure.

    ``r`` is the 1-based cutoff rank, or ``None`` when no sorted p-value
    clears its threshold.  ``rejected`` holds candidate labels.
    """

    focal: int | None
    candidates: tuple
    p_values: np.ndarray
    L: float
    r: int | None
    rejected: frozenset
    alpha: float


@dataclass(frozen=True)
class RankedComparison:
    pairwise: PairwiseResult
    indiv_sig: bool
    multi_sig: bool


@dataclass(frozen=True)
class RankReport:
    report: MultipleComparisonReport
    comparisons: tuple


def _params(fit: FitResult, facet: Facet, estimate: str):
    if estimate == "hat":
        return fit.theta_hat, fit.u_hat
    if estimate == "check":
        return fit.theta_check, fit.u_check
    raise DomainError(f"estimate must be 'hat' or 'check', got {estimate!r}")


def _index(fit, facet, node):
    n = fit.n
    if isinstance(node, (bool, np.bool_)) or int(node) != node:
        raise DomainError(f"node index must be an integer, got {node!r}")
    node = int(node)
    if not 0 <= node < n:
        raise DomainError(f"node index {node} out of range for n={n}")
    if facet is Facet.BETA and node == n - 1:
        raise ReferenceNodeError(
            f"in-status of node {n - 1} is pinned to zero and has no standard error")
    return node


def _studentize(fit, facet, i, j, estimate):
    facet = Facet(facet)
    i, j = _index(fit, facet, i), _index(fit, facet, j)
    if i == j:
        raise DomainError(f"pairwise comparison needs two distinct nodes, got {i} twice")
    theta, u = _params(fit, facet, estimate)
    if facet is Facet.ALPHA:
        point = float(theta.alpha[i] - theta.alpha[j])
        a, b = i, j
    else:
        point = float(theta.beta[i] - theta.beta[j])
        a, b = fit.n + i, fit.n + j
    for idx in (a, b):
        if not u.u[idx] > 0.0:
            raise CurvatureError(idx, float(u.u[idx]))
    delta = math.sqrt(1.0 / u.u[a] + 1.0 / u.u[b])
    return facet, i, j, point, delta


def _two_sided(point, delta):
    return min(1.0, 2.0 * std_normal_sf(abs(point) / delta))


def pairwise_interval(fit: FitResult, facet, i: int, j: int, level: float = 0.95,
                      estimate: str = "hat") -> PairwiseResult:
    """Confidence interval and two-sided p-value for ``theta_i - theta_j``.

    Parameters
    ----------
    fit : FitResult
    facet : Facet or str
        ``"alpha"``/``"out_status"`` or ``"beta"``/``"in_status"``.
    i, j : int
        Distinct node indices.  The in-status of node ``n - 1`` is the pinned
        reference and cannot be compared.
    level : float
        Confidence level in (0, 1).
    estimate : {"hat", "check"}
        Use the one-step estimate and its curvatures (default) or the
        moment-equation root and the curvatures evaluated there.
    """
    if not 0.0 < level < 1.0:
        raise DomainError(f"level must lie in (0, 1), got {level!r}")
    facet, i, j, point, delta = _studentize(fit, facet, i, j, estimate)
    half = std_normal_quantile(0.5 + level / 2.0) * delta
    return PairwiseResult(i, j, facet, point, delta, float(level),
                          point - half, point + half, _two_sided(point, delta))


def pairwise_pvalue(fit: FitResult, facet, i: int, k: int, estimate: str = "hat") -> float:
    """Two-sided normal p-value for ``H0: theta_i = theta_k``."""
    _, _, _, point, delta = _studentize(fit, facet, i, k, estimate)
    return _two_sided(point, delta)


def bh_multiple_comparison(p_values, alpha: float = 0.05, *, candidates=None,
                           focal=None, empty_policy: str = "standard"
                           ) -> MultipleComparisonReport:
    """Step-up procedure with thresholds ``alpha * l / (K * L)``.

    The cutoff rank is the largest ``l`` with ``p_(l) <= alpha l / (K L)``;
    every p-value at or below ``p_(r)`` is rejected, so ties share a fate.
    When no rank qualifies, ``empty_policy="standard"`` rejects nothing and
    ``"reject-all"`` rejects every hypothesis.
    """
    p = np.asarray(p_values, dtype=float).ravel()
    if p.size == 0:
        raise DomainError("need at least one p-value")
    if not np.all((p >= 0.0) & (p <= 1.0)):
        raise DomainError(f"p-values must lie in [0, 1], got {p!r}")
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha!r}")
    if empty_policy not in ("standard", "reject-all"):
        raise DomainError(f"unknown empty_policy {empty_policy!r}")
    labels = tuple(range(p.size)) if candidates is None else tuple(candidates)
    if len(labels) != p.size:
        raise DomainError(f"{len(labels)} candidate labels for {p.size} p-values")

    k = p.size
    harmonic = float(np.sum(1.0 / np.arange(1, k + 1)))
    ordered = np.sort(p, kind="stable")
    thresholds = alpha * np.arange(1, k + 1) / (k * harmonic)
    passing = np.flatnonzero(ordered <= thresholds)
    if passing.size:
        r = int(passing[-1]) + 1
        mask = p <= ordered[r - 1]
    else:
        r = None
        mask = np.full(k, empty_policy == "reject-all")
    rejected = frozenset(labels[idx] for idx in np.flatnonzero(mask))
    p.setflags(write=False)
    return MultipleComparisonReport(focal, labels, p, harmonic, r, rejected, float(alpha))


def rank_report(fit: FitResult, facet, focal: int, candidates, alpha: float = 0.05,
                level: float | None = None, estimate: str = "hat",
                empty_policy: str = "standard") -> RankReport:
    """Compare a focal node with each candidate and apply the step-up rule.

    ``indiv_sig`` marks candidates whose own two-sided test rejects at
    ``alpha`` (equivalently, 0 lies outside the ``1 - alpha`` interval);
    ``multi_sig`` marks candidates rejected by the multiple-testing rule.
    """
    candidates = tuple(int(c) for c in candidates)
    if not candidates:
        raise DomainError("candidate set is empty")
    if len(set(candidates)) != len(candidates):
        raise DomainError("candidate set contains duplicates")
    if int(focal) in candidates:
        raise DomainError(f"focal node {focal} is also listed as a candidate")
    level = 1.0 - alpha if level is None else level
    pairs = [pairwise_interval(fit, facet, focal, c, level, estimate) for c in candidates]
    report = bh_multiple_comparison([pr.p_value for pr in pairs], alpha,
                                    candidates=candidates, focal=int(focal),
                                    empty_policy=empty_policy)
    rows = tuple(RankedComparison(pr, pr.p_value < alpha, pr.j in report.rejected)
                 for pr in pairs)
    return RankReport(report, rows)
