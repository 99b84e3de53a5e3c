"""File formats: signed edge lists, fit JSON, report CSVs and plot data.

Edge lists are tab-separated ``src dst sign`` lines with ``sign`` in
``{1, +1, -1}``.  Lines starting with ``#`` are comments, except that a
``# nodes: N`` line fixes the node set to the integers ``0..N-1`` so isolated
nodes survive a round trip.
"""

from __future__ import annotations

import csv
import io
import json
import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DomainError, EdgeListError, PreprocessingEmptyError, _preview
from .estimation import CurvatureVector, FitResult
from .inference import Facet
from .model import SignedAdjacency, Theta

__all__ = [
    "EdgeList",
    "load_edge_list",
    "write_edge_list",
    "write_id_map",
    "Removal",
    "PreprocessResult",
    "preprocess",
    "fit_to_dict",
    "write_fit_json",
    "load_fit_json",
    "comparison_csv",
    "ranking_csv",
    "status_plot_series",
    "write_plot_series",
]

_NODES_HEADER = re.compile(r"^#\s*nodes\s*:\s*(\d+)\s*$", re.IGNORECASE)
_SIGNS = {"1": 1, "+1": 1, "-1": -1}


@dataclass(frozen=True)
class EdgeList:
    """A loaded network and the original id of each dense index."""

    graph: SignedAdjacency
    node_ids: tuple


def _is_int_id(token):
    return token.isdigit()


def load_edge_list(path) -> EdgeList:
    """Read a signed edge list and reindex its nodes densely from 0.

    Integer ids are ordered numerically and other ids lexicographically; if
    any id is not a non-negative integer, all ids are treated as strings.

    Raises
    ------
    EdgeListError
        Malformed line, unknown sign, self-loop or repeated ordered pair; the
        message carries the offending line number.
    FileNotFoundError
        If ``path`` does not exist.
    """
    declared = None
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                match = _NODES_HEADER.match(line)
                if match:
                    declared = int(match.group(1))
                continue
            parts = line.split("\t") if "\t" in line else line.split()
            if len(parts) != 3:
                raise EdgeListError(f"expected 'src<TAB>dst<TAB>sign', got {line!r}", lineno)
            src, dst, sign = (p.strip() for p in parts)
            if sign not in _SIGNS:
                raise EdgeListError(f"sign must be 1, +1 or -1, got {sign!r}", lineno)
            if src == dst:
                raise EdgeListError(f"self-loop on node {src!r}", lineno)
            records.append((src, dst, _SIGNS[sign], lineno))

    tokens = {t for s, d, _, _ in records for t in (s, d)}
    numeric = all(_is_int_id(t) for t in tokens)
    if numeric:
        ids = sorted({int(t) for t in tokens})
        if declared is not None:
            too_big = [i for i in ids if i >= declared]
            if too_big:
                raise EdgeListError(f"ids {_preview(too_big)} exceed declared node count {declared}")
            ids = list(range(declared))
        key = int
    else:
        if declared is not None:
            raise EdgeListError("'# nodes:' header requires integer node ids")
        ids = sorted(tokens)
        key = str
    index = {v: k for k, v in enumerate(ids)}

    seen = {}
    pos, neg = [], []
    for src, dst, sign, lineno in records:
        pair = (index[key(src)], index[key(dst)])
        if pair in seen:
            raise EdgeListError(
                f"duplicate edge ({src}, {dst}); first given at line {seen[pair]}", lineno)
        seen[pair] = lineno
        (pos if sign == 1 else neg).append(pair)
    return EdgeList(SignedAdjacency(len(ids), pos, neg), tuple(ids))


def write_edge_list(path, graph: SignedAdjacency, node_ids=None) -> None:
    """Write ``graph`` as a TSV edge list, edges ordered by ``(src, dst)``.

    Without ``node_ids`` a ``# nodes: N`` header is written so that isolated
    nodes are kept on reload.
    """
    rows = [(int(s), int(d), 1) for s, d in graph.pos] + \
           [(int(s), int(d), -1) for s, d in graph.neg]
    rows.sort()
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if node_ids is None:
            fh.write(f"# nodes: {graph.n}\n")
        for s, d, sign in rows:
            src = s if node_ids is None else node_ids[s]
            dst = d if node_ids is None else node_ids[d]
            fh.write(f"{src}\t{dst}\t{sign}\n")


def write_id_map(path, node_ids) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("index\tid\n")
        for k, v in enumerate(node_ids):
            fh.write(f"{k}\t{v}\n")


# --------------------------------------------------------------------------
# Preprocessing
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Removal:
    node: int
    reason: str
    round: int


@dataclass(frozen=True)
class PreprocessResult:
    """Residual network; ``kept[k]`` is the input index of residual node ``k``."""

    graph: SignedAdjacency
    kept: np.ndarray
    removals: tuple


def _incident_counts(graph):
    n = graph.n
    pos = np.bincount(graph.pos.ravel(), minlength=n)
    neg = np.bincount(graph.neg.ravel(), minlength=n)
    return pos, neg


def preprocess(graph: SignedAdjacency, min_degree: int = 5,
               drop_negative_dominant: bool = False,
               single_pass: bool = False) -> PreprocessResult:
    """Remove low-degree and, optionally, negative-dominant nodes.

    A node fails the degree floor when its number of incident signed edges
    (sent plus received) is below ``min_degree``; it is negative-dominant
    when more of its incident edges are negative than positive.  All failing
    nodes of a round are removed together and rounds repeat until nothing
    changes, unless ``single_pass`` is set.

    Raises
    ------
    PreprocessingEmptyError
        If every node is removed.
    """
    if min_degree < 0:
        raise DomainError(f"min_degree must be non-negative, got {min_degree}")
    kept = np.arange(graph.n)
    current = graph
    removals = []
    rnd = 0
    while True:
        pos, neg = _incident_counts(current)
        low = pos + neg < min_degree
        dominant = (neg > pos) if drop_negative_dominant else np.zeros_like(low)
        drop = low | dominant
        if not drop.any():
            break
        rnd += 1
        for k in np.flatnonzero(drop):
            reason = "min-degree" if low[k] else "negative-dominant"
            removals.append(Removal(int(kept[k]), reason, rnd))
        keep = np.flatnonzero(~drop)
        if keep.size == 0:
            raise PreprocessingEmptyError(
                f"preprocessing removed all {graph.n} nodes (min_degree={min_degree})")
        current = current.subgraph(keep)
        kept = kept[keep]
        if single_pass:
            break
    return PreprocessResult(current, kept, tuple(removals))


# --------------------------------------------------------------------------
# Fit JSON
# --------------------------------------------------------------------------


def _floats(arr):
    return [float(x) for x in np.asarray(arr, dtype=float)]


def fit_to_dict(result: FitResult, node_ids=None, diagnostics=None) -> dict:
    """JSON-ready fit summary.

    Floats are emitted by ``json`` with shortest round-trip repr, so a reload
    reproduces every array bit for bit.
    """
    diag = {
        "newton_iterations": int(result.newton_iterations),
        "final_residual_inf_norm": float(result.final_residual_inf_norm),
    }
    diag.update(diagnostics or {})
    return {
        "n": result.n,
        "alpha": _floats(result.theta_hat.alpha),
        "beta": _floats(result.theta_hat.beta),
        "kappa": _floats(result.kappa),
        "u_hat": _floats(result.u_hat.u),
        "alpha_check": _floats(result.theta_check.alpha),
        "beta_check": _floats(result.theta_check.beta),
        "u_check": _floats(result.u_check.u),
        "node_ids": list(node_ids) if node_ids is not None else list(range(result.n)),
        "diagnostics": diag,
    }


def write_fit_json(path, result: FitResult, node_ids=None, diagnostics=None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(fit_to_dict(result, node_ids, diagnostics), fh, indent=1)
        fh.write("\n")


def load_fit_json(path):
    """Inverse of :func:`write_fit_json`; returns ``(FitResult, node_ids, diagnostics)``."""
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    try:
        diag = dict(data["diagnostics"])
        result = FitResult(
            theta_check=Theta(data["alpha_check"], data["beta_check"]),
            theta_hat=Theta(data["alpha"], data["beta"]),
            u_hat=CurvatureVector(np.asarray(data["u_hat"], dtype=float)),
            u_check=CurvatureVector(np.asarray(data["u_check"], dtype=float)),
            kappa=np.asarray(data["kappa"], dtype=float),
            newton_iterations=int(diag.get("newton_iterations", 0)),
            final_residual_inf_norm=float(diag.get("final_residual_inf_norm", math.nan)),
        )
    except (KeyError, TypeError) as exc:
        raise DomainError(f"{path}: not a fit file ({exc})") from exc
    if result.n != int(data["n"]):
        raise DomainError(f"{path}: n={data['n']} but arrays have {result.n} nodes")
    return result, tuple(data.get("node_ids", range(result.n))), diag


# --------------------------------------------------------------------------
# Report CSVs
# --------------------------------------------------------------------------

COMPARISON_FIELDS = ("focal", "candidate", "facet", "point", "delta_hat", "p_value",
                     "lower", "upper", "indiv_sig", "multi_sig")


def comparison_csv(report) -> str:
    """Text of the comparison table for a :class:`~signed_beta.inference.RankReport`."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COMPARISON_FIELDS)
    for row in report.comparisons:
        pr = row.pairwise
        writer.writerow([pr.i, pr.j, pr.facet.value, repr(pr.point), repr(pr.delta_hat),
                         repr(pr.p_value), repr(pr.lower), repr(pr.upper),
                         int(row.indiv_sig), int(row.multi_sig)])
    return buf.getvalue()


def _ranks(values):
    # 1 = largest; ties keep index order
    order = np.argsort(-np.asarray(values), kind="stable")
    ranks = np.empty(order.size, dtype=int)
    ranks[order] = np.arange(1, order.size + 1)
    return ranks


def ranking_csv(theta: Theta) -> str:
    """Rows ``node,facet,estimate,rank`` for both facets, rank 1 = highest."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("node", "facet", "estimate", "rank"))
    for facet, values in ((Facet.ALPHA, theta.alpha), (Facet.BETA, theta.beta)):
        for node, (v, r) in enumerate(zip(values, _ranks(values))):
            writer.writerow([node, facet.value, repr(float(v)), int(r)])
    return buf.getvalue()


# --------------------------------------------------------------------------
# Plot data
# --------------------------------------------------------------------------


def status_plot_series(graph: SignedAdjacency, theta: Theta, facet, nodes) -> dict:
    """Bar and line series for a set of nodes ordered as given.

    Returns two-column arrays ``(position, value)`` keyed by
    ``positive_degree``, ``negative_degree`` (as a negative number, drawn
    below the axis) and ``status``.  For the ``alpha`` facet the degrees are
    out-degrees, for ``beta`` in-degrees.  The status line is rescaled by
    ``max positive degree / max |status|`` so it shares the bar axis.
    """
    facet = Facet(facet)
    nodes = np.asarray(list(nodes), dtype=int)
    col = 0 if facet is Facet.ALPHA else 1
    pos = np.bincount(graph.pos[:, col], minlength=graph.n)[nodes]
    neg = np.bincount(graph.neg[:, col], minlength=graph.n)[nodes]
    status = (theta.alpha if facet is Facet.ALPHA else theta.beta)[nodes]
    top = np.abs(status).max() if nodes.size else 0.0
    scale = pos.max() / top if nodes.size and top > 0 and pos.max() > 0 else 1.0
    x = np.arange(1, nodes.size + 1, dtype=float)
    return {
        "positive_degree": np.column_stack([x, pos.astype(float)]),
        "negative_degree": np.column_stack([x, -neg.astype(float)]),
        "status": np.column_stack([x, status * scale]),
    }


def write_plot_series(directory, prefix: str, series: dict) -> list:
    """Write each series to ``<directory>/<prefix>_<name>.tsv``; returns the paths."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, arr in series.items():
        path = directory / f"{prefix}_{name}.tsv"
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write("x\ty\n")
            for x, y in np.asarray(arr, dtype=float).tolist():
                fh.write(f"{x!r}\t{y!r}\n")
        paths.append(path)
    return paths
