"""Command-line driver: ``signed-beta {simulate,fit,compare,bench,report}``.

Exit status is 0 on success, 1 on a usage error and 2 on a data or solver
error; messages go to stderr.
"""

from __future__ import annotations

import argparse
import datetime
import json
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from .bench import ScenarioConfig, cell_csv, generate_scenario, manifest, run_cell
from .errors import DomainError, SignedBetaError
from .estimation import SolverConfig, fit
from .formats import (
    comparison_csv,
    load_edge_list,
    load_fit_json,
    preprocess,
    ranking_csv,
    status_plot_series,
    write_edge_list,
    write_fit_json,
    write_plot_series,
)
from .inference import Facet, rank_report
from .kappa import estimate_kappa
from .model import sample_network
from .numerics import RandomStream

log = logging.getLogger("signed_beta")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _node_spec(text: str) -> list:
    """Parse ``"0-5,9,12-13"`` into a sorted list of distinct indices."""
    out = set()
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        lo, sep, hi = part.partition("-")
        try:
            if sep:
                a, b = int(lo), int(hi)
                if b < a:
                    raise ValueError
                out.update(range(a, b + 1))
            else:
                out.add(int(lo))
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad node range {part!r}") from None
    if not out or min(out) < 0:
        raise argparse.ArgumentTypeError(f"bad node set {text!r}")
    return sorted(out)


def _cell_spec(text: str) -> dict:
    """Parse ``"n=200,kappa01=0.05"``."""
    out = {}
    for part in text.split(","):
        key, sep, value = part.partition("=")
        key = key.strip()
        if not sep or key not in ("n", "kappa01"):
            raise argparse.ArgumentTypeError(f"bad cell entry {part!r}; use n=..,kappa01=..")
        try:
            out[key] = int(value) if key == "n" else float(value)
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad value in {part!r}") from None
    if set(out) != {"n", "kappa01"}:
        raise argparse.ArgumentTypeError(f"cell {text!r} needs both n and kappa01")
    return out


def _add_solver_flags(p):
    g = p.add_argument_group("solver")
    g.add_argument("--tol", type=float, default=1e-8)
    g.add_argument("--max-iterations", type=int, default=200)
    g.add_argument("--max-halvings", type=int, default=30)
    g.add_argument("--degree-margin", type=float, default=0.0)
    g.add_argument("--no-screen", action="store_true",
                   help="skip the degree feasibility screen before Newton")


def _solver(args) -> SolverConfig:
    return SolverConfig(tol=args.tol, max_iterations=args.max_iterations,
                        max_halvings=args.max_halvings, screen=not args.no_screen,
                        degree_margin=args.degree_margin)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="signed-beta", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="sample a network from the grouped-status design")
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--kappa01", type=float, default=0.05)
    p.add_argument("--kappa00", type=float, default=0.001)
    p.add_argument("--p-high-kappa", type=float, default=0.8)
    p.add_argument("--spread-reading", choices=("sd", "variance"), default="sd")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", type=Path, default=Path("."))

    p = sub.add_parser("fit", help="fit node statuses to an edge list")
    p.add_argument("edges", type=Path)
    p.add_argument("-o", "--output", type=Path, default=Path("fit.json"))
    p.add_argument("--kappa-mode", choices=("estimate", "fixed"), default="estimate")
    p.add_argument("--kappa", type=float, help="common kappa for every node (fixed mode)")
    p.add_argument("--kappa-file", type=Path,
                   help="JSON with a per-node 'kappa' list (fixed mode)")
    p.add_argument("--xi", type=float, help="class threshold on negative fractions")
    p.add_argument("--gamma", type=float, default=0.01)
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--grid-size", type=int, default=50)
    p.add_argument("--kappa00", type=float, help="low-class level (default log(n)/n)")
    p.add_argument("--min-degree", type=int, default=0)
    p.add_argument("--drop-negative-dominant", action="store_true")
    p.add_argument("--single-pass", action="store_true")
    _add_solver_flags(p)

    p = sub.add_parser("compare", help="pairwise and multiple comparisons from a fit")
    p.add_argument("fit", type=Path)
    p.add_argument("--facet", type=Facet, default=Facet.BETA,
                   help="alpha/out_status or beta/in_status")
    p.add_argument("--focal", type=int)
    p.add_argument("--candidates", type=_node_spec)
    p.add_argument("--pair", type=int, nargs=2, metavar=("I", "J"))
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--level", type=float)
    p.add_argument("--estimate", choices=("hat", "check"), default="hat")
    p.add_argument("--empty-policy", choices=("standard", "reject-all"),
                   default="standard")
    p.add_argument("--edges", type=Path, help="edge list for comparison plot data")
    p.add_argument("--plot-dir", type=Path)
    p.add_argument("-o", "--output", type=Path, help="CSV path (default stdout)")

    p = sub.add_parser("bench", help="Monte Carlo grid of the simulation design")
    p.add_argument("--cell", type=_cell_spec, action="append", required=True)
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--full", action="store_true", help="500 replications per cell")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--kappa-mode", choices=("estimate", "true"), default="estimate")
    p.add_argument("--spread-reading", choices=("sd", "variance"), default="sd")
    p.add_argument("--workers", type=int,
                   help="worker processes (default: $SIGNED_BETA_WORKERS or 1)")
    p.add_argument("--out-dir", type=Path, default=Path("."))
    p.add_argument("--timestamp", action="store_true",
                   help="record the wall-clock time in the manifest")
    _add_solver_flags(p)

    p = sub.add_parser("report", help="ranking CSV and plot data from a fit")
    p.add_argument("fit", type=Path)
    p.add_argument("--edges", type=Path, help="edge list used for degree bars")
    p.add_argument("--top", type=int, default=10)
    p.add_argument("--out-dir", type=Path, default=Path("."))
    return parser


# --------------------------------------------------------------------------


def cmd_simulate(args) -> None:
    config = ScenarioConfig(n=args.n, kappa01=args.kappa01, kappa00=args.kappa00,
                            p_high_kappa=args.p_high_kappa,
                            spread_reading=args.spread_reading, base_seed=args.seed)
    rng = RandomStream(args.seed, 0)
    scenario = generate_scenario(config, rng)
    graph = sample_network(scenario.theta, scenario.kappa, rng)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    write_edge_list(args.out_dir / "edges.tsv", graph)
    truth = {
        "n": graph.n,
        "alpha": scenario.theta.alpha.tolist(),
        "beta": scenario.theta.beta.tolist(),
        "kappa": scenario.kappa.values.tolist(),
        "groups": scenario.groups.tolist(),
        "config": config.to_dict(),
    }
    with open(args.out_dir / "truth.json", "w", encoding="utf-8") as fh:
        json.dump(truth, fh, indent=1)
        fh.write("\n")


def _fixed_kappa(args, n):
    if (args.kappa is None) == (args.kappa_file is None):
        raise UsageError("fixed kappa mode needs exactly one of --kappa or --kappa-file")
    if args.kappa is not None:
        return np.full(n, args.kappa)
    with open(args.kappa_file, encoding="utf-8") as fh:
        values = np.asarray(json.load(fh)["kappa"], dtype=float)
    if values.shape != (n,):
        raise DomainError(f"{args.kappa_file}: {values.size} kappa values for {n} nodes")
    return values


def cmd_fit(args) -> None:
    loaded = load_edge_list(args.edges)
    graph, ids = loaded.graph, loaded.node_ids
    diag = {}
    if args.min_degree > 0 or args.drop_negative_dominant:
        pre = preprocess(graph, args.min_degree, args.drop_negative_dominant,
                         args.single_pass)
        graph, ids = pre.graph, tuple(ids[k] for k in pre.kept)
        diag["removed"] = [{"node": loaded.node_ids[r.node], "reason": r.reason,
                            "round": r.round} for r in pre.removals]
    config = _solver(args)
    if args.kappa_mode == "fixed":
        kappa = _fixed_kappa(args, graph.n)
        diag["kappa_mode"] = "fixed"
    else:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", RuntimeWarning)
            est = estimate_kappa(graph, args.xi, args.gamma, args.tau, args.grid_size,
                                 args.kappa00, config)
        for w in caught:
            log.warning("%s", w.message)
        kappa = est.kappa_vector(graph.n)
        diag.update(kappa_mode="estimate", kappa01_hat=est.kappa01_hat,
                    kappa00=est.kappa00_value, threshold=est.threshold_used,
                    class_high=sorted(est.class_high))
    result = fit(graph, kappa, config)
    write_fit_json(args.output, result, ids, diag)
    log.info("wrote %s (n=%d, %d Newton iterations)", args.output, graph.n,
             result.newton_iterations)


def cmd_compare(args) -> None:
    result, _, _ = load_fit_json(args.fit)
    if args.pair is not None:
        if args.focal is not None or args.candidates is not None:
            raise UsageError("use either --pair or --focal/--candidates")
        focal, candidates = args.pair[0], [args.pair[1]]
    else:
        if args.focal is None or args.candidates is None:
            raise UsageError("need --pair I J or both --focal and --candidates")
        focal = args.focal
        candidates = [c for c in args.candidates if c != focal]
    bad = [c for c in [focal, *candidates] if c >= result.n]
    if bad:
        raise DomainError(f"node indices {bad} out of range for n={result.n}")
    report = rank_report(result, args.facet, focal, candidates, args.alpha, args.level,
                         args.estimate, args.empty_policy)
    text = comparison_csv(report)
    if args.output is None:
        sys.stdout.write(text)
    else:
        args.output.write_text(text, encoding="utf-8")
    if args.plot_dir is not None:
        if args.edges is None:
            raise UsageError("--plot-dir needs --edges")
        graph = load_edge_list(args.edges).graph
        theta = result.theta_hat if args.estimate == "hat" else result.theta_check
        status = theta.alpha if args.facet is Facet.ALPHA else theta.beta
        nodes = sorted([focal, *candidates], key=lambda k: (status[k], k))
        series = status_plot_series(graph, theta, args.facet, nodes)
        # 0 = not significant, 1 = individual test only, 2 = also multiple test,
        # -1 marks the focal node
        code = {row.pairwise.j: int(row.indiv_sig) + int(row.multi_sig)
                for row in report.comparisons}
        x = series["status"][:, 0]
        series["significance"] = np.column_stack(
            [x, [code.get(k, -1) if k != focal else -1 for k in nodes]])
        write_plot_series(args.plot_dir, f"compare_{args.facet.value}", series)


def cmd_bench(args) -> None:
    reps = 500 if args.full else args.reps
    cells = []
    for spec in args.cell:
        config = ScenarioConfig(n=spec["n"], kappa01=spec["kappa01"], replications=reps,
                                base_seed=args.seed, kappa_mode=args.kappa_mode,
                                spread_reading=args.spread_reading, solver=_solver(args))
        log.info("bench cell n=%d kappa01=%g (%d reps)", config.n, config.kappa01, reps)
        cells.append(run_cell(config, args.workers))
    args.out_dir.mkdir(parents=True, exist_ok=True)
    (args.out_dir / "tables.csv").write_text(cell_csv(cells), encoding="utf-8")
    info = manifest(cells, command="bench")
    if args.timestamp:
        info["timestamp"] = datetime.datetime.now(datetime.timezone.utc).isoformat()
    with open(args.out_dir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(info, fh, indent=1)
        fh.write("\n")
    failed = sum(c.table.n_failed for c in cells)
    if failed:
        log.warning("%d replications failed; see manifest.json", failed)


def cmd_report(args) -> None:
    result, ids, _ = load_fit_json(args.fit)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    (args.out_dir / "ranking.csv").write_text(ranking_csv(result.theta_hat),
                                             encoding="utf-8")
    if args.edges is None:
        return
    loaded = load_edge_list(args.edges)
    where = {v: k for k, v in enumerate(loaded.node_ids)}
    missing = [v for v in ids if v not in where]
    if missing:
        raise DomainError(f"fit nodes {missing[:10]} not found in {args.edges}")
    graph = loaded.graph.subgraph([where[v] for v in ids])
    theta = result.theta_hat
    for facet, values in ((Facet.BETA, theta.beta), (Facet.ALPHA, theta.alpha)):
        top = np.argsort(-values, kind="stable")[: args.top]
        write_plot_series(args.out_dir, f"top_{facet.value}",
                          status_plot_series(graph, theta, facet, top))


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "compare": cmd_compare,
    "bench": cmd_bench,
    "report": cmd_report,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"signed-beta {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"signed-beta {args.command}: file not found: {exc.filename}", file=sys.stderr)
        return EXIT_DATA
    except (SignedBetaError, OSError, json.JSONDecodeError) as exc:
        print(f"signed-beta {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
