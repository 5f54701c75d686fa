"""Command-line interface.

Exit codes: 0 success, 2 input error, 3 inference contradiction,
4 exact-count budget exceeded.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import shlex
import sys
from pathlib import Path

from .bp import BPConfig, ForwardsBackwards, run_bp
from .cbp import run_cbp
from .cnf import exact_count, read_dimacs, to_factor_graph
from .dmln import DmlnSpec, EvidenceSpec, ground_dmln, run_comparison
from .errors import BudgetExceeded, ContradictionError, ParseError
from .factor_graph import read_fgt
from .lifting import MODES, compress, compression_stats
from .model_count import CountConfig, format_count, run_count

EXIT_OK, EXIT_INPUT, EXIT_CONTRADICTION, EXIT_BUDGET = 0, 2, 3, 4

log = logging.getLogger("countbp")


class InputError(Exception):
    pass


# --- helpers -----------------------------------------------------------------

def _load_graph(path: str):
    p = Path(path)
    if not p.is_file():
        raise InputError(f"{path}: no such file")
    try:
        if p.suffix.lower() in (".cnf", ".dimacs"):
            return to_factor_graph(read_dimacs(p))
        return read_fgt(p)
    except ParseError as exc:
        raise InputError(f"{path}: {exc}") from exc
    except UnicodeDecodeError as exc:
        raise InputError(f"{path}: not a text file") from exc


def _load_formula(path: str):
    p = Path(path)
    if not p.is_file():
        raise InputError(f"{path}: no such file")
    try:
        return read_dimacs(p)
    except ParseError as exc:
        raise InputError(f"{path}: {exc}") from exc


def _load_evidence(path: str | None) -> dict[int, int]:
    if path is None:
        return {}
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror or exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(raw, dict):
        raise InputError(f"{path}: evidence must be a JSON object mapping variable id to state")
    try:
        return {int(k): int(v) for k, v in raw.items()}
    except (TypeError, ValueError) as exc:
        raise InputError(f"{path}: evidence keys and values must be integers") from exc


def _emit(args, payload=None, rows=None, fields=None) -> None:
    """Write JSON (``payload``) or CSV (``rows``) to ``--output`` or stdout."""
    if args.format == "csv":
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
        text = buf.getvalue()
    else:
        text = json.dumps(payload, sort_keys=True, indent=2) + "\n"
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)


def _bp_config(args, schedule="flooding") -> BPConfig:
    return BPConfig(args.damping, args.tolerance, args.max_sweeps, schedule)


def _parse_grid(text: str) -> list[float]:
    try:
        grid = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not grid:
        raise argparse.ArgumentTypeError("empty grid")
    return grid


# --- subcommands ---------------------------------------------------------------

def cmd_compress(args) -> int:
    graph = _load_graph(args.input)
    evidence = _load_evidence(args.evidence)
    cg = compress(graph, evidence, mode=args.mode)
    stats = compression_stats(graph, cg)
    if args.graph_out:
        Path(args.graph_out).write_text(json.dumps(cg.to_dict(), sort_keys=True, indent=2) + "\n")
    _emit(args, stats, [stats], list(stats))
    return EXIT_OK


def cmd_marginals(args) -> int:
    graph = _load_graph(args.input)
    evidence = _load_evidence(args.evidence)
    if args.schedule == "fb":
        # every variable is its own layer, so clusters must not merge variables
        schedule = ForwardsBackwards(tuple(range(graph.num_variables)))
    else:
        schedule = "flooding"
    config = _bp_config(args, schedule)
    if args.engine == "cbp":
        layer_of = schedule.layer_of if args.schedule == "fb" else None
        beliefs, stats = run_cbp(compress(graph, evidence, mode=args.mode, layer_of=layer_of), config)
    else:
        beliefs, stats = run_bp(graph, evidence, config)
    r = args.digits
    table = {str(v): [round(float(x), r) for x in b] for v, b in enumerate(beliefs)}
    payload = {"beliefs": table, "stats": stats.to_dict()}
    rows = [
        {"variable": v, "state": s, "belief": repr(round(float(x), r))}
        for v, b in enumerate(beliefs)
        for s, x in enumerate(b)
    ]
    _emit(args, payload, rows, ["variable", "state", "belief"])
    return EXIT_OK


def _count_config(args, engine: str) -> CountConfig:
    return CountConfig(
        seed=args.seed,
        alpha=args.alpha,
        iterations=args.iterations,
        engine=engine,
        damping=args.damping,
        tolerance=args.tolerance,
        max_sweeps=args.max_sweeps,
        exact_threshold=args.exact_threshold,
        mode=args.mode,
        counter_command=tuple(shlex.split(args.counter)) if args.counter else None,
    )


def cmd_count(args) -> int:
    formula = _load_formula(args.input)
    if args.exact:
        try:
            n = exact_count(formula, max_vars=args.exact_threshold)
        except BudgetExceeded as exc:
            raise BudgetExceeded(
                f"{exc}; raise --exact-threshold or drop --exact to compute a randomized lower bound"
            ) from exc
        payload = {"model_count": str(n), "exact": True}
        _emit(args, payload, [payload], ["model_count", "exact"])
        return EXIT_OK
    result = run_count(formula, _count_config(args, args.engine))
    payload = result.to_dict()
    rows = [
        {k: it[k] for k in ("index", "s", "model_count", "count", "conflict", "messages", "edges")}
        for it in payload["iterations"]
    ]
    _emit(args, payload, rows, ["index", "s", "model_count", "count", "conflict", "messages", "edges"])
    return EXIT_OK


def cmd_bench_count(args) -> int:
    formula = _load_formula(args.input)
    results = {eng: run_count(formula, _count_config(args, eng)) for eng in ("bp", "cbp")}
    msgs = {eng: r.cumulative_messages() for eng, r in results.items()}
    edges = {eng: r.cumulative_edges() for eng, r in results.items()}
    steps = max(len(msgs["bp"]), len(msgs["cbp"]))

    def at(series, i):
        return series[i] if i < len(series) else None

    rows = []
    for i in range(steps):
        mb, mc = at(msgs["bp"], i), at(msgs["cbp"], i)
        rows.append(
            {
                "step": i + 1,
                "messages_bp": mb,
                "messages_cbp": mc,
                "edges_bp": at(edges["bp"], i),
                "edges_cbp": at(edges["cbp"], i),
                "ratio_messages": mc / mb if mb and mc is not None else None,
            }
        )
    first = {}
    for eng, r in results.items():
        runs = r.iterations[0].runs if r.iterations else []
        first[eng] = runs[0].messages if runs else 0
    payload = {
        "seed": args.seed,
        "series": rows,
        "lower_bound": {eng: format_count(r.lower_bound) for eng, r in results.items()},
        "total_messages": {eng: (s[-1] if s else 0) for eng, s in msgs.items()},
        "first_run_savings": 1.0 - first["cbp"] / first["bp"] if first["bp"] else 0.0,
        "confidence": results["bp"].confidence,
    }
    fields = ["step", "messages_bp", "messages_cbp", "edges_bp", "edges_cbp", "ratio_messages"]
    _emit(args, payload, rows, fields)
    return EXIT_OK


def cmd_bench_dmln(args) -> int:
    spec = DmlnSpec(args.people, args.timesteps, include_reflexive_friends=not args.no_reflexive)
    ground = ground_dmln(spec)
    rows, beliefs = [], []
    for seed in range(args.seed, args.seed + args.num_seeds):
        for r in args.r:
            ev = EvidenceSpec(r, seed, args.friends)
            rep = run_comparison(spec, ev, sweeps=args.sweeps, mode=args.mode, ground=ground)
            rows.append(rep.row())
            beliefs.append(
                {"r": r, "seed": seed, "ff": rep.cancer_ff, "lfoff": rep.cancer_lfoff,
                 "max_diff": rep.max_belief_diff}
            )
    if args.beliefs_out:
        Path(args.beliefs_out).write_text(json.dumps(beliefs, sort_keys=True, indent=2) + "\n")
    fields = ["r", "seed", "edges_ff", "edges_lfoff", "messages_ff", "messages_lfoff", "ratio_edges", "ratio_messages"]
    _emit(args, {"people": args.people, "timesteps": args.timesteps, "rows": rows}, rows, fields)
    return EXIT_OK


# --- parser ----------------------------------------------------------------------

def _add_output(p, default="json"):
    p.add_argument("--format", choices=("json", "csv"), default=default)
    p.add_argument("-o", "--output", help="write here instead of stdout")


def _add_bp(p):
    p.add_argument("--damping", type=float, default=0.5)
    p.add_argument("--tolerance", type=float, default=1e-8)
    p.add_argument("--max-sweeps", type=int, default=1000)
    p.add_argument("--mode", choices=MODES, default="commutative", help="color passing variant")


def _add_count(p):
    p.add_argument("input", help="DIMACS .cnf file")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--alpha", default="1", help="slack exponent, e.g. 1 or 0.5")
    p.add_argument("-t", "--iterations", type=int, default=7)
    p.add_argument("--exact-threshold", type=int, default=64,
                   help="count exactly once at most this many variables remain")
    p.add_argument("--counter", help="external exact counter command; the CNF path is appended")
    _add_bp(p)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="countbp", description="Lifted belief propagation and BP-guided model counting.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compress", help="compress a factor graph or CNF and report ratios")
    p.add_argument("input", help=".fgt or .cnf file")
    p.add_argument("--evidence", help="JSON object mapping variable id to observed state")
    p.add_argument("--mode", choices=MODES, default="commutative")
    p.add_argument("--graph-out", help="also write the compressed graph as JSON")
    _add_output(p)
    p.set_defaults(func=cmd_compress)

    p = sub.add_parser("marginals", help="run BP or counting BP and print beliefs")
    p.add_argument("input", help=".fgt or .cnf file")
    p.add_argument("--engine", choices=("bp", "cbp"), default="bp")
    p.add_argument("--evidence", help="JSON object mapping variable id to observed state")
    p.add_argument("--schedule", choices=("flooding", "fb"), default="flooding")
    p.add_argument("--digits", type=int, default=12, help="round beliefs to this many decimals")
    _add_bp(p)
    _add_output(p)
    p.set_defaults(func=cmd_marginals)

    p = sub.add_parser("count", help="lower-bound the model count of a CNF")
    _add_count(p)
    p.add_argument("--engine", choices=("bp", "cbp"), default="bp")
    p.add_argument("--exact", action="store_true", help="count exactly instead (within --exact-threshold)")
    _add_output(p)
    p.set_defaults(func=cmd_count)

    p = sub.add_parser("bench-count", help="BPCount vs CBPCount cumulative message series")
    _add_count(p)
    _add_output(p)
    p.set_defaults(func=cmd_bench_count)

    p = sub.add_parser("bench-dmln", help="FF vs LFOFF ratios on the smokers dynamic MLN")
    p.add_argument("--people", type=int, default=20)
    p.add_argument("--timesteps", type=int, default=10)
    p.add_argument("--r", type=_parse_grid, default=[0.0, 0.25, 0.5, 0.75, 1.0],
                   help="comma-separated observed fractions")
    p.add_argument("--seed", type=int, required=True, help="first seed")
    p.add_argument("--num-seeds", type=int, default=1)
    p.add_argument("--friends", type=int, default=5, help="observed friends per observed person")
    p.add_argument("--sweeps", type=int, default=1)
    p.add_argument("--no-reflexive", action="store_true", help="omit Friends(x,x,t) atoms")
    p.add_argument("--mode", choices=MODES, default="commutative")
    p.add_argument("--beliefs-out", help="write Cancer beliefs per (r, seed) as JSON")
    _add_output(p, default="csv")
    p.set_defaults(func=cmd_bench_dmln)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (InputError, ValueError, OSError) as exc:
        print(f"countbp: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ContradictionError as exc:
        print(f"countbp: contradiction: {exc}", file=sys.stderr)
        return EXIT_CONTRADICTION
    except BudgetExceeded as exc:
        print(f"countbp: budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET


if __name__ == "__main__":
    sys.exit(main())
