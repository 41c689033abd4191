"""``ghdag`` command line.

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal invariant
violation.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from . import experiments as ex
from .data import DataError
from .ghd import GhdError
from .graph import GraphError
from .sampler import RetriesExhaustedError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _int_list(text: str) -> tuple[int, ...]:
    try:
        values = tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ghdag", description="GHD DAG structure learning by moments ratio scoring.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="draw a random model and a dataset from it")
    g.add_argument("--model", choices=ex.MODEL_KINDS, default="poisson")
    g.add_argument("--p", type=int, required=True)
    g.add_argument("--d", type=int, default=2)
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True, help="prefix; writes PREFIX.csv, PREFIX.edges and PREFIX.families")

    le = sub.add_parser("learn", help="learn a DAG from a dataset CSV")
    le.add_argument("--data", required=True)
    le.add_argument("--skeleton", choices=ex.SKELETON_MODES, default="learned")
    le.add_argument("--skeleton-file", help="true DAG for oracle mode, skeleton edge list for file mode")
    le.add_argument("--families", default="poisson", help="true, poisson, hyperpoisson:b or auto-hyperpoisson")
    le.add_argument("--families-file", help="node families for --families true (default: DATA with .families suffix)")
    le.add_argument("--r", type=int, default=2)
    le.add_argument("--nmin", type=int, default=1)
    le.add_argument("--alpha", type=float, default=0.05)
    le.add_argument("--max-cond", type=int, default=2)
    le.add_argument("--out", required=True, help="estimated DAG edge list")
    le.add_argument("--trace", help="score trace CSV")

    e = sub.add_parser("eval", help="compare an estimated graph with the true one")
    e.add_argument("--true", required=True, dest="true_graph")
    e.add_argument("--est", required=True)
    e.add_argument("--mode", choices=("dag", "mec"), default="dag")

    s = sub.add_parser("sweep", help="run an experiment grid from a key = value spec file")
    s.add_argument("spec")
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--out", help="override the spec's output path")
    s.add_argument("--no-resume", action="store_true", help="ignore rows from an earlier partial run")

    b = sub.add_parser("bench", help="time step 1 and step 2 over a (p, n) grid")
    b.add_argument("--p", type=_int_list, default=(25, 50, 100))
    b.add_argument("--n", type=_int_list, default=(500, 1000))
    b.add_argument("--d", type=int, default=2)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--model", choices=ex.MODEL_KINDS, default="hybrid")
    b.add_argument("--repeats", type=int, default=7)
    b.add_argument("--alpha", type=float, default=0.05)
    b.add_argument("--max-cond", type=int, default=2)
    b.add_argument("--out", required=True)

    i = sub.add_parser("ingest", help="clean a real count CSV")
    i.add_argument("--data", required=True)
    i.add_argument("--drop", default="", help="comma-separated column names to drop")
    i.add_argument("--out", required=True)
    return parser


def _families_file(args) -> Path | None:
    if args.families_file:
        return Path(args.families_file)
    if args.families.strip().lower() == "true":
        return Path(args.data).with_suffix(".families")
    return None


def _check_learn_args(args):
    if args.r < 2:
        raise UsageError("--r must be >= 2")
    if args.nmin < 1:
        raise UsageError("--nmin must be >= 1")
    if not 0 < args.alpha < 1 or args.max_cond < 0:
        raise UsageError("--alpha must be in (0, 1) and --max-cond >= 0")


def run(args) -> int:
    if args.command == "generate":
        prefix = args.out
        ex.cmd_generate(args.model, args.p, args.d, args.n, args.seed,
                        f"{prefix}.csv", f"{prefix}.edges", f"{prefix}.families")
    elif args.command == "learn":
        _check_learn_args(args)
        ex.cmd_learn(
            args.data, args.skeleton, args.out,
            skeleton_file=args.skeleton_file, families=args.families, families_file=_families_file(args),
            r=args.r, n_min=args.nmin, alpha=args.alpha, max_conditioning=args.max_cond, trace_path=args.trace,
        )
    elif args.command == "eval":
        sys.stdout.write(ex.format_metrics(ex.cmd_eval(args.true_graph, args.est, args.mode)))
    elif args.command == "sweep":
        spec = ex.read_sweep_spec(args.spec)
        if args.out:
            spec = dataclasses.replace(spec, output_path=Path(args.out))
        if args.jobs < 1:
            raise ex.SpecError("--jobs must be >= 1")
        ex.cmd_sweep(spec, jobs=args.jobs, resume=not args.no_resume)
    elif args.command == "bench":
        ex.cmd_bench(args.p, args.n, args.seed, args.out, d=args.d, kind=args.model, repeats=args.repeats,
                     alpha=args.alpha, max_conditioning=args.max_cond)
    elif args.command == "ingest":
        drops = [c.strip() for c in args.drop.split(",") if c.strip()]
        data = ex.cmd_ingest(args.data, drops, args.out)
        print(f"n={data.n}\np={data.p}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"{exc}\n{parser.format_usage()}", end="", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return run(args)
    except (UsageError, ex.SpecError) as exc:
        print(f"ghdag: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, GraphError, GhdError, RetriesExhaustedError, OSError) as exc:
        print(f"ghdag: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # anything else is a bug
        print(f"ghdag: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
