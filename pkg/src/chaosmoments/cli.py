"""Command-line entry point.

Exit codes: 0 success, 1 a verification bracket was violated, 2 usage or
input error, 3 a linear-algebra failure on an exact (one- or two-block)
norm path.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import harness
from .harness import FamilySpec
from .mc import expected_contracted_norm, run_mc
from .model import DegenerateTensorError, moment_profile, tail_envelope
from .norms import SolverConfig, compute_norm_table, partition_norm
from .partitions import PartitionError, parse_partition
from .tensor import TensorError, load_tensor, save_tensor

log = logging.getLogger("chaosmoments")

EXIT_OK, EXIT_VIOLATION, EXIT_USAGE, EXIT_SOLVER = 0, 1, 2, 3


class UsageError(ValueError):
    pass


def parse_floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise UsageError(f"expected a comma-separated list of numbers, got {text!r}") from exc


def parse_grid(text: str) -> list[float]:
    """``a:b:n`` is ``n`` evenly spaced points from ``a`` to ``b``; a comma list also works."""
    if ":" not in text:
        return parse_floats(text)
    try:
        a, b, n = text.split(":")
        return np.linspace(float(a), float(b), int(n)).tolist()
    except ValueError as exc:
        raise UsageError(f"grid must look like a:b:n, got {text!r}") from exc


def parse_shape(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in text.replace("x", ",").split(",") if x.strip())
    except ValueError as exc:
        raise UsageError(f"invalid shape {text!r}") from exc


def _cell(v):
    if isinstance(v, float):
        return repr(v)
    return v


def render(columns, rows, fmt: str, summary=None, config=None, passed=None) -> str:
    if fmt == "json":
        obj = {"columns": list(columns), "rows": rows}
        if summary is not None:
            obj["summary"] = summary
        if passed is not None:
            obj["passed"] = passed
        if config is not None:
            obj["config"] = config
        return json.dumps(obj, indent=2, default=str) + "\n"
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    for r in rows:
        w.writerow({k: _cell(v) for k, v in r.items()})
    if summary is not None:
        buf.write("# summary: " + json.dumps(summary, sort_keys=True) + "\n")
    if passed is not None:
        buf.write(f"# passed: {str(passed).lower()}\n")
    return buf.getvalue()


def emit(args, text: str) -> None:
    if args.out in ("csv", "json"):
        sys.stdout.write(text)
    else:
        Path(args.out).write_text(text)


def out_format(args) -> str:
    if args.out in ("csv", "json"):
        return args.out
    return "json" if str(args.out).endswith(".json") else "csv"


def solver_config(args) -> SolverConfig:
    return SolverConfig(args.restarts, args.max_iters, args.tol, args.seed)


def require_tensor(args):
    if not args.tensor:
        raise UsageError("--tensor is required")
    return load_tensor(args.tensor)


def cmd_norm(args) -> int:
    A = require_tensor(args)
    cfg = solver_config(args)
    if args.partition:
        results = [partition_norm(A, parse_partition(args.partition, A.order), cfg)]
    else:
        results = list(compute_norm_table(A, cfg).values())
    rows = [r.to_dict() for r in results]
    cols = ["partition", "k", "value", "method", "converged", "iterations", "restarts_used", "residual"]
    if out_format(args) == "json":
        cols.append("certificate")
    emit(args, render(cols, rows, out_format(args)))
    return EXIT_OK


def cmd_mp(args) -> int:
    A = require_tensor(args)
    table = compute_norm_table(A, solver_config(args))
    prof = moment_profile(table, parse_floats(args.p))
    emit(args, render(["p", "m_p", "top_contribution", "witness"], prof.rows(), out_format(args)))
    return EXIT_OK


def cmd_tail(args) -> int:
    A = require_tensor(args)
    table = compute_norm_table(A, solver_config(args))
    env = tail_envelope(parse_grid(args.t_grid), table, args.cu, args.cl)
    emit(args, render(["t", "exponent", "witness", "upper", "lower"], env.rows(), out_format(args)))
    return EXIT_OK


def cmd_sample(args) -> int:
    A = require_tensor(args)
    ts = parse_grid(args.t_grid) if args.t_grid else []
    rep = run_mc(A, args.n, args.seed, parse_floats(args.p), ts, args.coupled, args.threads, args.boot)
    emit(args, render(rep.COLUMNS, rep.rows(), out_format(args)))
    return EXIT_OK


def cmd_enorm(args) -> int:
    A = require_tensor(args)
    try:
        J = [int(x) - 1 for x in args.contract.split(",")]
    except ValueError as exc:
        raise UsageError(f"invalid --contract {args.contract!r}") from exc
    est = expected_contracted_norm(A, J, args.partition, args.m, args.seed, solver_config(args), args.threads)
    row = est.to_dict()
    row["seed"] = args.seed
    emit(args, render(list(row), [row], out_format(args)))
    return EXIT_OK


def family_from_args(args) -> FamilySpec:
    if args.tensor:
        return FamilySpec("user-file", count=1, seed=args.seed, path=args.tensor)
    if not args.family or not args.shape:
        raise UsageError("give --tensor, or --family with --shape")
    return FamilySpec(args.family, parse_shape(args.shape), args.count, args.seed, args.sparsity)


def cmd_gen(args) -> int:
    spec = family_from_args(args)
    tensors = harness.generate_family(spec)
    if args.prefix:
        for i, A in enumerate(tensors):
            save_tensor(A, f"{args.prefix}{i}.json")
    else:
        for A in tensors:
            sys.stdout.write(json.dumps(A.to_dict()) + "\n")
    return EXIT_OK


def cmd_verify(args) -> int:
    spec = family_from_args(args)
    cfg = solver_config(args)
    if args.experiment == "sandwich":
        rep = harness.verify_sandwich(spec, parse_floats(args.p or "2,4,8,16"), args.n, args.seed,
                                      cfg, (args.c_lo, args.c_hi), args.threads)
    elif args.experiment == "tail":
        rep = harness.verify_tail(spec, parse_grid(args.t_grid or "0:3:31"), args.n, args.cu,
                                  args.cl, args.seed, cfg, args.threads)
    elif args.experiment == "thm2":
        rep = harness.verify_thm2(spec, parse_floats(args.p or "2,4,8,16,32"), args.m, args.seed,
                                  cfg, args.bound, args.threads)
    else:
        rep = harness.probe_conjecture(spec, args.m, args.seed, cfg, args.threads)
    config = dict(rep.config, threads=args.threads)
    emit(args, render(rep.columns, rep.rows, out_format(args), rep.summary, config, rep.passed))
    return EXIT_OK if rep.passed else EXIT_VIOLATION


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--out", default="csv",
                        help="'csv' or 'json' for stdout, or a file path (.json selects JSON)")
    common.add_argument("--tensor", help="tensor JSON file")
    common.add_argument("--restarts", type=int, default=16, help="random ALS restarts")
    common.add_argument("--max-iters", type=int, default=500)
    common.add_argument("--tol", type=float, default=1e-10)
    common.add_argument("-v", "--verbose", action="store_true")

    # shared flags live on the subcommands only; a copy on the top-level parser
    # would be silently reset by the subparser defaults
    parser = argparse.ArgumentParser(prog="chaosmoments", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("norm", parents=[common], help="partition norms of a tensor")
    p.add_argument("--partition", help='e.g. "1|2,3"; all partitions when omitted')
    p.set_defaults(func=cmd_norm)

    p = sub.add_parser("mp", parents=[common], help="moment functional on a p-grid")
    p.add_argument("--p", default="2,4,8,16")
    p.set_defaults(func=cmd_mp)

    p = sub.add_parser("tail", parents=[common], help="tail exponent and envelope")
    p.add_argument("--t-grid", required=True, help="a:b:n")
    p.add_argument("--cu", type=float, default=1.0)
    p.add_argument("--cl", type=float, default=1.0)
    p.set_defaults(func=cmd_tail)

    p = sub.add_parser("sample", parents=[common], help="Monte Carlo p-norms and tail")
    p.add_argument("--n", type=int, default=100_000)
    p.add_argument("--p", default="2,4,8")
    p.add_argument("--coupled", action="store_true")
    p.add_argument("--t-grid")
    p.add_argument("--boot", type=int, default=200)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("enorm", parents=[common], help="expected norm of a randomly contracted tensor")
    p.add_argument("--contract", required=True, help="1-based axes, e.g. 3 or 2,3")
    p.add_argument("--partition", help="partition of the remaining axes, renumbered from 1")
    p.add_argument("--m", type=int, default=500)
    p.set_defaults(func=cmd_enorm)

    family = argparse.ArgumentParser(add_help=False)
    family.add_argument("--family", choices=[k for k in harness.KINDS if k != "user-file"])
    family.add_argument("--shape", help="e.g. 3,3,3")
    family.add_argument("--count", type=int, default=1)
    family.add_argument("--sparsity", type=float, default=0.5)

    p = sub.add_parser("gen", parents=[common, family], help="generate a tensor family")
    p.add_argument("--prefix", help="write PREFIX0.json, PREFIX1.json, ...; JSON lines on stdout otherwise")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("verify", parents=[common, family], help="verification experiments")
    p.add_argument("experiment", choices=["sandwich", "tail", "thm2", "conjecture"])
    p.add_argument("--p", help="p-grid")
    p.add_argument("--n", type=int, default=200_000, help="Monte Carlo sample count")
    p.add_argument("--m", type=int, default=500, help="outer draws for contracted norms")
    p.add_argument("--t-grid")
    p.add_argument("--c-lo", type=float, default=harness.DEFAULT_BRACKET[0])
    p.add_argument("--c-hi", type=float, default=harness.DEFAULT_BRACKET[1])
    p.add_argument("--cu", type=float, default=10.0)
    p.add_argument("--cl", type=float, default=10.0)
    p.add_argument("--bound", type=float, default=harness.DEFAULT_THM2_BOUND)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except np.linalg.LinAlgError as exc:
        log.error("solver failure: %s", exc)
        return EXIT_SOLVER
    except (UsageError, TensorError, PartitionError, DegenerateTensorError, ValueError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
