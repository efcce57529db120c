"""Command-line interface: ``ntc gen | solve | bench | report``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import _backend
from .bench import (
    SUITES, GeneratorSpec, aggregate, generate, read_records, run_suite, write_plot_data,
    write_records, write_summary,
)
from .objective import nmse
from .oracle import DEFAULT_MAX_RHO, OracleTooLarge
from .solver import solve, write_trace
from .tensor import Shape, dump_instance

log = logging.getLogger("ntc")

# truth tensors above this many entries are not embedded in instance files
TRUTH_LIMIT = 1_000_000


def _dims(text: str) -> tuple[int, ...]:
    try:
        dims = tuple(int(s) for s in text.replace("x", ",").split(",") if s.strip())
        Shape(dims)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad dims {text!r}: {exc}") from None
    return dims


def _versions(text: str) -> list[int]:
    out = set()
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        lo, _, hi = part.partition("-")
        try:
            a, b = int(lo), int(hi or lo)
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad version list {text!r}") from None
        if not (0 <= a <= b <= 10):
            raise argparse.ArgumentTypeError(f"versions must lie in 0..10, got {part!r}")
        out.update(range(a, b + 1))
    if not out:
        raise argparse.ArgumentTypeError("empty version list")
    return sorted(out)


def _lambda(text: str):
    if text == "auto":
        return text
    try:
        val = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError("lambda must be 'auto' or a positive number") from None
    if not val > 0:
        raise argparse.ArgumentTypeError("lambda must be positive")
    return val


def _read_instance(path):
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if "dims" not in doc or "samples" not in doc:
        raise ValueError("instance file needs 'dims' and 'samples'")
    from .tensor import ObservedData
    data = ObservedData.from_one_based(doc["dims"], ((s["x"], s["y"]) for s in doc["samples"]))
    return data, doc


def cmd_gen(args) -> int:
    spec = GeneratorSpec(args.dims, args.rank, args.n, args.noise, args.seed, args.enumerate)
    truth, data, lam = generate(spec)
    extra = {"lambda": lam, "generator": {**asdict(spec), "dims": list(spec.dims)}}
    if truth.size <= TRUTH_LIMIT:
        extra["truth"] = truth.ravel().tolist()
    dump_instance(data, args.output, extra)
    print(f"wrote {args.output}: dims={'x'.join(map(str, args.dims))} n={data.n} u={data.u} "
          f"lambda={lam!r}")
    return 0


def cmd_solve(args) -> int:
    data, doc = _read_instance(args.input)
    if args.lam == "auto":
        # generator files carry their radius; otherwise assume a rank-one scale
        lam = float(doc["lambda"]) if "lambda" in doc else float(np.max(np.abs(data.y_sum / data.multiplicity)))
        if not lam > 0:
            raise ValueError("cannot pick lambda automatically for all-zero observations")
    else:
        lam = args.lam
    dump_dir = None
    if args.dump_ip is not None:
        dump_dir = Path(args.dump_ip)
        dump_dir.mkdir(parents=True, exist_ok=True)
    res = solve(data, lam, args.tol, args.version, args.seed, max_iter=args.max_iter,
                max_rho=args.max_rho, trace=args.trace is not None, dump_ip=dump_dir,
                time_limit=args.time_limit, certify=args.certify)
    if args.trace is not None:
        write_trace(res.trace, args.trace)
    if args.output is not None:
        np.save(args.output, res.tensor)
    summary = {
        "version": args.version, "lambda": lam, "objective": res.objective, "gap": res.gap,
        "bestbd": res.bestbd, "iterations": res.iterations, "converged": res.converged,
        "time_s": res.time_s, "active_vertices": len(res.vertices), **res.counts,
    }
    if "truth" in doc:
        truth = np.asarray(doc["truth"], dtype=np.float64).reshape(data.shape.dims)
        summary["nmse"] = nmse(res.tensor, truth)
    print(json.dumps(summary, indent=2))
    return 0 if res.converged else 3


def cmd_bench(args) -> int:
    errors: list[str] = []
    records = run_suite(args.suite, args.versions, args.reps, args.scale, full=args.full,
                        rank=args.rank, noise_sd=args.noise, tol=args.tol,
                        base_seed=args.seed, max_rho=args.max_rho, errors=errors)
    count = write_records(records, args.output)
    print(f"wrote {count} records to {args.output}")
    for msg in errors:
        print(f"skipped: {msg}", file=sys.stderr)
    return 0


def cmd_report(args) -> int:
    rows = aggregate(read_records(args.input))
    write_summary(rows, args.output)
    print(f"wrote {len(rows)} summary rows to {args.output}")
    if args.plot_data is not None:
        for path in write_plot_data(rows, args.plot_data):
            print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ntc", description="Nonnegative tensor completion by blended conditional gradients.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a random instance")
    g.add_argument("--dims", type=_dims, required=True, help="comma separated, e.g. 10,10,10")
    g.add_argument("--rank", type=int, default=1)
    g.add_argument("--n", type=int, default=500, help="number of samples")
    g.add_argument("--noise", type=float, default=0.0, help="Gaussian noise sd")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--enumerate", action="store_true", help="observe every entry once")
    g.add_argument("-o", "--output", required=True)
    g.set_defaults(func=cmd_gen)

    s = sub.add_parser("solve", help="complete one instance")
    s.add_argument("-i", "--input", required=True)
    s.add_argument("--version", type=int, default=0, choices=range(11), metavar="0..10")
    s.add_argument("--lambda", dest="lam", type=_lambda, default="auto")
    s.add_argument("--tol", type=float, default=1e-4)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--max-iter", type=int, default=100_000)
    s.add_argument("--max-rho", type=int, default=DEFAULT_MAX_RHO)
    s.add_argument("--time-limit", type=float, default=None, help="seconds")
    s.add_argument("--certify", action="store_true",
                   help="stop only on a certified gap below tol")
    s.add_argument("--trace", metavar="CSV", default=None)
    s.add_argument("--dump-ip", metavar="DIR", nargs="?", const=".", default=None,
                   help="write oracle_<iter>.lp for every exact oracle call")
    s.add_argument("-o", "--output", metavar="NPY", default=None, help="save completed tensor")
    s.set_defaults(func=cmd_solve)

    b = sub.add_parser("bench", help="run an experiment suite")
    b.add_argument("--suite", choices=SUITES, required=True)
    b.add_argument("--versions", type=_versions, default=list(range(11)), help="e.g. 0-10 or 0,1,8")
    b.add_argument("--reps", type=int, default=20)
    b.add_argument("--scale", type=float, default=1.0)
    b.add_argument("--full", action="store_true", help="include cells beyond desk scale")
    b.add_argument("--rank", type=int, default=1)
    b.add_argument("--noise", type=float, default=0.1)
    b.add_argument("--tol", type=float, default=1e-4)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--max-rho", type=int, default=DEFAULT_MAX_RHO)
    b.add_argument("-o", "--output", required=True)
    b.set_defaults(func=cmd_bench)

    r = sub.add_parser("report", help="summarize a results CSV")
    r.add_argument("-i", "--input", required=True)
    r.add_argument("-o", "--output", required=True)
    r.add_argument("--plot-data", metavar="DIR", default=None)
    r.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    log.debug("kernel backend: %s", _backend.BACKEND)
    if getattr(args, "reps", 1) < 1:
        parser.error("--reps must be at least 1")
    try:
        return args.func(args)
    except (OracleTooLarge, ValueError, OSError) as exc:
        print(f"ntc: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
