"""Instance generation, experiment suites and summary statistics."""

from __future__ import annotations

import csv
import logging
import math
import statistics
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .objective import nmse
from .oracle import DEFAULT_MAX_RHO, OracleTooLarge
from .solver import make_variant, solve
from .tensor import ObservedData, Shape

log = logging.getLogger(__name__)

RESULT_COLUMNS = [
    "instance_id", "dims", "n", "version", "rep", "seed", "nmse", "time_s", "iterations",
    "sigd_steps", "oracle_calls", "exact_ip_calls", "final_gap",
]

SUITES = ("order3", "increasing-order", "increasing-samples-6", "increasing-samples-7")


@dataclass(frozen=True)
class GeneratorSpec:
    dims: tuple[int, ...]
    rank: int = 1
    n: int = 500
    noise_sd: float = 0.0
    seed: int = 0
    enumerate_all: bool = False

    def __post_init__(self):
        Shape(tuple(self.dims))
        if self.rank < 1:
            raise ValueError("rank must be at least 1")
        if self.n < 1 and not self.enumerate_all:
            raise ValueError("need at least one sample")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be nonnegative")


def generate(spec: GeneratorSpec) -> tuple[np.ndarray, ObservedData, float]:
    """Random nonnegative rank-``k`` truth, uniform samples, and the ball radius.

    The truth is a sum of ``k`` outer products with Uniform[0, 1] factors.
    Sample positions are drawn uniformly with replacement (or every entry
    once with ``enumerate_all``); Gaussian noise is added to the values.
    ``lambda = k * max(truth)`` bounds the truth's gauge norm.
    """
    rng = np.random.default_rng(spec.seed)
    dims = tuple(spec.dims)
    truth = np.zeros(dims)
    for _ in range(spec.rank):
        term = np.ones(())
        for r in dims:
            term = np.multiply.outer(term, rng.random(r))
        truth += term
    if spec.enumerate_all:
        idx = np.array(list(np.ndindex(*dims)), dtype=np.int64).reshape(-1, len(dims))
    else:
        idx = np.stack([rng.integers(0, r, size=spec.n) for r in dims], axis=1)
    y = truth[tuple(idx.T)]
    if spec.noise_sd > 0:
        y = y + rng.normal(0.0, spec.noise_sd, size=len(y))
    lam = spec.rank * float(truth.max())
    return truth, ObservedData(dims, idx, y), lam


@dataclass
class RunRecord:
    instance_id: str
    dims: str
    n: int
    version: int
    rep: int
    seed: int
    nmse: float
    time_s: float
    iterations: int
    sigd_steps: int
    oracle_calls: int
    exact_ip_calls: int
    final_gap: float


@dataclass(frozen=True)
class Cell:
    suite: str
    instance_id: str
    dims: tuple[int, ...]
    n: int
    x: float


def suite_cells(suite: str, scale: float = 1.0, full: bool = False) -> list[Cell]:
    """Grid of a suite; ``scale`` shrinks sizes (order3) or sample counts.

    Cells that coincide after rounding are listed once.

    ``full`` adds the cells beyond desk scale (orders 7 and 8, and sample
    counts above 100,000).
    """
    if suite == "order3":
        cells = []
        for r in range(10, 101, 10):
            rr = max(1, int(round(r * scale)))
            # small scales can round two sizes together
            if not cells or cells[-1].x != rr:
                cells.append(Cell(suite, f"order3-r{rr}", (rr,) * 3, 500, rr))
        return cells
    if suite == "increasing-order":
        ps = range(4, 9) if full else range(4, 7)
        n = max(1, int(round(10_000 * scale)))
        return [Cell(suite, f"order{p}-r10", (10,) * p, n, p) for p in ps]
    if suite in ("increasing-samples-6", "increasing-samples-7"):
        p = int(suite[-1])
        percents = (0.01, 0.1, 1.0, 10.0) if p == 6 else (0.01, 0.1, 1.0)
        cells = []
        for pct in percents:
            n = int(round(10 ** p * pct / 100.0 * scale))
            if not full and n > 100_000:
                continue
            cells.append(Cell(suite, f"order{p}-r10-pct{pct:g}", (10,) * p, max(n, 1), n))
        return cells
    raise ValueError(f"unknown suite {suite!r}; choose from {SUITES}")


def derive_seed(base: int, *keys: int) -> int:
    return int(np.random.SeedSequence([base, *keys]).generate_state(1)[0])


def plan_suite(suite: str, versions: Iterable[int], reps: int, scale: float = 1.0,
               full: bool = False) -> list[tuple[Cell, int, int]]:
    """Every (cell, version, repetition) job in output order."""
    versions = sorted(set(versions))
    return [(cell, v, rep) for cell in suite_cells(suite, scale, full)
            for v in versions for rep in range(reps)]


def run_suite(suite: str, versions: Iterable[int], reps: int, scale: float = 1.0, *,
              full: bool = False, rank: int = 1, noise_sd: float = 0.0, tol: float = 1e-4,
              base_seed: int = 0, max_rho: int = DEFAULT_MAX_RHO, errors: list | None = None,
              keep_tensors: dict | None = None) -> Iterator[RunRecord]:
    """Run every job of a suite and yield one record per solve.

    All versions of the same (cell, repetition) see the same instance and
    the same solver seed.  Cells whose size trips the exact-oracle guard are
    logged (and appended to ``errors``) and skipped.
    """
    versions = sorted(set(versions))
    for ci, cell in enumerate(suite_cells(suite, scale, full)):
        if sum(cell.dims) > max_rho:
            msg = f"{cell.instance_id}: rho={sum(cell.dims)} exceeds exact-oracle guard {max_rho}"
            log.warning(msg)
            if errors is not None:
                errors.append(msg)
            continue
        for rep in range(reps):
            seed = derive_seed(base_seed, ci, rep)
            truth, data, lam = generate(GeneratorSpec(cell.dims, rank, cell.n, noise_sd, seed))
            for v in versions:
                try:
                    res = solve(data, lam, tol, make_variant(v), seed, trace=False, max_rho=max_rho)
                except OracleTooLarge as exc:
                    log.warning("%s version %d rep %d: %s", cell.instance_id, v, rep, exc)
                    if errors is not None:
                        errors.append(f"{cell.instance_id} v{v} rep{rep}: {exc}")
                    continue
                if keep_tensors is not None:
                    keep_tensors[(cell.instance_id, v, rep)] = (res.tensor, truth)
                yield RunRecord(
                    instance_id=cell.instance_id, dims="x".join(map(str, cell.dims)), n=cell.n,
                    version=v, rep=rep, seed=seed, nmse=nmse(res.tensor, truth),
                    time_s=res.time_s, iterations=res.iterations,
                    sigd_steps=res.steps, oracle_calls=res.counts["oracle_calls"],
                    exact_ip_calls=res.counts["exact_ip_calls"], final_gap=res.gap,
                )


def write_records(records: Iterable[RunRecord], path) -> int:
    count = 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=RESULT_COLUMNS)
        w.writeheader()
        for rec in records:
            row = asdict(rec)
            for key in ("nmse", "time_s", "final_gap"):
                row[key] = repr(float(row[key]))
            w.writerow(row)
            fh.flush()
            count += 1
    return count


def read_records(path) -> list[RunRecord]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            out.append(RunRecord(
                instance_id=row["instance_id"], dims=row["dims"], n=int(row["n"]),
                version=int(row["version"]), rep=int(row["rep"]), seed=int(row["seed"]),
                nmse=float(row["nmse"]), time_s=float(row["time_s"]),
                iterations=int(row["iterations"]), sigd_steps=int(row["sigd_steps"]),
                oracle_calls=int(row["oracle_calls"]), exact_ip_calls=int(row["exact_ip_calls"]),
                final_gap=float(row["final_gap"]),
            ))
    return out


def describe(values) -> dict:
    """Mean, standard error, min, lower median and max of a nonempty sample."""
    vals = sorted(float(v) for v in values)
    if not vals:
        raise ValueError("cannot summarize an empty group")
    m = len(vals)
    se = statistics.stdev(vals) / math.sqrt(m) if m > 1 else 0.0
    return {"mean": statistics.fmean(vals), "se": se, "min": vals[0],
            "median": statistics.median_low(vals), "max": vals[-1]}


SUMMARY_COLUMNS = [
    "instance_id", "dims", "n", "version", "reps", "nmse_mean", "nmse_se",
    "time_mean", "time_se", "time_min", "time_median", "time_max",
]


def aggregate(records: Iterable[RunRecord]) -> list[dict]:
    """Per (instance, version) statistics, in first-seen order."""
    groups: dict[tuple[str, int], list[RunRecord]] = {}
    for rec in records:
        groups.setdefault((rec.instance_id, rec.version), []).append(rec)
    if not groups:
        raise ValueError("no records to aggregate")
    rows = []
    for (inst, version), recs in groups.items():
        e = describe(r.nmse for r in recs)
        t = describe(r.time_s for r in recs)
        rows.append({
            "instance_id": inst, "dims": recs[0].dims, "n": recs[0].n, "version": version,
            "reps": len(recs), "nmse_mean": e["mean"], "nmse_se": e["se"],
            "time_mean": t["mean"], "time_se": t["se"], "time_min": t["min"],
            "time_median": t["median"], "time_max": t["max"],
        })
    return rows


def write_summary(rows: list[dict], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=SUMMARY_COLUMNS)
        w.writeheader()
        w.writerows(rows)


def _family(row: dict) -> tuple[str, float]:
    """Figure family and x coordinate of a summary row."""
    inst = row["instance_id"]
    dims = [int(d) for d in str(row["dims"]).split("x")]
    if inst.startswith("order3-"):
        return "order3", dims[0]
    if "-pct" in inst:
        return f"increasing-samples-{len(dims)}", int(row["n"])
    return "increasing-order", len(dims)


def write_plot_data(rows: list[dict], directory) -> list[Path]:
    """One CSV per figure family: x, version and the NMSE/time means and SEs."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    families: dict[str, list] = {}
    for row in rows:
        fam, x = _family(row)
        families.setdefault(fam, []).append(
            {"x": x, "version": row["version"], "nmse_mean": row["nmse_mean"],
             "nmse_se": row["nmse_se"], "time_mean": row["time_mean"], "time_se": row["time_se"]}
        )
    paths = []
    for fam, items in sorted(families.items()):
        items.sort(key=lambda d: (d["x"], d["version"]))
        path = directory / f"{fam}.csv"
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=["x", "version", "nmse_mean", "nmse_se",
                                               "time_mean", "time_se"])
            w.writeheader()
            w.writerows(items)
        paths.append(path)
    return paths
