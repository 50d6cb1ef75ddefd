"""Benchmark harness: seeded method runs over instances with CSV emission.

Every run records its seed, config echo, wall time, and cost; reruns with
identical seeds reproduce all cost fields bitwise (wall clock exempt).
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path as FilePath

import numpy as np

from .anneal import AnnealConfig, SolveReport, solve
from .baselines import CEMParams, GAParams, SAParams, cem_solve, ga_solve, sa_solve
from .bridge import fnv1a64, import_policy
from .instance import Instance, load_instance

CSV_HEADER = "instance,method,seed,status,cost,wall_ms,config_hash"
METHODS = ("mep-anneal", "mep-high-beta", "ga", "sa", "cem")

# Benchmark-protocol annealing defaults (mixture estimator, 8 uniform samples)
BENCH_BETA_END = 1e4
BENCH_B = 5
BENCH_L = 13


def random_init(inst: Instance, seed: int) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence((int(seed), 0xF0)))
    return rng.uniform(
        inst.bounds_lo, inst.bounds_hi, size=(inst.facility_count, inst.dim)
    )


def run_method(
    inst: Instance,
    method: str,
    seed: int,
    overrides: dict | None = None,
) -> SolveReport:
    """Dispatch one seeded solver run with benchmark-protocol defaults."""
    ov = dict(overrides or {})
    if method == "mep-anneal":
        cfg = AnnealConfig(
            beta_start=ov.pop("beta_start", 1e-3),
            beta_end=ov.pop("beta_end", BENCH_BETA_END),
            growth=ov.pop("growth", 10.0),
            inner_iters=ov.pop("inner_iters", 100),
            step_size=ov.pop("step_size", 0.01),
            tol=ov.pop("tol", 1e-3),
            backend=ov.pop("backend", "mixture"),
            source=ov.pop("source", None),
            b=ov.pop("b", BENCH_B),
            L=ov.pop("L", BENCH_L),
            seed=seed,
            **ov,
        )
        return solve(inst, None, cfg)
    if method == "mep-high-beta":
        beta = ov.pop("beta_end", BENCH_BETA_END)
        cfg = AnnealConfig(
            beta_start=beta,
            beta_end=beta,
            inner_iters=ov.pop("inner_iters", 100),
            step_size=ov.pop("step_size", 0.01),
            tol=ov.pop("tol", 1e-3),
            backend=ov.pop("backend", "mixture"),
            source=ov.pop("source", None),
            b=ov.pop("b", BENCH_B),
            L=ov.pop("L", BENCH_L),
            seed=seed,
            **ov,
        )
        return solve(inst, random_init(inst, seed), cfg)
    if method == "ga":
        return ga_solve(inst, GAParams(seed=seed, **ov))
    if method == "sa":
        return sa_solve(inst, SAParams(seed=seed, **ov))
    if method == "cem":
        return cem_solve(inst, CEMParams(seed=seed, **ov))
    raise ValueError(f"unknown method {method!r}; choose from {METHODS}")


@dataclass(frozen=True)
class BenchRun:
    instance_path: str
    method: str
    seed: int
    overrides: dict = field(default_factory=dict)


@dataclass(frozen=True)
class BenchSuite:
    runs: list[BenchRun]
    out_dir: str | FilePath


@dataclass(frozen=True)
class BenchRow:
    instance: str
    method: str
    seed: int
    status: str
    cost: float | None
    wall_ms: float
    config_hash: str

    def csv(self) -> str:
        cost = "" if self.cost is None else repr(self.cost)
        return (
            f"{self.instance},{self.method},{self.seed},{self.status},"
            f"{cost},{self.wall_ms:.3f},{self.config_hash}"
        )


def make_suite(
    instance_paths: list[str],
    methods: list[str],
    repetitions: int,
    out_dir: str | FilePath,
    seed_base: int = 0,
    overrides: dict | None = None,
) -> BenchSuite:
    runs = [
        BenchRun(
            instance_path=str(path),
            method=method,
            seed=seed_base + rep,
            overrides=dict(overrides or {}),
        )
        for path in instance_paths
        for method in methods
        for rep in range(repetitions)
    ]
    return BenchSuite(runs=runs, out_dir=out_dir)


def _execute(run: BenchRun, inst_cache: dict) -> BenchRow:
    t0 = time.perf_counter()
    try:
        inst = inst_cache[run.instance_path]
        report = run_method(inst, run.method, run.seed, run.overrides)
        config_hash = fnv1a64(
            json.dumps(report.config, sort_keys=True, default=str).encode()
        )
        return BenchRow(
            instance=run.instance_path,
            method=run.method,
            seed=run.seed,
            status="ok",
            cost=report.cost,
            wall_ms=report.wall_ms,
            config_hash=config_hash,
        )
    except Exception as exc:  # noqa: BLE001 - harness must keep going
        return BenchRow(
            instance=run.instance_path,
            method=run.method,
            seed=run.seed,
            status=f"error:{type(exc).__name__}",
            cost=None,
            wall_ms=(time.perf_counter() - t0) * 1e3,
            config_hash="",
        )


def run_benchmark(suite: BenchSuite, parallel: int = 1) -> tuple[list[BenchRow], str]:
    """Run every cell, write runs.csv and summary.csv, return rows + summary.

    Rows keep suite order regardless of the worker count.
    """
    inst_cache: dict[str, Instance] = {}
    for run in suite.runs:
        if run.instance_path not in inst_cache:
            inst_cache[run.instance_path] = load_instance(run.instance_path)
    if parallel > 1 and len(suite.runs) > 1:
        with ThreadPoolExecutor(max_workers=parallel) as pool:
            rows = list(pool.map(lambda r: _execute(r, inst_cache), suite.runs))
    else:
        rows = [_execute(run, inst_cache) for run in suite.runs]

    out_dir = FilePath(suite.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    runs_csv = "\n".join([CSV_HEADER, *[row.csv() for row in rows]]) + "\n"
    (out_dir / "runs.csv").write_text(runs_csv)

    summary_lines = ["instance,method,runs,ok,min_cost,median_cost,min_wall_ms"]
    seen: list[tuple[str, str]] = []
    for row in rows:
        key = (row.instance, row.method)
        if key not in seen:
            seen.append(key)
    for instance, method in seen:
        cell = [r for r in rows if (r.instance, r.method) == (instance, method)]
        ok = [r for r in cell if r.status == "ok"]
        if ok:
            costs = np.array([r.cost for r in ok])
            summary_lines.append(
                f"{instance},{method},{len(cell)},{len(ok)},"
                f"{costs.min()!r},{np.median(costs)!r},"
                f"{min(r.wall_ms for r in ok):.3f}"
            )
        else:
            summary_lines.append(f"{instance},{method},{len(cell)},0,,,")
    summary = "\n".join(summary_lines) + "\n"
    (out_dir / "summary.csv").write_text(summary)
    return rows, summary


def external_source_from_file(path: str, inst: Instance, Y: np.ndarray):
    return import_policy(path, inst, Y)
