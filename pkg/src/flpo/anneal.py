"""Outer solver: geometric beta annealing around an inner gradient-descent
loop on facility locations, with warm starts between annealing steps and a
greedy hard-solution extraction at the final beta.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path as FilePath

import numpy as np

from . import dp
from .instance import CanonicalPath, Instance, canonicalize, check_facilities, path_cost
from .sampling import ExactDPSource, PolicySource, estimate_gradient

BACKENDS = ("exact-dp", "mixture")


class SolverError(RuntimeError):
    """Raised when the descent produces unusable numbers."""


@dataclass(frozen=True)
class AnnealConfig:
    """Annealing and descent hyperparameters (benchmark-protocol defaults).

    tol is an infinity-norm tolerance on the free-energy gradient: the inner
    loop stops once no coordinate of Y would move by more than
    step_size * tol. Interpreting the tolerance against the raw update
    instead freezes the descent at low beta (every update is below 1e-3
    there), which suppresses the facility-splitting phase transitions the
    annealing exists to track.
    """

    beta_start: float = 1e-3
    beta_end: float = 1e3
    growth: float = 10.0
    inner_iters: int = 100
    step_size: float = 0.01
    tol: float = 1e-3
    backend: str = "exact-dp"
    source: PolicySource | None = None
    b: int = 5
    L: int = 15
    seed: int = 0
    clip_domain: bool = False
    dedup: bool = False

    def __post_init__(self) -> None:
        if self.beta_start <= 0 or self.beta_start > self.beta_end:
            raise ValueError("need 0 < beta_start <= beta_end")
        if self.growth <= 1.0:
            raise ValueError("growth must exceed 1")
        if self.step_size <= 0.0:
            raise ValueError("step_size must be positive")
        if self.tol < 0.0:
            raise ValueError("tol must be nonnegative")
        if self.backend not in BACKENDS:
            raise ValueError(f"backend must be one of {BACKENDS}")
        if not 0 <= self.b <= self.L:
            raise ValueError("need 0 <= b <= L")

    def echo(self) -> dict:
        src = self.source
        return {
            "beta_start": self.beta_start,
            "beta_end": self.beta_end,
            "growth": self.growth,
            "inner_iters": self.inner_iters,
            "step_size": self.step_size,
            "tol": self.tol,
            "backend": self.backend,
            "source": getattr(src, "name", None) if src is not None else None,
            "b": self.b,
            "L": self.L,
            "seed": self.seed,
            "clip_domain": self.clip_domain,
            "dedup": self.dedup,
        }


@dataclass(frozen=True)
class TraceRow:
    beta: float | None
    iteration: int
    objective: float
    grad_norm: float | None
    wall_ms: float


@dataclass(frozen=True)
class SolveReport:
    """Benchmark record of one solve: solution, hard cost, trace, timings."""

    method: str
    final_locations: np.ndarray
    paths: list[CanonicalPath]
    cost: float
    trace: list[TraceRow] = field(default_factory=list)
    beta_wall_ms: list[tuple[float, float]] = field(default_factory=list)
    config: dict = field(default_factory=dict)
    seed: int = 0
    wall_ms: float = 0.0

    def to_dict(self, include_timing: bool = True) -> dict:
        doc = {
            "method": self.method,
            "seed": self.seed,
            "config": self.config,
            "cost": self.cost,
            "final_locations": [[float(v) for v in row] for row in self.final_locations],
            "paths": [list(p.facilities) for p in self.paths],
            "trace": [
                {
                    "beta": row.beta,
                    "iteration": row.iteration,
                    "objective": row.objective,
                    "grad_norm": row.grad_norm,
                    **({"wall_ms": row.wall_ms} if include_timing else {}),
                }
                for row in self.trace
            ],
        }
        if include_timing:
            doc["beta_wall_ms"] = [[b, t] for b, t in self.beta_wall_ms]
            doc["wall_ms"] = self.wall_ms
        return doc

    def canonical_bytes(self) -> bytes:
        """Deterministic content bytes; wall-clock fields are excluded."""
        return json.dumps(self.to_dict(include_timing=False), sort_keys=True).encode()

    def save(self, path: str | FilePath) -> None:
        FilePath(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    def save_trace_csv(self, path: str | FilePath) -> None:
        def fmt(v: float | None) -> str:
            return "" if v is None else repr(v)

        lines = ["beta,iter,F,grad_norm,wall_ms"]
        for row in self.trace:
            lines.append(
                f"{fmt(row.beta)},{row.iteration},{fmt(row.objective)},"
                f"{fmt(row.grad_norm)},{row.wall_ms:.3f}"
            )
        FilePath(path).write_text("\n".join(lines) + "\n")


def beta_schedule(cfg: AnnealConfig) -> list[float]:
    """Geometric sequence from beta_start, clipped to end exactly at beta_end."""
    betas: list[float] = []
    k = 0
    while True:
        beta = cfg.beta_start * cfg.growth**k
        if beta >= cfg.beta_end * (1.0 - 1e-12):
            break
        betas.append(beta)
        k += 1
    betas.append(cfg.beta_end)
    return betas


def centroid_init(inst: Instance, seed: int) -> np.ndarray:
    """All facilities at the weighted centroid of starts and destinations,
    with tiny per-facility jitter to break the coincident-facility tie."""
    w = inst.weights / inst.weights.sum()
    centroid = 0.5 * (w @ inst.starts + w @ inst.destinations)
    rng = np.random.default_rng(np.random.SeedSequence((int(seed), 0x1A17)))
    jitter = rng.normal(scale=1e-4, size=(inst.facility_count, inst.dim))
    return centroid[None, :] + jitter


def _first_bad_agent(inst: Instance, Y: np.ndarray, beta: float) -> int:
    for agent in range(inst.n_agents):
        try:
            table = dp.gradient_table(inst, Y, beta, agent)
        except FloatingPointError:
            return agent
        if not np.all(np.isfinite(table[0, 0])):
            return agent
    return -1


def extract_solution(
    inst: Instance, Y: np.ndarray, source: PolicySource, beta: float
) -> tuple[list[CanonicalPath], float]:
    """Greedy rollout per agent on the source's policy; canonical routes and
    the hard weighted cost."""
    Y = check_facilities(inst, Y)
    paths: list[CanonicalPath] = []
    cost = 0.0
    for agent in range(inst.n_agents):
        policy = source.matrix(inst, Y, beta, agent)
        rolled = dp.greedy_rollout(policy, inst, agent)
        paths.append(canonicalize(rolled))
        cost += inst.weights[agent] * path_cost(inst, Y, rolled)
    return paths, float(cost)


def solve(
    inst: Instance,
    Y0: np.ndarray | None,
    cfg: AnnealConfig,
) -> SolveReport:
    """Annealed minimization of the free energy over facility locations.

    For each beta in the schedule, runs plain gradient descent until the
    gradient infinity-norm drops below tol or inner_iters is reached,
    warm-starting the next beta from the current iterate. The hard solution
    is a greedy rollout at the final beta.
    """
    t0 = time.perf_counter()
    if Y0 is None:
        Y = centroid_init(inst, cfg.seed)
    else:
        Y = check_facilities(inst, Y0).copy()
    source = cfg.source
    if cfg.backend == "mixture" and source is None:
        source = ExactDPSource()

    trace: list[TraceRow] = []
    beta_wall: list[tuple[float, float]] = []
    for step_index, beta in enumerate(beta_schedule(cfg)):
        beta_t0 = time.perf_counter()
        rng = np.random.default_rng(np.random.SeedSequence((int(cfg.seed), step_index)))
        for iteration in range(cfg.inner_iters):
            it_t0 = time.perf_counter()
            if cfg.backend == "exact-dp":
                objective, grad = dp.free_energy_and_gradient(inst, Y, beta)
            else:
                grad, samples = estimate_gradient(
                    inst, Y, beta, source, cfg.b, cfg.L, rng, dedup=cfg.dedup
                )
                objective = float(
                    sum(
                        inst.weights[i] * float(np.dot(a.weights, a.costs))
                        for i, a in enumerate(samples.agents)
                    )
                )
            if not np.all(np.isfinite(grad)):
                agent = _first_bad_agent(inst, Y, beta)
                raise SolverError(
                    f"non-finite gradient at beta={beta:g}, iteration={iteration}, "
                    f"first bad agent={agent}"
                )
            grad_norm = float(np.max(np.abs(grad)))
            trace.append(
                TraceRow(
                    beta=beta,
                    iteration=iteration,
                    objective=objective,
                    grad_norm=grad_norm,
                    wall_ms=(time.perf_counter() - it_t0) * 1e3,
                )
            )
            if grad_norm < cfg.tol:
                break
            new_Y = Y - cfg.step_size * grad
            if cfg.clip_domain:
                new_Y = np.clip(new_Y, inst.bounds_lo, inst.bounds_hi)
            Y = new_Y
        beta_wall.append((beta, (time.perf_counter() - beta_t0) * 1e3))

    if cfg.backend == "mixture" and source is not None and source.name == "external":
        extraction_source = source
    else:
        extraction_source = ExactDPSource()
    paths, cost = extract_solution(inst, Y, extraction_source, cfg.beta_end)
    return SolveReport(
        method="mep",
        final_locations=Y,
        paths=paths,
        cost=cost,
        trace=trace,
        beta_wall_ms=beta_wall,
        config=cfg.echo(),
        seed=cfg.seed,
        wall_ms=(time.perf_counter() - t0) * 1e3,
    )
