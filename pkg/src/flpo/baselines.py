"""GA, SA, and CEM baselines over facility locations.

All three search the continuous facility coordinates only; route choice is
embedded in the fitness as an exact layered min-plus shortest-path sweep
(the hard limit of the value recursion), which makes them the strongest
reasonable baselines for the benchmark comparison.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .anneal import SolveReport, TraceRow
from .instance import CanonicalPath, Instance, check_facilities


@dataclass(frozen=True)
class GAParams:
    population: int = 100
    generations: int = 8000
    crossover_rate: float = 0.5
    mutation_rate: float = 0.3
    seed: int = 0

    def __post_init__(self) -> None:
        if self.population < 2:
            raise ValueError("population must be >= 2")
        if not (0.0 <= self.crossover_rate <= 1.0 and 0.0 <= self.mutation_rate <= 1.0):
            raise ValueError("rates must lie in [0, 1]")


@dataclass(frozen=True)
class SAParams:
    t0: float = 1.0
    cooling: float = 0.995
    iterations: int = 50000
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 < self.cooling < 1.0:
            raise ValueError("cooling must lie in (0, 1)")
        if self.t0 < 0.0:
            raise ValueError("t0 must be nonnegative")


@dataclass(frozen=True)
class CEMParams:
    population: int = 100
    iterations: int = 2000
    elite_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self) -> None:
        if self.population < 2:
            raise ValueError("population must be >= 2")
        if not 0.0 < self.elite_fraction <= 1.0:
            raise ValueError("elite_fraction must lie in (0, 1]")


def _cost_tensor(inst: Instance, Ys: np.ndarray) -> np.ndarray:
    """(B, N, M+2, M+2) leg costs for a batch of facility layouts."""
    b, m, d = Ys.shape
    n = inst.n_agents
    pos = np.empty((b, n, m + 2, d))
    pos[:, :, 0, :] = inst.starts[None, :, :]
    pos[:, :, 1 : m + 1, :] = Ys[:, None, :, :]
    pos[:, :, m + 1, :] = inst.destinations[None, :, :]
    diff = pos[:, :, :, None, :] - pos[:, :, None, :, :]
    return np.einsum("bnijd,bnijd->bnij", diff, diff)


def fitness_batch(inst: Instance, Ys: np.ndarray) -> np.ndarray:
    """Exact weighted shortest-trajectory cost for each layout in the batch."""
    Ys = np.asarray(Ys, dtype=float)
    m = inst.facility_count
    dest = m + 1
    cost = _cost_tensor(inst, Ys)
    # backward min-plus sweep over the stage graph
    v = cost[:, :, :, dest].copy()  # stage M: forced hop to the destination
    v[:, :, dest] = 0.0
    for _ in range(m - 1, 0, -1):
        v = np.min(cost[:, :, :, 1:] + v[:, :, None, 1:], axis=3)
        v[:, :, dest] = 0.0
    start_vals = np.min(cost[:, :, 0, 1:] + v[:, :, 1:], axis=2)
    return start_vals @ inst.weights


def fitness(inst: Instance, Y: np.ndarray) -> float:
    """Weighted sum of exact shortest-trajectory costs given facilities Y."""
    Y = check_facilities(inst, Y)
    return float(fitness_batch(inst, Y[None, :, :])[0])


def shortest_paths_dp(inst: Instance, Y: np.ndarray) -> list[CanonicalPath]:
    """Optimal route per agent by min-plus recursion with backtracking.

    Cost ties prefer the destination, then the lowest facility index.
    """
    Y = check_facilities(inst, Y)
    m = inst.facility_count
    dest = m + 1
    cost = _cost_tensor(inst, Y[None, :, :])[0]
    paths = []
    for agent in range(inst.n_agents):
        c = cost[agent]
        values = np.full((m + 2, m + 2), np.inf)
        values[:, dest] = 0.0
        values[m, 1 : dest + 1] = c[1 : dest + 1, dest]
        values[m, dest] = 0.0
        for k in range(m - 1, 0, -1):
            values[k, 1 : dest + 1] = np.min(
                c[1 : dest + 1, 1:] + values[k + 1, 1:], axis=1
            )
            values[k, dest] = 0.0
        nodes = [0]
        node = 0
        for k in range(m + 1):
            if node == dest or k == m:
                node = dest
            else:
                options = c[node, 1:] + values[k + 1, 1:]
                best = options.min()
                if options[dest - 1] <= best:
                    node = dest
                else:
                    node = 1 + int(np.flatnonzero(options <= best)[0])
            nodes.append(node)
        seq = []
        for v in nodes[1:]:
            if v == dest:
                break
            if not seq or seq[-1] != v:
                seq.append(v)
        paths.append(CanonicalPath(facilities=tuple(seq), agent=agent))
    return paths


def _report(
    inst: Instance,
    method: str,
    Y: np.ndarray,
    trace: list[TraceRow],
    seed: int,
    config: dict,
    t0: float,
) -> SolveReport:
    return SolveReport(
        method=method,
        final_locations=Y,
        paths=shortest_paths_dp(inst, Y),
        cost=fitness(inst, Y),
        trace=trace,
        config=config,
        seed=seed,
        wall_ms=(time.perf_counter() - t0) * 1e3,
    )


def ga_solve(inst: Instance, params: GAParams = GAParams()) -> SolveReport:
    """Real-valued GA over flattened facility coordinates.

    Tournament selection (size 3), uniform crossover, per-gene Gaussian
    mutation scaled to the domain box, single-individual elitism.
    """
    t0 = time.perf_counter()
    rng = np.random.default_rng(np.random.SeedSequence((params.seed, 0x6A)))
    m, d = inst.facility_count, inst.dim
    genes = m * d
    lo = np.tile(inst.bounds_lo, m)
    hi = np.tile(inst.bounds_hi, m)
    width = hi - lo
    sigma = 0.1 * width
    pop = rng.uniform(lo, hi, size=(params.population, genes))
    fit = fitness_batch(inst, pop.reshape(-1, m, d))
    best_idx = int(np.argmin(fit))
    best_x, best_f = pop[best_idx].copy(), float(fit[best_idx])
    trace: list[TraceRow] = []
    for gen in range(params.generations):
        it_t0 = time.perf_counter()
        contenders = rng.integers(0, params.population, size=(params.population, 3))
        winners = contenders[np.arange(params.population), np.argmin(fit[contenders], axis=1)]
        parents = pop[winners]
        children = parents.copy()
        partners = parents[rng.permutation(params.population)]
        crossed = rng.random(params.population) < params.crossover_rate
        gene_mask = rng.random((params.population, genes)) < 0.5
        take = crossed[:, None] & gene_mask
        children[take] = partners[take]
        mut_mask = rng.random((params.population, genes)) < params.mutation_rate
        children = children + mut_mask * rng.normal(size=(params.population, genes)) * sigma
        children[0] = best_x  # elitism
        pop = children
        fit = fitness_batch(inst, pop.reshape(-1, m, d))
        gen_idx = int(np.argmin(fit))
        if fit[gen_idx] < best_f:
            best_x, best_f = pop[gen_idx].copy(), float(fit[gen_idx])
        trace.append(
            TraceRow(
                beta=None,
                iteration=gen,
                objective=best_f,
                grad_norm=None,
                wall_ms=(time.perf_counter() - it_t0) * 1e3,
            )
        )
    config = {
        "population": params.population,
        "generations": params.generations,
        "crossover_rate": params.crossover_rate,
        "mutation_rate": params.mutation_rate,
        "seed": params.seed,
    }
    return _report(inst, "ga", best_x.reshape(m, d), trace, params.seed, config, t0)


def sa_solve(inst: Instance, params: SAParams = SAParams(), objective=None) -> SolveReport:
    """Single-state simulated annealing with Gaussian proposals over Y.

    `objective` overrides the fitness (testing hook); the best state ever
    visited is reported.
    """
    t0 = time.perf_counter()
    rng = np.random.default_rng(np.random.SeedSequence((params.seed, 0x5A)))
    m, d = inst.facility_count, inst.dim
    lo = np.tile(inst.bounds_lo, m)
    hi = np.tile(inst.bounds_hi, m)
    sigma = 0.05 * (hi - lo)
    if objective is None:
        objective = lambda Y: float(fitness_batch(inst, Y[None].reshape(1, m, d))[0])
    else:
        raw = objective
        objective = lambda Y: float(raw(Y.reshape(m, d)))
    x = rng.uniform(lo, hi)
    fx = objective(x)
    best_x, best_f = x.copy(), fx
    trace: list[TraceRow] = []
    temp = params.t0
    for it in range(params.iterations):
        it_t0 = time.perf_counter()
        cand = x + rng.normal(size=x.shape) * sigma
        fc = objective(cand)
        delta = fc - fx
        if delta <= 0.0 or (temp > 0.0 and rng.random() < np.exp(-delta / temp)):
            x, fx = cand, fc
        if fx < best_f:
            best_x, best_f = x.copy(), fx
        temp *= params.cooling
        if it % 50 == 0 or it == params.iterations - 1:
            trace.append(
                TraceRow(
                    beta=None,
                    iteration=it,
                    objective=best_f,
                    grad_norm=None,
                    wall_ms=(time.perf_counter() - it_t0) * 1e3,
                )
            )
    config = {
        "t0": params.t0,
        "cooling": params.cooling,
        "iterations": params.iterations,
        "seed": params.seed,
    }
    return _report(inst, "sa", best_x.reshape(m, d), trace, params.seed, config, t0)


def cem_solve(inst: Instance, params: CEMParams = CEMParams()) -> SolveReport:
    """Cross-entropy method with a diagonal Gaussian over flattened Y."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(np.random.SeedSequence((params.seed, 0xCE)))
    m, d = inst.facility_count, inst.dim
    genes = m * d
    lo = np.tile(inst.bounds_lo, m)
    hi = np.tile(inst.bounds_hi, m)
    mean = 0.5 * (lo + hi)
    var = np.square(0.5 * (hi - lo))
    n_elite = max(1, int(round(params.elite_fraction * params.population)))
    best_x, best_f = mean.copy(), float(fitness_batch(inst, mean.reshape(1, m, d))[0])
    trace: list[TraceRow] = []
    for it in range(params.iterations):
        it_t0 = time.perf_counter()
        samples = mean + rng.normal(size=(params.population, genes)) * np.sqrt(var)
        fit = fitness_batch(inst, samples.reshape(-1, m, d))
        order = np.argsort(fit, kind="stable")
        elite = samples[order[:n_elite]]
        mean = elite.mean(axis=0)
        var = np.maximum(elite.var(axis=0), 1e-6)
        if fit[order[0]] < best_f:
            best_x, best_f = samples[order[0]].copy(), float(fit[order[0]])
        trace.append(
            TraceRow(
                beta=None,
                iteration=it,
                objective=best_f,
                grad_norm=None,
                wall_ms=(time.perf_counter() - it_t0) * 1e3,
            )
        )
    config = {
        "population": params.population,
        "iterations": params.iterations,
        "elite_fraction": params.elite_fraction,
        "seed": params.seed,
    }
    return _report(inst, "cem", mean.reshape(m, d), trace, params.seed, config, t0)
