"""Brute-force ground truth over the complete absorbing trajectory space.

Deliberately naive: everything is computed by full enumeration so that the
dynamic-programming and sampling modules have an independent reference.
Usable only while sum_{j=0..M} M^j stays within the size guard.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from .instance import (
    Instance,
    Path,
    check_facilities,
    paths_cost_array,
    weighted_cost_gradient,
)

SIZE_GUARD = 1_000_000


class SizeGuardError(ValueError):
    """Raised when the trajectory space is too large to enumerate."""


def trajectory_count(n_facilities: int) -> int:
    """sum_{j=0}^{M} M^j: facility sequences of length 0..M with repeats."""
    return sum(n_facilities**j for j in range(n_facilities + 1))


def _check_guard(n_facilities: int) -> None:
    count = trajectory_count(n_facilities)
    if count > SIZE_GUARD:
        raise SizeGuardError(
            f"M={n_facilities} spans {count} trajectories, over the "
            f"enumeration budget of {SIZE_GUARD}"
        )


@dataclass(frozen=True)
class TrajectorySet:
    """All absorbing trajectories for one agent, shortest sequences first.

    nodes: (P, M+2) int array, row p a full node trajectory. Rows are ordered
    by facility-sequence length, then lexicographically within a length.
    """

    nodes: np.ndarray
    facility_count: int

    def __len__(self) -> int:
        return self.nodes.shape[0]

    def path(self, index: int, agent: int = 0) -> Path:
        return Path(nodes=tuple(int(v) for v in self.nodes[index]), agent=agent)


def enumerate_trajectories(n_facilities: int) -> TrajectorySet:
    """Every facility sequence of length 0..M (consecutive repeats allowed),
    padded with the absorbing destination to full length."""
    _check_guard(n_facilities)
    m = n_facilities
    dest = m + 1
    rows = []
    for length in range(m + 1):
        for seq in product(range(1, m + 1), repeat=length):
            rows.append((0, *seq, *([dest] * (m + 1 - length))))
    return TrajectorySet(nodes=np.array(rows, dtype=np.intp), facility_count=m)


def trajectory_costs(
    inst: Instance, Y: np.ndarray, agent: int, trajectories: TrajectorySet | None = None
) -> tuple[TrajectorySet, np.ndarray]:
    if trajectories is None:
        trajectories = enumerate_trajectories(inst.facility_count)
    costs = paths_cost_array(inst, Y, trajectories.nodes, agent)
    return trajectories, costs


def exact_path_gibbs(
    inst: Instance, Y: np.ndarray, beta: float, agent: int
) -> tuple[TrajectorySet, np.ndarray]:
    """Gibbs distribution over the full trajectory space: p ~ exp(-beta * cost)."""
    if beta <= 0.0:
        raise ValueError("beta must be positive")
    trajectories, costs = trajectory_costs(inst, Y, agent)
    shifted = np.exp(-beta * (costs - costs.min()))
    return trajectories, shifted / shifted.sum()


def exact_free_energy(inst: Instance, Y: np.ndarray, beta: float) -> float:
    """Weighted free energy, computed two ways and cross-checked.

    Closed form: -(1/beta) * log sum exp(-beta * cost) per agent. The
    definitional form evaluates expected cost minus entropy/beta under the
    Gibbs distribution; both must agree to 1e-10.
    """
    if beta <= 0.0:
        raise ValueError("beta must be positive")
    Y = check_facilities(inst, Y)
    trajectories = enumerate_trajectories(inst.facility_count)
    total_closed = 0.0
    total_def = 0.0
    for agent in range(inst.n_agents):
        costs = paths_cost_array(inst, Y, trajectories.nodes, agent)
        low = costs.min()
        shifted = np.exp(-beta * (costs - low))
        z = shifted.sum()
        closed = low - np.log(z) / beta
        p = shifted / z
        log_p = -beta * (costs - low) - np.log(z)
        definitional = float(np.dot(p, costs + log_p / beta))
        if abs(closed - definitional) > 1e-10 * (1.0 + abs(closed)):
            raise AssertionError(
                f"free-energy forms disagree for agent {agent}: {closed} vs {definitional}"
            )
        total_closed += inst.weights[agent] * closed
        total_def += inst.weights[agent] * definitional
    return float(total_closed)


def exact_gradient(inst: Instance, Y: np.ndarray, beta: float) -> np.ndarray:
    """Probability-weighted sum of per-trajectory cost gradients, (M, d)."""
    if beta <= 0.0:
        raise ValueError("beta must be positive")
    Y = check_facilities(inst, Y)
    trajectories = enumerate_trajectories(inst.facility_count)
    grad = np.zeros_like(Y)
    for agent in range(inst.n_agents):
        _, probs = exact_path_gibbs(inst, Y, beta, agent)
        grad += inst.weights[agent] * weighted_cost_gradient(
            inst, Y, trajectories.nodes, agent, probs
        )
    return grad


def path_gradients(inst: Instance, Y: np.ndarray, nodes: np.ndarray, agent: int) -> np.ndarray:
    """Per-trajectory cost gradients, (P, M, d)."""
    pos = inst.node_positions(Y, agent)
    m = inst.facility_count
    p_count = nodes.shape[0]
    grads = np.zeros((p_count, m, inst.dim))
    coords = pos[nodes]
    rows = np.arange(p_count)
    for k in range(nodes.shape[1] - 1):
        a_idx = nodes[:, k]
        b_idx = nodes[:, k + 1]
        delta = 2.0 * (coords[:, k, :] - coords[:, k + 1, :])
        a_fac = (a_idx >= 1) & (a_idx <= m)
        b_fac = (b_idx >= 1) & (b_idx <= m)
        np.add.at(grads, (rows[a_fac], a_idx[a_fac] - 1), delta[a_fac])
        np.add.at(grads, (rows[b_fac], b_idx[b_fac] - 1), -delta[b_fac])
    return grads


def exact_shortest_path(inst: Instance, Y: np.ndarray, agent: int) -> Path:
    """Minimum-cost trajectory; ties resolve to fewest facility visits, then
    lexicographic facility order (the enumeration order guarantees both)."""
    trajectories, costs = trajectory_costs(inst, Y, agent)
    best = int(np.argmin(costs))
    return trajectories.path(best, agent=agent)


def gibbs_entropy(probs: np.ndarray) -> float:
    nz = probs[probs > 0.0]
    return float(-np.dot(nz, np.log(nz)))
