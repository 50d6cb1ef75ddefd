"""Exact maximum-entropy machinery on the stage graph.

Backward log-sum-exp value recursion, stagewise Gibbs policy, free energy,
and its exact gradient with respect to facility locations. All quantities
are per-agent; agent reductions are weighted sums in ascending agent order.

Structurally forbidden transitions are stored as +inf state-action values,
which the stabilized softmin maps to zero probability. The destination is
absorbing at every stage (forced zero-cost self-transition), so its value
is identically zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .instance import Instance, Path, check_facilities
from .parallel import agent_map


@dataclass(frozen=True)
class ValueTable:
    """values[k][node] for stages 0..M+1; +inf marks nodes invalid at a stage."""

    values: np.ndarray
    beta: float

    @property
    def start_value(self) -> float:
        return float(self.values[0, 0])


@dataclass(frozen=True)
class StateActionTable:
    """tables[k][node][next] = leg cost + next value; +inf where forbidden."""

    tables: np.ndarray
    beta: float


@dataclass(frozen=True)
class PolicyMatrix:
    """Per-agent transition policy over the M+2 nodes.

    matrix is the stage-uniform export (start row from stage 0, facility
    rows from stage 1, destination row the indicator of itself). When the
    policy came from the exact recursion, stage_matrices keeps the full
    per-stage rows, which remain the ground truth for rollouts; the flat
    matrix is an approximation near the horizon.
    """

    matrix: np.ndarray
    stage_matrices: np.ndarray | None = None

    @property
    def n_nodes(self) -> int:
        return self.matrix.shape[0]

    def row(self, stage: int, node: int) -> np.ndarray:
        if self.stage_matrices is not None:
            return self.stage_matrices[stage, node]
        return self.matrix[node]


def _stage_blocks(m: int, k: int):
    """Valid (rows, cols) index blocks for the transition from stage k to k+1."""
    dest = m + 1
    if k == 0:
        yield np.array([0]), np.arange(1, dest + 1)
    elif k < m:
        yield np.arange(1, m + 1), np.arange(1, dest + 1)
        yield np.array([dest]), np.array([dest])
    else:
        yield np.arange(1, dest + 1), np.array([dest])


def softmin_rows(lam: np.ndarray, beta: float) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise softmin and Gibbs probabilities of a state-action block.

    Stabilized by min-subtraction so the exponent never exceeds zero; +inf
    entries come out with probability exactly 0. Rows must contain at least
    one finite entry.
    """
    low = lam.min(axis=-1, keepdims=True)
    w = np.exp(-beta * (lam - low))
    z = w.sum(axis=-1, keepdims=True)
    return low[..., 0] - np.log(z[..., 0]) / beta, w / z


def cost_matrix(inst: Instance, Y: np.ndarray, agent: int) -> np.ndarray:
    """(M+2, M+2) squared-Euclidean leg costs between all node pairs."""
    pos = inst.node_positions(Y, agent)
    diff = pos[:, None, :] - pos[None, :, :]
    return np.einsum("abd,abd->ab", diff, diff)


def backward_values(
    inst: Instance, Y: np.ndarray, beta: float, agent: int
) -> tuple[ValueTable, StateActionTable]:
    """Backward value recursion from the terminal stage.

    V[k][n] = softmin_beta over successors of (leg cost + V[k+1]); the
    destination row is a forced self-transition with value zero.
    """
    if beta <= 0.0:
        raise ValueError("beta must be positive")
    Y = check_facilities(inst, Y)
    cost = cost_matrix(inst, Y, agent)
    if not np.all(np.isfinite(cost)):
        raise FloatingPointError("non-finite leg costs")
    m = inst.facility_count
    dest = m + 1
    values = np.full((m + 2, m + 2), np.inf)
    values[:, dest] = 0.0
    tables = np.full((m + 1, m + 2, m + 2), np.inf)
    tables[:, dest, dest] = 0.0
    for k in range(m, -1, -1):
        for rows, cols in _stage_blocks(m, k):
            lam = cost[np.ix_(rows, cols)] + values[k + 1, cols]
            tables[k][np.ix_(rows, cols)] = lam
            v, _ = softmin_rows(lam, beta)
            values[k, rows] = v
    return ValueTable(values=values, beta=beta), StateActionTable(tables=tables, beta=beta)


def gibbs_policy(values: ValueTable, sa: StateActionTable, beta: float) -> PolicyMatrix:
    """Stagewise softmax of -beta * state-action values, from the same tables.

    The exported flat matrix takes the start row from stage 0 and facility
    rows from stage 1; the exact per-stage rows ride along as ground truth.
    """
    if beta != values.beta or beta != sa.beta:
        raise ValueError("beta disagrees with the tables it came from")
    m = sa.tables.shape[0] - 1
    dest = m + 1
    stage_p = np.zeros_like(sa.tables)
    for k in range(m + 1):
        for rows, cols in _stage_blocks(m, k):
            _, p = softmin_rows(sa.tables[k][np.ix_(rows, cols)], beta)
            stage_p[k][np.ix_(rows, cols)] = p
    stage_p[:, dest, dest] = 1.0  # indicator row even at the padded stage 0
    flat = np.zeros((m + 2, m + 2))
    flat[0] = stage_p[0, 0]
    flat[1 : m + 1] = stage_p[min(1, m), 1 : m + 1]
    flat[dest, dest] = 1.0
    return PolicyMatrix(matrix=flat, stage_matrices=stage_p)


def agent_policy(inst: Instance, Y: np.ndarray, beta: float, agent: int) -> PolicyMatrix:
    values, sa = backward_values(inst, Y, beta, agent)
    return gibbs_policy(values, sa, beta)


def free_energy(inst: Instance, Y: np.ndarray, beta: float) -> float:
    """Weighted sum of stage-0 start values over agents."""
    starts = agent_map(
        lambda i: backward_values(inst, Y, beta, i)[0].start_value, inst.n_agents
    )
    return float(sum(inst.weights[i] * starts[i] for i in range(inst.n_agents)))


def _agent_gradient_tables(
    inst: Instance, Y: np.ndarray, beta: float, agent: int
) -> tuple[float, np.ndarray]:
    """Start value and G[k][node] = dV[k][node]/dY, all stages and nodes."""
    values, sa = backward_values(inst, Y, beta, agent)
    policy = gibbs_policy(values, sa, beta)
    stage_p = policy.stage_matrices
    pos = inst.node_positions(Y, agent)
    m = inst.facility_count
    d = inst.dim
    n_nodes = m + 2
    grads = np.zeros((n_nodes, n_nodes, m, d))
    facility_rows = np.arange(1, m + 1)
    g_next = np.zeros((n_nodes, m, d))
    for k in range(m, -1, -1):
        p = stage_p[k]
        g_cur = np.tensordot(p, g_next, axes=1)
        # leg-cost gradient, current-node side: rows that are facilities
        valid = p.sum(axis=1) > 0.5
        fac_valid = facility_rows[valid[facility_rows]]
        expected_next = p[fac_valid] @ pos
        g_cur[fac_valid, fac_valid - 1] += 2.0 * (pos[fac_valid] - expected_next)
        # leg-cost gradient, successor side: facility columns
        g_cur += 2.0 * p[:, 1 : m + 1, None] * (Y[None, :, :] - pos[:, None, :])
        grads[k] = g_cur
        g_next = g_cur
    return values.start_value, grads


def gradient_table(inst: Instance, Y: np.ndarray, beta: float, agent: int) -> np.ndarray:
    """Full per-stage gradient table for one agent, (M+2, M+2, M, d)."""
    Y = check_facilities(inst, Y)
    return _agent_gradient_tables(inst, Y, beta, agent)[1]


def free_energy_and_gradient(
    inst: Instance, Y: np.ndarray, beta: float
) -> tuple[float, np.ndarray]:
    """Free energy and its gradient from a single backward pass per agent.

    Gibbs weights are treated as fixed (they are the interior optimizer, so
    the omitted term vanishes); leg-cost gradients are analytic.
    """
    Y = check_facilities(inst, Y)
    per_agent = agent_map(
        lambda i: _agent_gradient_tables(inst, Y, beta, i), inst.n_agents
    )
    value = 0.0
    grad = np.zeros_like(Y)
    for i in range(inst.n_agents):
        v, g = per_agent[i]
        value += inst.weights[i] * v
        grad += inst.weights[i] * g[0, 0]
    return float(value), grad


def free_energy_gradient(inst: Instance, Y: np.ndarray, beta: float) -> np.ndarray:
    """d free_energy / dY via backward accumulation, (M, d)."""
    return free_energy_and_gradient(inst, Y, beta)[1]


def greedy_rollout(policy: PolicyMatrix, inst: Instance, agent: int) -> Path:
    """Follow argmax transitions from the start until absorption.

    Ties prefer the destination, then the lowest facility index. The final
    stage is structurally forced to the destination.
    """
    m = inst.facility_count
    dest = m + 1
    nodes = [0]
    node = 0
    for k in range(m + 1):
        if node == dest or k == m:
            node = dest
        else:
            row = policy.row(k, node)
            best = row.max()
            if row[dest] >= best:
                node = dest
            else:
                node = int(np.flatnonzero(row >= best)[0])
        nodes.append(node)
    return Path(nodes=tuple(nodes), agent=agent)
