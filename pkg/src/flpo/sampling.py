"""Sampling-based free-energy gradient estimation.

The estimator mixes top-b paths obtained from a policy source (beam search)
with stagewise-uniform exploration paths, then reweights the sampled costs
by an empirical Gibbs distribution. Duplicates are kept and weighted
individually unless dedup is requested.

Paths travel through this module as (count, M+2) integer node arrays; use
flpo.instance.Path for the object form.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dp import PolicyMatrix, agent_policy
from .instance import Instance, check_facilities, paths_cost_array, weighted_cost_gradient
from .oracle import enumerate_trajectories
from .parallel import agent_map


class PolicyError(ValueError):
    """Raised when a policy matrix is not usable for sampling."""


@dataclass(frozen=True)
class AgentSamples:
    """One agent's sampled trajectories with costs and empirical weights."""

    nodes: np.ndarray
    costs: np.ndarray
    weights: np.ndarray
    n_policy: int


@dataclass(frozen=True)
class SampleSet:
    agents: list[AgentSamples]
    b: int
    L: int
    beta: float


class PolicySource:
    """Supplier of per-agent transition policies for the current (inst, Y)."""

    name = "abstract"

    def matrix(self, inst: Instance, Y: np.ndarray, beta: float, agent: int) -> PolicyMatrix:
        raise NotImplementedError

    def top_paths(
        self, inst: Instance, Y: np.ndarray, beta: float, agent: int, count: int
    ) -> np.ndarray:
        if count <= 0:
            return np.empty((0, inst.facility_count + 2), dtype=np.intp)
        return beam_search(self.matrix(inst, Y, beta, agent), inst, agent, count)


class ExactDPSource(PolicySource):
    """Policies from the exact backward recursion at the current (Y, beta)."""

    name = "exact-dp"

    def matrix(self, inst, Y, beta, agent):
        return agent_policy(inst, Y, beta, agent)


class UniformSource(PolicySource):
    """Stage-uniform policy; facility and start rows spread over {1..M+1}."""

    name = "uniform"

    def matrix(self, inst, Y, beta, agent):
        return PolicyMatrix(matrix=uniform_policy_matrix(inst.facility_count))


class EnumerationSource(PolicySource):
    """Test-only pseudo-source: 'top' paths are the full trajectory space in
    enumeration order, so b = L = |space| reduces the estimator to the exact
    Gibbs-weighted gradient."""

    name = "enumeration"

    def top_paths(self, inst, Y, beta, agent, count):
        nodes = enumerate_trajectories(inst.facility_count).nodes
        return nodes[:count]


def uniform_policy_matrix(n_facilities: int) -> np.ndarray:
    m = n_facilities
    dest = m + 1
    matrix = np.zeros((m + 2, m + 2))
    matrix[: m + 1, 1:] = 1.0 / (m + 1)
    matrix[dest] = 0.0
    matrix[dest, dest] = 1.0
    return matrix


def _validate_rows(policy: PolicyMatrix, n_facilities: int) -> None:
    matrix = policy.matrix
    sums = matrix[: n_facilities + 1].sum(axis=1)
    if np.any(np.abs(sums - 1.0) > 1e-6):
        bad = int(np.argmax(np.abs(sums - 1.0)))
        raise PolicyError(f"policy row {bad} sums to {sums[bad]:.9f}, expected 1")
    if np.any(matrix[:, 0] > 1e-12):
        raise PolicyError("policy assigns positive probability to the start column")


def sample_uniform_paths(
    inst: Instance, agent: int, count: int, rng: np.random.Generator
) -> np.ndarray:
    """Stagewise-uniform absorbing trajectories, (count, M+2)."""
    if count < 0:
        raise ValueError("count must be >= 0")
    m = inst.facility_count
    dest = m + 1
    nodes = np.empty((count, m + 2), dtype=np.intp)
    nodes[:, 0] = 0
    nodes[:, -1] = dest
    if count == 0:
        return nodes
    draws = rng.integers(1, dest + 1, size=(count, m))
    absorbed = np.maximum.accumulate(draws == dest, axis=1)
    shifted = np.column_stack([np.zeros(count, dtype=bool), absorbed[:, :-1]])
    nodes[:, 1:-1] = np.where(shifted, dest, draws)
    return nodes


def sample_policy_paths(
    policy: PolicyMatrix, inst: Instance, agent: int, count: int, rng: np.random.Generator
) -> np.ndarray:
    """Ancestral samples from the policy rows; the final stage is forced to
    the destination by the graph structure."""
    if count < 0:
        raise ValueError("count must be >= 0")
    m = inst.facility_count
    dest = m + 1
    _validate_rows(policy, m)
    nodes = np.empty((count, m + 2), dtype=np.intp)
    nodes[:, 0] = 0
    nodes[:, -1] = dest
    if count == 0:
        return nodes
    current = np.zeros(count, dtype=np.intp)
    for k in range(1, m + 1):
        if policy.stage_matrices is not None:
            rows = policy.stage_matrices[k - 1][current]
        else:
            rows = policy.matrix[current]
        cum = np.cumsum(rows, axis=1)
        u = rng.random(count)
        nxt = np.clip((u[:, None] > cum).sum(axis=1), 1, dest)
        nxt = np.where(current == dest, dest, nxt)
        nodes[:, k] = nxt
        current = nxt
    return nodes


def _canonical_key(nodes: tuple[int, ...], dest: int) -> tuple[int, ...]:
    seq: list[int] = []
    for v in nodes[1:]:
        if v == dest:
            break
        if not seq or seq[-1] != v:
            seq.append(v)
    return tuple(seq)


def beam_search(
    policy: PolicyMatrix, inst: Instance, agent: int, width: int
) -> np.ndarray:
    """Top paths by cumulative log-probability through the stage graph.

    Returns up to `width` node rows with distinct canonical forms, sorted by
    descending log-probability, ties by lexicographic canonical form. The
    per-stage pruning prefers the destination at probability ties, so a
    width-1 beam reproduces the greedy rollout.
    """
    if width < 1:
        raise ValueError("width must be >= 1")
    m = inst.facility_count
    dest = m + 1
    _validate_rows(policy, m)
    # candidates: (logp, prefix); prune key mirrors greedy tie-breaks
    beams: list[tuple[float, tuple[int, ...]]] = [(0.0, (0,))]
    for k in range(m + 1):
        expanded: list[tuple[float, tuple[int, ...]]] = []
        for logp, prefix in beams:
            node = prefix[-1]
            if node == dest or k == m:
                expanded.append((logp, prefix + (dest,)))
                continue
            row = policy.row(k, node)
            for nxt in range(1, dest + 1):
                p = row[nxt]
                if p > 0.0:
                    expanded.append((logp + float(np.log(p)), prefix + (nxt,)))
        expanded.sort(
            key=lambda c: (-c[0], tuple(0 if v == dest else v for v in c[1]))
        )
        beams = expanded[:width]
    best_by_canon: dict[tuple[int, ...], tuple[float, tuple[int, ...]]] = {}
    for logp, nodes in beams:
        key = _canonical_key(nodes, dest)
        if key not in best_by_canon or logp > best_by_canon[key][0]:
            best_by_canon[key] = (logp, nodes)
    ranked = sorted(best_by_canon.items(), key=lambda kv: (-kv[1][0], kv[0]))
    rows = [nodes for _, (_, nodes) in ranked[:width]]
    return np.array(rows, dtype=np.intp).reshape(len(rows), m + 2)


def empirical_gibbs_weights(costs: np.ndarray, beta: float) -> np.ndarray:
    """Softmax of -beta * costs with min-subtraction; sums to 1."""
    costs = np.asarray(costs, dtype=float)
    if costs.size == 0:
        raise ValueError("costs must be non-empty")
    if beta <= 0.0:
        raise ValueError("beta must be positive")
    w = np.exp(-beta * (costs - costs.min()))
    return w / w.sum()


def estimate_gradient(
    inst: Instance,
    Y: np.ndarray,
    beta: float,
    source: PolicySource,
    b: int,
    L: int,
    rng: np.random.Generator,
    dedup: bool = False,
) -> tuple[np.ndarray, SampleSet]:
    """Mixture-sampling gradient estimate, (M, d) plus the sample record.

    Per agent: up to b beam paths from the source, topped up to L with
    stagewise-uniform samples, reweighted by the empirical Gibbs
    distribution over the sampled costs. Self-normalized, hence biased for
    finite L; the complete-enumeration source recovers the exact gradient.
    """
    if not 0 <= b <= L:
        raise ValueError("need 0 <= b <= L")
    Y = check_facilities(inst, Y)
    rngs = rng.spawn(inst.n_agents)

    def one_agent(agent: int) -> tuple[AgentSamples, np.ndarray]:
        top = source.top_paths(inst, Y, beta, agent, b)
        uniform = sample_uniform_paths(inst, agent, L - top.shape[0], rngs[agent])
        nodes = np.vstack([top, uniform])
        if dedup:
            _, keep = np.unique(nodes, axis=0, return_index=True)
            nodes = nodes[np.sort(keep)]
        costs = paths_cost_array(inst, Y, nodes, agent)
        weights = empirical_gibbs_weights(costs, beta)
        grad_i = weighted_cost_gradient(inst, Y, nodes, agent, weights)
        return AgentSamples(nodes=nodes, costs=costs, weights=weights, n_policy=top.shape[0]), grad_i

    results = agent_map(one_agent, inst.n_agents)
    grad = np.zeros_like(Y)
    for i in range(inst.n_agents):
        grad += inst.weights[i] * results[i][1]
    samples = SampleSet(agents=[r[0] for r in results], b=b, L=L, beta=beta)
    return grad, samples
