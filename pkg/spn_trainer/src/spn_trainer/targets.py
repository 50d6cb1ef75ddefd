"""Exact route quantities used for supervision and evaluation.

Torch reimplementation of the solver's backward recursions over the stage
graph, vectorized over a batch of agents: soft (log-sum-exp) values give
the stagewise Gibbs target rows for the supervised phase; hard (min-plus)
values give exact shortest-route costs for optimality-gap evaluation.
Cross-validated against solver golden exports in the tests.
"""

from __future__ import annotations

import torch

from .data import ProblemSet


def leg_costs(problems: ProblemSet) -> torch.Tensor:
    """(B, M+2, M+2) squared-Euclidean costs between node pairs, float64."""
    pos = problems.node_coords().double()
    diff = pos[:, :, None, :] - pos[:, None, :, :]
    return (diff * diff).sum(-1)


def soft_values(problems: ProblemSet, beta: float) -> torch.Tensor:
    """Stagewise free-energy values V[k][node], (B, M+2, M+2), float64.

    Invalid (stage, node) entries hold +inf; the destination column is 0.
    """
    cost = leg_costs(problems)
    b, n_nodes, _ = cost.shape
    m = n_nodes - 2
    dest = m + 1
    values = torch.full((b, m + 2, m + 2), torch.inf, dtype=torch.float64)
    values[:, :, dest] = 0.0
    # stage M: forced hop to the destination
    values[:, m, 1 : dest + 1] = cost[:, 1 : dest + 1, dest]
    values[:, m, dest] = 0.0
    for k in range(m - 1, 0, -1):
        lam = cost[:, 1 : dest + 1, 1:] + values[:, k + 1, None, 1:]
        values[:, k, 1 : dest + 1] = -torch.logsumexp(-beta * lam, dim=2) / beta
        values[:, k, dest] = 0.0
    lam0 = cost[:, 0, 1:] + values[:, 1, 1:]
    values[:, 0, 0] = -torch.logsumexp(-beta * lam0, dim=1) / beta
    return values


def gibbs_log_rows(
    problems: ProblemSet,
    beta: float,
    positions: torch.Tensor,
    stage: int,
    values: torch.Tensor | None = None,
    exclude: torch.Tensor | None = None,
) -> torch.Tensor:
    """Exact stagewise Gibbs next-node log-distribution for arbitrary
    positions.

    positions: (B, d) current coordinates (need not coincide with a node);
    returns (B, M+2) log-rows over successor tokens with -inf on the
    start. `stage` indexes the transition (0-based); rows at the final
    stage are the destination indicator. Pass precomputed soft_values to
    amortize the backward pass across decision steps. `exclude` (B,)
    facility indices are masked before normalization (conditioning on "no
    zero-cost self-transition", the canonical-policy convention).
    """
    if values is None:
        values = soft_values(problems, beta)
    pos = problems.node_coords().double()
    m = problems.m
    dest = m + 1
    b = positions.shape[0]
    rows = torch.full((b, m + 2), -torch.inf, dtype=torch.float64)
    if stage >= m:
        rows[:, dest] = 0.0
        return rows
    diff = positions.double()[:, None, :] - pos[:, 1:, :]
    step_cost = (diff * diff).sum(-1)
    scaled = -beta * (step_cost + values[:, stage + 1, 1:])
    if exclude is not None:
        facility = (exclude >= 1) & (exclude <= m)
        idx = torch.where(facility, exclude - 1, torch.zeros_like(exclude))
        mask = torch.zeros_like(scaled, dtype=torch.bool)
        mask[torch.arange(b), idx] = facility
        scaled = scaled.masked_fill(mask, -torch.inf)
    rows[:, 1:] = scaled - torch.logsumexp(scaled, dim=1, keepdim=True)
    return rows


def gibbs_rows(
    problems: ProblemSet,
    beta: float,
    positions: torch.Tensor,
    stage: int,
    values: torch.Tensor | None = None,
) -> torch.Tensor:
    """Probability-space counterpart of gibbs_log_rows."""
    return gibbs_log_rows(problems, beta, positions, stage, values).exp()


def hard_values(problems: ProblemSet) -> torch.Tensor:
    """Min-plus analogue of soft_values: exact cost-to-go per stage/node."""
    cost = leg_costs(problems)
    b, n_nodes, _ = cost.shape
    m = n_nodes - 2
    dest = m + 1
    values = torch.full((b, m + 2, m + 2), torch.inf, dtype=torch.float64)
    values[:, :, dest] = 0.0
    values[:, m, 1 : dest + 1] = cost[:, 1 : dest + 1, dest]
    values[:, m, dest] = 0.0
    for k in range(m - 1, 0, -1):
        lam = cost[:, 1 : dest + 1, 1:] + values[:, k + 1, None, 1:]
        values[:, k, 1 : dest + 1] = lam.min(dim=2).values
        values[:, k, dest] = 0.0
    lam0 = cost[:, 0, 1:] + values[:, 1, 1:]
    values[:, 0, 0] = lam0.min(dim=1).values
    return values


def shortest_costs(problems: ProblemSet) -> torch.Tensor:
    """(B,) exact shortest-trajectory cost per agent."""
    return hard_values(problems)[:, 0, 0]


def route_costs(problems: ProblemSet, paths: torch.Tensor) -> torch.Tensor:
    """(B,) cost of explicit node trajectories, paths: (B, M+2) int64."""
    pos = problems.node_coords().double()
    coords = torch.gather(
        pos, 1, paths.unsqueeze(-1).expand(-1, -1, pos.shape[-1])
    )
    legs = coords[:, 1:, :] - coords[:, :-1, :]
    return (legs * legs).sum(-1).sum(-1)
