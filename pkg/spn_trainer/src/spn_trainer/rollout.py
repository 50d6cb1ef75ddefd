"""Auto-regressive path generation: greedy, sampled, and beam decoding.

All modes emit structurally valid absorbing trajectories: the destination
is absorbing, and the final transition is forced to it by the stage graph
(contributing zero log-probability, consistently across modes). Gradients
flow through sampled log-probabilities whenever grad mode is on.
"""

from __future__ import annotations

import torch

from .data import ProblemSet
from .model import SPN


def _gather_coords(coords: torch.Tensor, nodes: torch.Tensor) -> torch.Tensor:
    return torch.gather(
        coords, 1, nodes.view(-1, 1, 1).expand(-1, 1, coords.shape[-1])
    ).squeeze(1)


def rollout(
    model: SPN,
    problems: ProblemSet,
    mode: str = "greedy",
    rng: torch.Generator | None = None,
    encoded: torch.Tensor | None = None,
) -> tuple[torch.Tensor, torch.Tensor]:
    """Decode one path per agent; returns (paths (B, M+2) int64, log-probs (B,)).

    mode: "greedy" takes argmax steps, "sample" draws from the policy.
    """
    if mode not in ("greedy", "sample"):
        raise ValueError("mode must be greedy or sample")
    tokens = problems.tokens()
    b = tokens.shape[0]
    m = problems.m
    dest = m + 1
    if encoded is None:
        encoded = model.encode(tokens)
    nodes = torch.zeros(b, dtype=torch.int64)
    paths = [nodes]
    logp = torch.zeros(b)
    for k in range(m + 1):
        if k == m:
            nxt = torch.full((b,), dest, dtype=torch.int64)
        else:
            positions = _gather_coords(tokens, nodes)
            probs = model.decode_step(encoded, positions, problems.dests, current=nodes)
            if mode == "greedy":
                nxt = probs.argmax(dim=-1)
            else:
                nxt = torch.multinomial(probs, 1, generator=rng).squeeze(1)
            alive = nodes != dest
            nxt = torch.where(alive, nxt, torch.full_like(nxt, dest))
            step_logp = torch.log(
                torch.gather(probs, 1, nxt.unsqueeze(1)).squeeze(1).clamp_min(1e-30)
            )
            logp = logp + torch.where(alive, step_logp, torch.zeros_like(step_logp))
        nodes = nxt
        paths.append(nodes)
    return torch.stack(paths, dim=1), logp


def beam_rollout(
    model: SPN,
    problems: ProblemSet,
    width: int,
    encoded: torch.Tensor | None = None,
) -> tuple[torch.Tensor, torch.Tensor]:
    """Batched beam search; returns (paths (B, W, M+2), log-probs (B, W)).

    Lane 0 is reserved for the greedy chain (each step the argmax
    continuation of the previous lane-0 prefix), so the best-of-beam cost
    can never exceed the greedy rollout's; the remaining lanes hold the
    highest cumulative-log-probability candidates. Lanes come back sorted
    by log-probability; slots that never held a live candidate repeat the
    best lane.
    """
    if width < 1:
        raise ValueError("width must be >= 1")
    tokens = problems.tokens()
    b = tokens.shape[0]
    m = problems.m
    dest = m + 1
    n_nodes = m + 2
    if encoded is None:
        encoded = model.encode(tokens)
    nodes = torch.zeros((b, width), dtype=torch.int64)
    logps = torch.full((b, width), -torch.inf)
    logps[:, 0] = 0.0
    paths = torch.zeros((b, width, n_nodes), dtype=torch.int64)
    dests_rep = problems.dests.repeat_interleave(width, dim=0)
    encoded_rep = encoded.repeat_interleave(width, dim=0)
    tokens_rep = tokens.repeat_interleave(width, dim=0)
    forced_row = torch.full((n_nodes,), -torch.inf)
    forced_row[dest] = 0.0
    batch_idx = torch.arange(b)
    for k in range(m + 1):
        if k == m:
            paths[:, :, k + 1] = dest
            continue
        positions = _gather_coords(tokens_rep, nodes.reshape(-1))
        probs = model.decode_step(
            encoded_rep, positions, dests_rep, current=nodes.reshape(-1)
        )
        step = torch.log(probs.clamp_min(1e-30)).view(b, width, n_nodes)
        absorbed = (nodes == dest).unsqueeze(-1)
        step = torch.where(absorbed, forced_row, step)
        greedy_child = step[:, 0, :].argmax(dim=1)
        greedy_logp = logps[:, 0] + step[batch_idx, 0, greedy_child]
        scores = (logps.unsqueeze(-1) + step).view(b, width * n_nodes)
        if width > 1:
            top_scores, flat = scores.topk(width - 1, dim=1)
            parent = torch.cat([torch.zeros((b, 1), dtype=torch.int64), flat // n_nodes], dim=1)
            child = torch.cat([greedy_child.unsqueeze(1), flat % n_nodes], dim=1)
            new_logps = torch.cat([greedy_logp.unsqueeze(1), top_scores], dim=1)
        else:
            parent = torch.zeros((b, 1), dtype=torch.int64)
            child = greedy_child.unsqueeze(1)
            new_logps = greedy_logp.unsqueeze(1)
        paths = torch.gather(paths, 1, parent.unsqueeze(-1).expand(-1, -1, n_nodes))
        paths[:, :, k + 1] = child
        nodes = child
        logps = new_logps
    order = logps.argsort(dim=1, descending=True, stable=True)
    logps = torch.gather(logps, 1, order)
    paths = torch.gather(paths, 1, order.unsqueeze(-1).expand(-1, -1, n_nodes))
    dead = torch.isinf(logps)
    if dead.any():
        paths = torch.where(dead.unsqueeze(-1), paths[:, :1].expand_as(paths), paths)
        logps = torch.where(dead, logps[:, :1].expand_as(logps), logps)
    return paths, logps
