"""Answer solver policy requests with matrix-mode policy files.

For every agent, each node's transition row is the decoder distribution
with the current position set to that node's coordinates; the destination
row is its indicator. The start column is structurally zero (masked in
the decoder), so the emitted matrices satisfy the bridge validation rules
by construction.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch

from .data import ProblemSet, load_request, write_policy_file
from .model import SPN


def policy_matrices(model: SPN, problems: ProblemSet) -> list[np.ndarray]:
    m = problems.m
    dest = m + 1
    tokens = problems.tokens()
    b = problems.n_agents
    with torch.no_grad():
        encoded = model.encode(tokens)
        matrices = [np.zeros((m + 2, m + 2)) for _ in range(b)]
        for node in range(m + 1):  # start and facility rows; dest is forced
            positions = tokens[:, node, :]
            current = torch.full((b,), node, dtype=torch.int64)
            rows = model.decode_step(encoded, positions, problems.dests, current=current)
            rows_np = rows.double().numpy()
            # exact renormalization guards against float32 drift in the sum
            rows_np = rows_np / rows_np.sum(axis=1, keepdims=True)
            for agent in range(b):
                matrices[agent][node] = rows_np[agent]
        for agent in range(b):
            matrices[agent][dest, dest] = 1.0
    return matrices


def export_policy(model: SPN, request_path: str | Path, out_path: str | Path) -> None:
    """Load a request, compute per-agent matrices, validate, and write."""
    problems, request_doc = load_request(request_path)
    write_policy_file(out_path, request_doc, policy_matrices(model, problems))
