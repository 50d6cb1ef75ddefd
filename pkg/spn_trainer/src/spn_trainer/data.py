"""Problem conventions, instance sampling, and solver bridge file IO.

The trainer talks to the solver purely through files: instance documents,
policy requests, and policy answers. The schemas and the FNV-1a hashing
rules are reimplemented here from the bridge format documentation and are
cross-validated against solver-produced golden files in the tests.

Node indexing matches the solver: 0 = start, 1..M = facilities,
M+1 = destination; the destination is absorbing.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

BRIDGE_FORMAT_VERSION = 1
INSTANCE_FORMAT_VERSION = 1


def fnv1a64(data: bytes) -> str:
    h = 0xCBF29CE484222325
    for byte in data:
        h ^= byte
        h = (h * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return f"{h:016x}"


def _compact(doc) -> bytes:
    return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()


@dataclass(frozen=True)
class ProblemSet:
    """One facility layout shared by a batch of agents.

    starts, dests: (B, d); facilities: (M, d). Every agent sees the same
    facility layout, mirroring the solver's instance structure.
    """

    starts: torch.Tensor
    dests: torch.Tensor
    facilities: torch.Tensor

    @property
    def n_agents(self) -> int:
        return self.starts.shape[0]

    @property
    def m(self) -> int:
        return self.facilities.shape[0]

    def tokens(self) -> torch.Tensor:
        """(B, M+2, d) encoder input ordered (start, facilities, destination)."""
        b = self.n_agents
        fac = self.facilities.unsqueeze(0).expand(b, -1, -1)
        return torch.cat(
            [self.starts.unsqueeze(1), fac, self.dests.unsqueeze(1)], dim=1
        )

    def node_coords(self) -> torch.Tensor:
        """Alias of tokens(): per-agent coordinates of every node."""
        return self.tokens()


def sample_problems(
    n_agents: int, m: int, rng: np.random.Generator, dim: int = 2
) -> ProblemSet:
    """Uniform unit-box layout and agent endpoints."""
    return ProblemSet(
        starts=torch.from_numpy(rng.uniform(0, 1, (n_agents, dim))).float(),
        dests=torch.from_numpy(rng.uniform(0, 1, (n_agents, dim))).float(),
        facilities=torch.from_numpy(rng.uniform(0, 1, (m, dim))).float(),
    )


def instance_doc(problems: ProblemSet, bounds=(0.0, 1.0)) -> dict:
    lo, hi = bounds
    dim = problems.starts.shape[1]
    weight = 1.0 / problems.n_agents
    return {
        "version": INSTANCE_FORMAT_VERSION,
        "dim": dim,
        "bounds": {"lo": [lo] * dim, "hi": [hi] * dim},
        "facility_count": problems.m,
        "agents": [
            {
                "start": [float(v) for v in problems.starts[i]],
                "destination": [float(v) for v in problems.dests[i]],
                "weight": weight,
            }
            for i in range(problems.n_agents)
        ],
    }


def load_request(path: str | Path) -> tuple[ProblemSet, dict]:
    """Parse a solver policy request; returns the problems and the raw doc.

    Refuses requests whose recorded hashes do not match their own content
    (a corrupt or hand-edited request must not be answered).
    """
    doc = json.loads(Path(path).read_text())
    if doc.get("kind") != "policy-request":
        raise ValueError(f"{path}: not a policy-request file")
    inst = doc["instance"]
    recomputed = fnv1a64(_compact(inst))
    if doc["instance_hash"] != recomputed:
        raise ValueError(
            f"{path}: instance_hash {doc['instance_hash']} != recomputed {recomputed}"
        )
    y_rows = doc["facilities"]
    y_recomputed = fnv1a64(_compact(y_rows))
    if doc["y_hash"] != y_recomputed:
        raise ValueError(f"{path}: y_hash {doc['y_hash']} != recomputed {y_recomputed}")
    starts = torch.tensor([a["start"] for a in inst["agents"]], dtype=torch.float64)
    dests = torch.tensor([a["destination"] for a in inst["agents"]], dtype=torch.float64)
    facilities = torch.tensor(y_rows, dtype=torch.float64)
    problems = ProblemSet(
        starts=starts.float(), dests=dests.float(), facilities=facilities.float()
    )
    return problems, doc


def write_policy_file(
    path: str | Path, request_doc: dict, matrices: list[np.ndarray]
) -> None:
    """Matrix-mode policy answer; hashes are copied from the request after
    re-verifying them against the request content."""
    inst = request_doc["instance"]
    if fnv1a64(_compact(inst)) != request_doc["instance_hash"]:
        raise ValueError("request instance_hash does not match its content; refusing")
    if fnv1a64(_compact(request_doc["facilities"])) != request_doc["y_hash"]:
        raise ValueError("request y_hash does not match its content; refusing")
    n_agents = len(inst["agents"])
    m = inst["facility_count"]
    if len(matrices) != n_agents:
        raise ValueError("one matrix per agent required")
    for agent, mat in enumerate(matrices):
        _validate_matrix(np.asarray(mat, dtype=float), m, agent)
    doc = {
        "version": BRIDGE_FORMAT_VERSION,
        "kind": "policy",
        "instance_hash": request_doc["instance_hash"],
        "y_hash": request_doc["y_hash"],
        "n_agents": n_agents,
        "facility_count": m,
        "mode": "matrix",
        "agents": [
            {"rows": [[float(v) for v in row] for row in np.asarray(mat, dtype=float)]}
            for mat in matrices
        ],
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n")


def _validate_matrix(mat: np.ndarray, m: int, agent: int) -> None:
    dest = m + 1
    if mat.shape != (m + 2, m + 2):
        raise ValueError(f"agent {agent}: matrix shape {mat.shape} != {(m + 2, m + 2)}")
    sums = mat.sum(axis=1)
    if np.any(np.abs(sums[: m + 1] - 1.0) > 1e-6):
        bad = int(np.argmax(np.abs(sums[: m + 1] - 1.0)))
        raise ValueError(f"agent {agent}: row {bad} sums to {sums[bad]}")
    if np.any(mat[:, 0] > 1e-12):
        raise ValueError(f"agent {agent}: start column must be zeros")
    one_hot = np.zeros(m + 2)
    one_hot[dest] = 1.0
    if np.any(np.abs(mat[dest] - one_hot) > 1e-9):
        raise ValueError(f"agent {agent}: destination row must be its indicator")
