"""File protocol for exchanging policies with external processes.

A request file carries the instance, the facility layout, and content
hashes; a policy file answers it with per-agent transition matrices (or
top-b path sets) tagged with the same hashes, so a stale or mismatched
policy is rejected at import. See docs/policy-bridge.md for the field-level
schema and hashing rules.
"""

from __future__ import annotations

import json
from pathlib import Path as FilePath

import numpy as np

from .dp import PolicyMatrix, agent_policy
from .instance import (
    Instance,
    Path,
    ParseError,
    check_facilities,
    instance_canonical_bytes,
    instance_from_dict,
    instance_to_dict,
)
from .sampling import PolicySource, beam_search

BRIDGE_FORMAT_VERSION = 1


class StalePolicyError(ValueError):
    """Policy file hashes do not match the instance/facilities presented."""


class PolicyValidationError(ValueError):
    """Policy file content violates the schema or stochasticity rules."""


def fnv1a64(data: bytes) -> str:
    """64-bit FNV-1a digest as 16 lowercase hex digits."""
    h = 0xCBF29CE484222325
    for byte in data:
        h ^= byte
        h = (h * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return f"{h:016x}"


def facilities_canonical_bytes(Y: np.ndarray) -> bytes:
    rows = [[float(v) for v in row] for row in np.asarray(Y, dtype=float)]
    return json.dumps(rows, separators=(",", ":")).encode()


def instance_hash(inst: Instance) -> str:
    return fnv1a64(instance_canonical_bytes(inst))


def facilities_hash(Y: np.ndarray) -> str:
    return fnv1a64(facilities_canonical_bytes(Y))


def export_request(inst: Instance, Y: np.ndarray, path: str | FilePath) -> None:
    """Write a deterministic policy request for (instance, facilities)."""
    Y = check_facilities(inst, Y)
    doc = {
        "version": BRIDGE_FORMAT_VERSION,
        "kind": "policy-request",
        "instance": instance_to_dict(inst),
        "facilities": [[float(v) for v in row] for row in Y],
        "instance_hash": instance_hash(inst),
        "y_hash": facilities_hash(Y),
    }
    FilePath(path).write_text(json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n")


def load_request(path: str | FilePath) -> tuple[Instance, np.ndarray]:
    doc = _read_json(path)
    if doc.get("kind") != "policy-request":
        raise ParseError(f"{path}: not a policy-request file")
    inst = instance_from_dict(doc["instance"])
    Y = np.array(doc["facilities"], dtype=float)
    for name, expected, actual in (
        ("instance_hash", doc.get("instance_hash"), instance_hash(inst)),
        ("y_hash", doc.get("y_hash"), facilities_hash(Y)),
    ):
        if expected != actual:
            raise StalePolicyError(f"{path}: {name} {expected} != recomputed {actual}")
    return inst, Y


def write_policy_file(
    path: str | FilePath,
    inst: Instance,
    Y: np.ndarray,
    matrices: list[np.ndarray] | None = None,
    paths: list[list[tuple[list[int], float]]] | None = None,
) -> None:
    """Write a policy answer in matrix mode or paths mode."""
    Y = check_facilities(inst, Y)
    if (matrices is None) == (paths is None):
        raise ValueError("provide exactly one of matrices or paths")
    doc = {
        "version": BRIDGE_FORMAT_VERSION,
        "kind": "policy",
        "instance_hash": instance_hash(inst),
        "y_hash": facilities_hash(Y),
        "n_agents": inst.n_agents,
        "facility_count": inst.facility_count,
    }
    if matrices is not None:
        if len(matrices) != inst.n_agents:
            raise ValueError("one matrix per agent required")
        doc["mode"] = "matrix"
        doc["agents"] = [
            {"rows": [[float(v) for v in row] for row in np.asarray(mat, dtype=float)]}
            for mat in matrices
        ]
    else:
        if len(paths) != inst.n_agents:
            raise ValueError("one path set per agent required")
        doc["mode"] = "paths"
        doc["agents"] = [
            {
                "paths": [[int(v) for v in nodes] for nodes, _ in agent_paths],
                "log_probs": [float(lp) for _, lp in agent_paths],
            }
            for agent_paths in paths
        ]
    FilePath(path).write_text(json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n")


def export_exact_policy(
    inst: Instance, Y: np.ndarray, beta: float, path: str | FilePath
) -> None:
    """Golden-file helper: exports the flat exact-recursion policy matrices."""
    matrices = [
        agent_policy(inst, Y, beta, agent).matrix for agent in range(inst.n_agents)
    ]
    write_policy_file(path, inst, Y, matrices=matrices)


class ExternalSource(PolicySource):
    """Policy source backed by an imported bridge file.

    The stored policy was computed for the request's (instance, Y); during
    a descent it keeps acting as the proposal while path costs are always
    evaluated at the current Y.
    """

    name = "external"

    def __init__(
        self,
        matrices: list[np.ndarray] | None = None,
        replay_paths: list[np.ndarray] | None = None,
    ) -> None:
        if (matrices is None) == (replay_paths is None):
            raise ValueError("provide exactly one of matrices or replay_paths")
        self.matrices = matrices
        self.replay_paths = replay_paths

    @property
    def mode(self) -> str:
        return "matrix" if self.matrices is not None else "paths"

    def matrix(self, inst, Y, beta, agent):
        if self.matrices is None:
            raise PolicyValidationError(
                "paths-mode policy files cannot supply a transition matrix"
            )
        return PolicyMatrix(matrix=self.matrices[agent])

    def top_paths(self, inst, Y, beta, agent, count):
        if count <= 0:
            return np.empty((0, inst.facility_count + 2), dtype=np.intp)
        if self.replay_paths is not None:
            return self.replay_paths[agent][:count]
        return beam_search(self.matrix(inst, Y, beta, agent), inst, agent, count)


def _read_json(path: str | FilePath) -> dict:
    try:
        return json.loads(FilePath(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON at line {exc.lineno}") from exc


def _validate_matrix(mat: np.ndarray, m: int, agent: int) -> None:
    dest = m + 1
    if mat.shape != (m + 2, m + 2):
        raise PolicyValidationError(
            f"agent {agent}: matrix shape {mat.shape} != {(m + 2, m + 2)}"
        )
    if not np.all(np.isfinite(mat)) or np.any(mat < 0.0):
        raise PolicyValidationError(f"agent {agent}: probabilities must be finite and >= 0")
    sums = mat.sum(axis=1)
    for row in range(m + 1):
        if abs(sums[row] - 1.0) > 1e-6:
            raise PolicyValidationError(
                f"agent {agent}: row {row} sums to {sums[row]:.9f}, expected 1 within 1e-6"
            )
    if np.any(mat[:, 0] > 1e-12):
        raise PolicyValidationError(f"agent {agent}: start column must be all zeros")
    one_hot = np.zeros(m + 2)
    one_hot[dest] = 1.0
    if np.any(np.abs(mat[dest] - one_hot) > 1e-9):
        raise PolicyValidationError(f"agent {agent}: destination row must be its indicator")


def validate_policy_doc(doc: dict, n_agents: int, m: int) -> None:
    for field_name in ("version", "kind", "mode", "agents", "instance_hash", "y_hash"):
        if field_name not in doc:
            raise PolicyValidationError(f"missing field '{field_name}'")
    if doc["version"] != BRIDGE_FORMAT_VERSION:
        raise PolicyValidationError(f"unsupported version {doc['version']!r}")
    if doc["kind"] != "policy":
        raise PolicyValidationError("not a policy file")
    if doc.get("n_agents") != n_agents or doc.get("facility_count") != m:
        raise PolicyValidationError(
            f"size header ({doc.get('n_agents')}, {doc.get('facility_count')}) "
            f"does not match the instance ({n_agents}, {m})"
        )
    if len(doc["agents"]) != n_agents:
        raise PolicyValidationError("one agent entry per agent required")
    if doc["mode"] == "matrix":
        for agent, entry in enumerate(doc["agents"]):
            _validate_matrix(np.array(entry["rows"], dtype=float), m, agent)
    elif doc["mode"] == "paths":
        for agent, entry in enumerate(doc["agents"]):
            for nodes in entry["paths"]:
                Path(nodes=tuple(int(v) for v in nodes), agent=agent).validate()
            if len(entry.get("log_probs", [])) != len(entry["paths"]):
                raise PolicyValidationError(f"agent {agent}: one log_prob per path required")
    else:
        raise PolicyValidationError(f"unknown mode {doc['mode']!r}")


def import_policy(path: str | FilePath, inst: Instance, Y: np.ndarray) -> ExternalSource:
    """Load, hash-check, and validate a policy file against (instance, Y)."""
    Y = check_facilities(inst, Y)
    doc = _read_json(path)
    validate_policy_doc(doc, inst.n_agents, inst.facility_count)
    expected_inst, expected_y = instance_hash(inst), facilities_hash(Y)
    if doc["instance_hash"] != expected_inst:
        raise StalePolicyError(
            f"{path}: instance_hash {doc['instance_hash']} != expected {expected_inst}"
        )
    if doc["y_hash"] != expected_y:
        raise StalePolicyError(f"{path}: y_hash {doc['y_hash']} != expected {expected_y}")
    if doc["mode"] == "matrix":
        return ExternalSource(
            matrices=[np.array(entry["rows"], dtype=float) for entry in doc["agents"]]
        )
    replay = [
        np.array(entry["paths"], dtype=np.intp).reshape(-1, inst.facility_count + 2)
        for entry in doc["agents"]
    ]
    return ExternalSource(replay_paths=replay)
