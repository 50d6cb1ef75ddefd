"""Problem data model: agents, facilities, paths, costs, and instance files.

Node indexing convention used throughout the package: node 0 is the agent's
start, nodes 1..M are the facilities, node M+1 is the agent's destination.
An agent's route is a sequence of M+2 nodes through the stage graph
(stage 0 = start, stages 1..M = facility layers that also contain the
destination, stage M+1 = destination). The destination is absorbing: once
entered, every later entry repeats it at zero cost.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path as FilePath

import numpy as np

INSTANCE_FORMAT_VERSION = 1

_INSTANCE_FIELDS = {"version", "dim", "bounds", "facility_count", "agents"}
_AGENT_FIELDS = {"start", "destination", "weight"}
_BOUNDS_FIELDS = {"lo", "hi"}


class InstanceError(ValueError):
    """Raised when instance data violates the model invariants."""


class ParseError(ValueError):
    """Raised when an instance file is malformed; message names the field."""


class PathError(ValueError):
    """Raised when a node trajectory violates the stage-graph structure."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Instance:
    """Immutable problem statement: N agents routed through M facilities.

    starts, destinations: (N, d) arrays; weights: (N,) nonnegative with
    positive sum; bounds_lo/bounds_hi: (d,) box corners.
    """

    starts: np.ndarray
    destinations: np.ndarray
    weights: np.ndarray
    facility_count: int
    bounds_lo: np.ndarray
    bounds_hi: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "starts", _readonly(np.atleast_2d(self.starts)))
        object.__setattr__(self, "destinations", _readonly(np.atleast_2d(self.destinations)))
        object.__setattr__(self, "weights", _readonly(np.atleast_1d(self.weights)))
        object.__setattr__(self, "bounds_lo", _readonly(np.atleast_1d(self.bounds_lo)))
        object.__setattr__(self, "bounds_hi", _readonly(np.atleast_1d(self.bounds_hi)))
        n, d = self.starts.shape
        if n < 1:
            raise InstanceError("need at least one agent")
        if self.facility_count < 1:
            raise InstanceError("facility_count must be >= 1")
        if self.destinations.shape != (n, d):
            raise InstanceError(
                f"starts {self.starts.shape} and destinations {self.destinations.shape} disagree"
            )
        if self.weights.shape != (n,):
            raise InstanceError(f"weights must have length {n}, got {self.weights.shape}")
        if np.any(self.weights < 0.0) or not np.sum(self.weights) > 0.0:
            raise InstanceError("weights must be nonnegative with positive sum")
        if self.bounds_lo.shape != (d,) or self.bounds_hi.shape != (d,):
            raise InstanceError("bounds must match the coordinate dimension")
        if np.any(self.bounds_lo >= self.bounds_hi):
            raise InstanceError("bounds_lo must be strictly below bounds_hi")
        for name, arr in (("starts", self.starts), ("destinations", self.destinations)):
            if not np.all(np.isfinite(arr)):
                raise InstanceError(f"{name} contain non-finite coordinates")
            if np.any(arr < self.bounds_lo) or np.any(arr > self.bounds_hi):
                raise InstanceError(f"{name} fall outside the domain bounds")

    @property
    def n_agents(self) -> int:
        return self.starts.shape[0]

    @property
    def dim(self) -> int:
        return self.starts.shape[1]

    @property
    def n_nodes(self) -> int:
        """Node count M+2 (start, M facilities, destination)."""
        return self.facility_count + 2

    @property
    def destination_node(self) -> int:
        return self.facility_count + 1

    def node_positions(self, Y: np.ndarray, agent: int) -> np.ndarray:
        """(M+2, d) coordinates of all nodes for one agent at facilities Y."""
        Y = check_facilities(self, Y)
        return np.vstack([self.starts[agent], Y, self.destinations[agent]])


def check_facilities(inst: Instance, Y: np.ndarray) -> np.ndarray:
    """Validate a facility-location matrix against the instance; returns (M, d)."""
    Y = np.asarray(Y, dtype=float)
    expected = (inst.facility_count, inst.dim)
    if Y.shape != expected:
        raise InstanceError(f"facility matrix must have shape {expected}, got {Y.shape}")
    if not np.all(np.isfinite(Y)):
        raise InstanceError("facility matrix has non-finite entries")
    return Y


@dataclass(frozen=True)
class Path:
    """Absorbing node trajectory of length M+2 for one agent."""

    nodes: tuple[int, ...]
    agent: int = 0

    @property
    def facility_count(self) -> int:
        return len(self.nodes) - 2

    def validate(self) -> None:
        m = self.facility_count
        dest = m + 1
        if m < 1:
            raise PathError("path must span at least one facility stage")
        if self.nodes[0] != 0:
            raise PathError(f"stage 0 must be the start node, got {self.nodes[0]}")
        if self.nodes[-1] != dest:
            raise PathError(f"stage {m + 1} must be the destination, got {self.nodes[-1]}")
        absorbed = False
        for k, node in enumerate(self.nodes[1:-1], start=1):
            if not 1 <= node <= dest:
                raise PathError(f"node {node} invalid at stage {k}")
            if absorbed and node != dest:
                raise PathError(f"left the destination at stage {k}")
            absorbed = absorbed or node == dest


@dataclass(frozen=True)
class CanonicalPath:
    """Facility visit sequence with consecutive repeats collapsed.

    The destination is implicit at the end; an empty sequence is the
    direct start-to-destination route.
    """

    facilities: tuple[int, ...]
    agent: int = 0

    def expand(self, facility_count: int) -> Path:
        """Re-expand to a full-length Path (waits appended at the destination)."""
        m = facility_count
        if len(self.facilities) > m:
            raise PathError("facility sequence longer than the stage horizon")
        dest = m + 1
        body = list(self.facilities) + [dest] * (m - len(self.facilities))
        return Path(nodes=(0, *body, dest), agent=self.agent)


def canonicalize(path: Path) -> CanonicalPath:
    """Collapse consecutive repeats and trailing destination entries."""
    path.validate()
    dest = path.facility_count + 1
    seq: list[int] = []
    for node in path.nodes[1:-1]:
        if node == dest:
            break
        if not seq or seq[-1] != node:
            seq.append(node)
    return CanonicalPath(facilities=tuple(seq), agent=path.agent)


def pair_cost(a: np.ndarray, b: np.ndarray) -> float:
    """Squared Euclidean distance between two points."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise InstanceError(f"point dimensions disagree: {a.shape} vs {b.shape}")
    diff = a - b
    return float(np.dot(diff, diff))


def path_cost(inst: Instance, Y: np.ndarray, path: Path) -> float:
    """Sum of squared-Euclidean leg costs along a path, left to right."""
    path.validate()
    if path.facility_count != inst.facility_count:
        raise PathError(
            f"path spans {path.facility_count} facility stages, instance has {inst.facility_count}"
        )
    pos = inst.node_positions(Y, path.agent)
    total = 0.0
    for a, b in zip(path.nodes[:-1], path.nodes[1:]):
        diff = pos[a] - pos[b]
        total += float(np.dot(diff, diff))
    return total


def paths_cost_array(inst: Instance, Y: np.ndarray, nodes: np.ndarray, agent: int) -> np.ndarray:
    """Vectorized path costs for an (P, M+2) array of node trajectories."""
    pos = inst.node_positions(Y, agent)
    coords = pos[nodes]
    legs = coords[:, 1:, :] - coords[:, :-1, :]
    return np.einsum("pkd,pkd->pk", legs, legs).sum(axis=1)


def weighted_cost_gradient(
    inst: Instance, Y: np.ndarray, nodes: np.ndarray, agent: int, weights: np.ndarray
) -> np.ndarray:
    """sum_p weights[p] * d(cost of trajectory p)/dY, accumulated leg by leg."""
    pos = inst.node_positions(Y, agent)
    m = inst.facility_count
    grad = np.zeros((m, inst.dim))
    coords = pos[nodes]
    for k in range(nodes.shape[1] - 1):
        a_idx = nodes[:, k]
        b_idx = nodes[:, k + 1]
        delta = coords[:, k, :] - coords[:, k + 1, :]
        contrib = 2.0 * weights[:, None] * delta
        a_fac = (a_idx >= 1) & (a_idx <= m)
        b_fac = (b_idx >= 1) & (b_idx <= m)
        np.add.at(grad, a_idx[a_fac] - 1, contrib[a_fac])
        np.add.at(grad, b_idx[b_fac] - 1, -contrib[b_fac])
    return grad


def generate_instance(
    n_agents: int,
    n_facilities: int,
    dim: int = 2,
    bounds: tuple[float, float] = (0.0, 1.0),
    seed: int = 0,
) -> Instance:
    """Uniform random instance in an axis-aligned box; pure in all arguments.

    Starts and destinations are independent uniform draws; weights are the
    uniform 1/N profile.
    """
    if n_agents < 1 or n_facilities < 1:
        raise InstanceError("n_agents and n_facilities must be >= 1")
    if dim < 1:
        raise InstanceError("dim must be >= 1")
    lo, hi = float(bounds[0]), float(bounds[1])
    if not lo < hi:
        raise InstanceError("bounds must satisfy lo < hi")
    rng = np.random.default_rng(np.random.SeedSequence((int(seed), n_agents, n_facilities, dim)))
    starts = rng.uniform(lo, hi, size=(n_agents, dim))
    dests = rng.uniform(lo, hi, size=(n_agents, dim))
    weights = np.full(n_agents, 1.0 / n_agents)
    return Instance(
        starts=starts,
        destinations=dests,
        weights=weights,
        facility_count=n_facilities,
        bounds_lo=np.full(dim, lo),
        bounds_hi=np.full(dim, hi),
    )


def _float_list(a: np.ndarray) -> list[float]:
    return [float(x) for x in a]


def instance_to_dict(inst: Instance) -> dict:
    return {
        "version": INSTANCE_FORMAT_VERSION,
        "dim": inst.dim,
        "bounds": {"lo": _float_list(inst.bounds_lo), "hi": _float_list(inst.bounds_hi)},
        "facility_count": inst.facility_count,
        "agents": [
            {
                "start": _float_list(inst.starts[i]),
                "destination": _float_list(inst.destinations[i]),
                "weight": float(inst.weights[i]),
            }
            for i in range(inst.n_agents)
        ],
    }


def instance_canonical_bytes(inst: Instance) -> bytes:
    """Canonical serialized form; also the hashing preimage for bridge files.

    json.dumps writes floats via repr, which preserves all 64-bit values
    exactly (17 significant digits when needed).
    """
    return json.dumps(instance_to_dict(inst), sort_keys=True, separators=(",", ":")).encode()


def save_instance(inst: Instance, path: str | FilePath) -> None:
    FilePath(path).write_text(json.dumps(instance_to_dict(inst), indent=2) + "\n")


def _require(data: dict, field_name: str, context: str) -> object:
    if field_name not in data:
        raise ParseError(f"{context}: missing required field '{field_name}'")
    return data[field_name]


def _reject_unknown(data: dict, allowed: set, context: str) -> None:
    unknown = set(data) - allowed
    if unknown:
        raise ParseError(f"{context}: unknown field(s) {sorted(unknown)}")


def instance_from_dict(data: dict) -> Instance:
    if not isinstance(data, dict):
        raise ParseError("instance document must be an object")
    _reject_unknown(data, _INSTANCE_FIELDS, "instance")
    version = _require(data, "version", "instance")
    if version != INSTANCE_FORMAT_VERSION:
        raise ParseError(f"instance: unsupported version {version!r}")
    dim = _require(data, "dim", "instance")
    bounds = _require(data, "bounds", "instance")
    if not isinstance(bounds, dict):
        raise ParseError("instance.bounds: must be an object with 'lo' and 'hi'")
    _reject_unknown(bounds, _BOUNDS_FIELDS, "instance.bounds")
    lo = _require(bounds, "lo", "instance.bounds")
    hi = _require(bounds, "hi", "instance.bounds")
    facility_count = _require(data, "facility_count", "instance")
    agents = _require(data, "agents", "instance")
    if not isinstance(agents, list) or not agents:
        raise ParseError("instance.agents: must be a non-empty array")
    starts, dests, weights = [], [], []
    for idx, agent in enumerate(agents):
        ctx = f"instance.agents[{idx}]"
        if not isinstance(agent, dict):
            raise ParseError(f"{ctx}: must be an object")
        _reject_unknown(agent, _AGENT_FIELDS, ctx)
        start = _require(agent, "start", ctx)
        dest = _require(agent, "destination", ctx)
        if len(start) != dim or len(dest) != dim:
            raise ParseError(f"{ctx}: coordinates must have length dim={dim}")
        starts.append(start)
        dests.append(dest)
        weights.append(_require(agent, "weight", ctx))
    try:
        return Instance(
            starts=np.array(starts, dtype=float),
            destinations=np.array(dests, dtype=float),
            weights=np.array(weights, dtype=float),
            facility_count=int(facility_count),
            bounds_lo=np.array(lo, dtype=float),
            bounds_hi=np.array(hi, dtype=float),
        )
    except InstanceError as exc:
        raise ParseError(f"instance: {exc}") from exc


def load_instance(path: str | FilePath) -> Instance:
    text = FilePath(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}") from exc
    return instance_from_dict(data)
