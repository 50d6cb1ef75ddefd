from __future__ import annotations

import numpy as np
import pytest

from flpo.instance import (
    CanonicalPath,
    Instance,
    InstanceError,
    ParseError,
    Path,
    PathError,
    canonicalize,
    generate_instance,
    instance_to_dict,
    instance_from_dict,
    load_instance,
    pair_cost,
    path_cost,
    save_instance,
)


def test_pair_cost_hand_values():
    assert pair_cost(np.array([0.0, 0.0]), np.array([1.0, 1.0])) == pytest.approx(2.0)
    assert pair_cost(np.array([0.4, -1.2]), np.array([0.4, -1.2])) == 0.0
    assert pair_cost(np.array([0.3, 0.7]), np.array([0.3, 0.2])) == pytest.approx(0.25)


def test_pair_cost_dimension_mismatch():
    with pytest.raises(InstanceError):
        pair_cost(np.array([0.0, 0.0]), np.array([1.0, 1.0, 1.0]))


def _square_instance() -> Instance:
    return Instance(
        starts=np.array([[0.0, 0.0]]),
        destinations=np.array([[1.0, 0.0]]),
        weights=np.array([1.0]),
        facility_count=2,
        bounds_lo=np.array([-1.0, -1.0]),
        bounds_hi=np.array([2.0, 2.0]),
    )


def test_path_cost_direct_route():
    inst = _square_instance()
    Y = np.array([[0.5, 0.5], [0.25, 0.0]])
    direct = Path(nodes=(0, 3, 3, 3), agent=0)
    assert path_cost(inst, Y, direct) == pytest.approx(1.0)


def test_path_cost_single_stop():
    inst = _square_instance()
    Y = np.array([[0.5, 0.5], [0.25, 0.0]])
    via2 = Path(nodes=(0, 2, 3, 3), agent=0)
    expected = pair_cost(inst.starts[0], Y[1]) + pair_cost(Y[1], inst.destinations[0])
    assert path_cost(inst, Y, via2) == pytest.approx(expected)


def test_path_cost_consecutive_repeat_is_free():
    inst = _square_instance()
    Y = np.array([[0.5, 0.5], [0.25, 0.0]])
    wait = Path(nodes=(0, 2, 2, 3), agent=0)
    plain = Path(nodes=(0, 2, 3, 3), agent=0)
    assert path_cost(inst, Y, wait) == path_cost(inst, Y, plain)


def test_path_invariants_rejected():
    with pytest.raises(PathError):
        Path(nodes=(1, 2, 3, 3)).validate()  # wrong start
    with pytest.raises(PathError):
        Path(nodes=(0, 2, 3, 2)).validate()  # wrong terminal
    with pytest.raises(PathError):
        Path(nodes=(0, 3, 1, 3)).validate()  # leaves the destination
    with pytest.raises(PathError):
        Path(nodes=(0, 0, 3, 3)).validate()  # start revisited


def test_canonicalize_collapses_repeats():
    p = Path(nodes=(0, 3, 3, 5, 5, 5), agent=1)
    assert canonicalize(p) == CanonicalPath(facilities=(3,), agent=1)
    q = Path(nodes=(0, 3, 3, 2, 5, 5), agent=0)
    assert canonicalize(q).facilities == (3, 2)
    direct = Path(nodes=(0, 5, 5, 5, 5, 5))
    assert canonicalize(direct).facilities == ()


def test_canonicalize_expand_fixed_point():
    rng = np.random.default_rng(0)
    m = 4
    for _ in range(50):
        length = rng.integers(0, m + 1)
        seq = []
        while len(seq) < length:
            cand = int(rng.integers(1, m + 1))
            if not seq or seq[-1] != cand:
                seq.append(cand)
        canon = CanonicalPath(facilities=tuple(seq))
        again = canonicalize(canon.expand(m))
        assert again.facilities == canon.facilities


def test_cost_invariant_under_canonicalization():
    rng = np.random.default_rng(7)
    inst = generate_instance(3, 4, seed=5)
    Y = rng.uniform(0, 1, size=(4, 2))
    dest = 5
    for _ in range(100):
        nodes = [0]
        node = int(rng.integers(1, dest + 1))
        for _ in range(4):
            nodes.append(node)
            if node != dest:
                node = int(rng.integers(1, dest + 1))
        nodes.append(dest)
        # repair absorption
        absorbed = False
        for i in range(1, 6):
            if absorbed:
                nodes[i] = dest
            absorbed = absorbed or nodes[i] == dest
        p = Path(nodes=tuple(nodes), agent=int(rng.integers(0, 3)))
        expanded = canonicalize(p).expand(4)
        expanded = Path(nodes=expanded.nodes, agent=p.agent)
        assert path_cost(inst, Y, p) == pytest.approx(
            path_cost(inst, Y, expanded), rel=1e-12, abs=1e-15
        )


def test_generate_instance_shapes_and_bounds():
    inst = generate_instance(2, 4, dim=2, bounds=(0.0, 1.0), seed=7)
    assert inst.starts.shape == (2, 2)
    assert inst.destinations.shape == (2, 2)
    assert np.all(inst.starts >= 0.0) and np.all(inst.starts <= 1.0)
    assert np.allclose(inst.weights, 0.5)


def test_generate_instance_deterministic():
    a = generate_instance(5, 3, seed=11)
    b = generate_instance(5, 3, seed=11)
    assert np.array_equal(a.starts, b.starts)
    assert np.array_equal(a.destinations, b.destinations)
    assert np.array_equal(a.weights, b.weights)
    c = generate_instance(5, 3, seed=12)
    assert not np.array_equal(a.starts, c.starts)


def test_generate_instance_bad_args():
    with pytest.raises(InstanceError):
        generate_instance(0, 3)
    with pytest.raises(InstanceError):
        generate_instance(3, 0)


def test_instance_invariants():
    with pytest.raises(InstanceError):
        Instance(
            starts=np.zeros((2, 2)),
            destinations=np.zeros((3, 2)),
            weights=np.full(2, 0.5),
            facility_count=1,
            bounds_lo=np.zeros(2),
            bounds_hi=np.ones(2),
        )
    with pytest.raises(InstanceError):
        Instance(
            starts=np.zeros((2, 2)),
            destinations=np.zeros((2, 2)),
            weights=np.zeros(2),
            facility_count=1,
            bounds_lo=np.zeros(2),
            bounds_hi=np.ones(2),
        )


def test_save_load_round_trip(tmp_path):
    inst = generate_instance(4, 3, seed=99)
    target = tmp_path / "inst.flpo"
    save_instance(inst, target)
    loaded = load_instance(target)
    assert np.array_equal(loaded.starts, inst.starts)
    assert np.array_equal(loaded.destinations, inst.destinations)
    assert np.array_equal(loaded.weights, inst.weights)
    assert loaded.facility_count == inst.facility_count
    assert np.array_equal(loaded.bounds_lo, inst.bounds_lo)


def test_load_missing_field_names_it(tmp_path):
    inst = generate_instance(2, 2, seed=0)
    doc = instance_to_dict(inst)
    del doc["agents"][0]["weight"]
    with pytest.raises(ParseError, match="weight"):
        instance_from_dict(doc)


def test_load_unknown_field_rejected():
    inst = generate_instance(2, 2, seed=0)
    doc = instance_to_dict(inst)
    doc["surprise"] = 1
    with pytest.raises(ParseError, match="surprise"):
        instance_from_dict(doc)


def test_load_agent_count_mismatch():
    inst = generate_instance(2, 2, seed=0)
    doc = instance_to_dict(inst)
    doc["agents"][1]["start"] = [0.1]
    with pytest.raises(ParseError, match="agents\\[1\\]"):
        instance_from_dict(doc)


def test_load_invalid_json(tmp_path):
    bad = tmp_path / "bad.flpo"
    bad.write_text("{not json")
    with pytest.raises(ParseError, match="line"):
        load_instance(bad)
