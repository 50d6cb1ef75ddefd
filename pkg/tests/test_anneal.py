from __future__ import annotations

import numpy as np
import pytest

from flpo.anneal import AnnealConfig, beta_schedule, centroid_init, extract_solution, solve
from flpo.dp import free_energy
from flpo.instance import Instance, generate_instance, path_cost
from flpo.oracle import exact_shortest_path
from flpo.sampling import ExactDPSource


def test_beta_schedule_seven_decades():
    cfg = AnnealConfig(beta_start=1e-3, beta_end=1e3, growth=10.0)
    betas = beta_schedule(cfg)
    assert len(betas) == 7
    assert betas[0] == pytest.approx(1e-3)
    assert betas[-1] == 1e3
    ratios = [b / a for a, b in zip(betas, betas[1:])]
    assert all(r == pytest.approx(10.0) for r in ratios)


def test_beta_schedule_single_value():
    cfg = AnnealConfig(beta_start=500.0, beta_end=500.0)
    assert beta_schedule(cfg) == [500.0]


def test_beta_schedule_clips_to_end():
    cfg = AnnealConfig(beta_start=1e-3, beta_end=5e2, growth=10.0)
    betas = beta_schedule(cfg)
    assert betas[-2] == pytest.approx(1e2)
    assert betas[-1] == 5e2


def test_config_validation():
    with pytest.raises(ValueError):
        AnnealConfig(beta_start=1.0, beta_end=0.5)
    with pytest.raises(ValueError):
        AnnealConfig(growth=1.0)
    with pytest.raises(ValueError):
        AnnealConfig(step_size=0.0)
    with pytest.raises(ValueError):
        AnnealConfig(backend="magic")
    with pytest.raises(ValueError):
        AnnealConfig(b=9, L=5)


def _mirror_instance() -> Instance:
    return Instance(
        starts=np.array([[0.0, 0.3], [0.0, -0.3]]),
        destinations=np.array([[1.0, 0.3], [1.0, -0.3]]),
        weights=np.array([0.5, 0.5]),
        facility_count=1,
        bounds_lo=np.array([-1.0, -1.0]),
        bounds_hi=np.array([2.0, 2.0]),
    )


def test_symmetric_instance_facility_lands_on_axis():
    inst = _mirror_instance()
    cfg = AnnealConfig(beta_end=1e3, backend="exact-dp", seed=3, inner_iters=300)
    report = solve(inst, None, cfg)
    assert abs(report.final_locations[0, 1]) < 1e-3


def test_coincident_facilities_stay_coincident_for_one_step():
    # fully symmetric start: identical facilities receive identical gradients
    inst = generate_instance(3, 3, seed=9)
    Y0 = np.full((3, 2), 0.45)
    cfg = AnnealConfig(beta_start=1e-3, beta_end=1e-3, inner_iters=1, seed=0)
    report = solve(inst, Y0, cfg)
    spread = np.ptp(report.final_locations, axis=0)
    assert np.all(spread < 1e-12)


def test_warm_start_contract_bitwise():
    inst = generate_instance(2, 3, seed=4)
    cfg = AnnealConfig(beta_start=1e-3, beta_end=1e-2, growth=10.0, inner_iters=5, seed=1)
    full = solve(inst, None, cfg)
    first = solve(inst, None, AnnealConfig(beta_start=1e-3, beta_end=1e-3, inner_iters=5, seed=1))
    resumed = solve(
        inst,
        first.final_locations,
        AnnealConfig(beta_start=1e-2, beta_end=1e-2, inner_iters=5, seed=1),
    )
    assert np.array_equal(full.final_locations, resumed.final_locations)


def test_solve_deterministic_bytes():
    inst = generate_instance(2, 2, seed=5)
    cfg = AnnealConfig(beta_end=1e2, backend="mixture", b=3, L=9, seed=7, inner_iters=20)
    a = solve(inst, None, cfg)
    b = solve(inst, None, cfg)
    assert a.canonical_bytes() == b.canonical_bytes()


def test_solve_thread_count_invariance(monkeypatch):
    inst = generate_instance(3, 3, seed=6)
    cfg = AnnealConfig(beta_end=1e2, backend="mixture", b=3, L=9, seed=8, inner_iters=10)
    monkeypatch.setenv("FLPO_THREADS", "1")
    a = solve(inst, None, cfg)
    monkeypatch.setenv("FLPO_THREADS", "4")
    b = solve(inst, None, cfg)
    assert a.canonical_bytes() == b.canonical_bytes()


def test_report_cost_recomputable_from_paths():
    inst = generate_instance(3, 3, seed=7)
    cfg = AnnealConfig(beta_end=1e3, seed=2, inner_iters=50)
    report = solve(inst, None, cfg)
    total = sum(
        inst.weights[i] * path_cost(inst, report.final_locations, p.expand(3))
        for i, p in enumerate(report.paths)
    )
    assert report.cost == pytest.approx(total, abs=1e-12)


def test_descent_property_exact_backend():
    # free energy non-increasing along inner iterations in >= 95% of steps
    drops = 0
    total = 0
    for seed in range(5):
        inst = generate_instance(3, 3, seed=seed + 30)
        cfg = AnnealConfig(
            beta_end=1e2, backend="exact-dp", seed=seed, inner_iters=40, step_size=0.005
        )
        report = solve(inst, None, cfg)
        by_beta: dict[float, list[float]] = {}
        for row in report.trace:
            by_beta.setdefault(row.beta, []).append(row.objective)
        for values in by_beta.values():
            for a, b in zip(values, values[1:]):
                total += 1
                drops += b <= a + 1e-12
    assert drops / total >= 0.95


def test_extract_solution_matches_oracle_shortest():
    for seed in range(10):
        inst = generate_instance(2, 4, seed=seed + 50)
        Y = np.random.default_rng(seed).uniform(0, 1, (4, 2))
        paths, cost = extract_solution(inst, Y, ExactDPSource(), 1e6)
        expected = 0.0
        for agent in range(2):
            sp = exact_shortest_path(inst, Y, agent)
            assert paths[agent].facilities == tuple(
                n for n in sp.nodes[1:-1] if n != 5
            ) or path_cost(inst, Y, sp) == pytest.approx(
                path_cost(inst, Y, paths[agent].expand(4)), rel=1e-9
            )
            expected += inst.weights[agent] * path_cost(inst, Y, sp)
        assert cost == pytest.approx(expected, rel=1e-9)


def test_extract_zero_weight_agent_contributes_nothing():
    inst = Instance(
        starts=np.array([[0.1, 0.1], [0.9, 0.9]]),
        destinations=np.array([[0.8, 0.2], [0.2, 0.8]]),
        weights=np.array([1.0, 0.0]),
        facility_count=2,
        bounds_lo=np.zeros(2),
        bounds_hi=np.ones(2),
    )
    Y = np.array([[0.4, 0.15], [0.5, 0.85]])
    paths, cost = extract_solution(inst, Y, ExactDPSource(), 1e6)
    expected = path_cost(inst, Y, exact_shortest_path(inst, Y, 0))
    assert cost == pytest.approx(expected, rel=1e-12)


def test_extraction_invariant_under_facility_relabeling():
    inst = generate_instance(2, 3, seed=60)
    Y = np.random.default_rng(61).uniform(0, 1, (3, 2))
    perm = np.array([1, 2, 0])
    _, cost = extract_solution(inst, Y, ExactDPSource(), 1e6)
    _, cost_p = extract_solution(inst, Y[perm], ExactDPSource(), 1e6)
    assert cost == pytest.approx(cost_p, rel=1e-12)


def test_single_beta_run_shape():
    inst = generate_instance(4, 3, seed=62)
    cfg = AnnealConfig(beta_start=1e4, beta_end=1e4, backend="mixture", b=5, L=13, seed=0)
    report = solve(inst, None, cfg)
    betas = {row.beta for row in report.trace}
    assert betas == {1e4}
    assert max(row.iteration for row in report.trace) <= 99


def test_report_round_trip_and_trace_csv(tmp_path):
    inst = generate_instance(2, 2, seed=63)
    report = solve(inst, None, AnnealConfig(beta_end=1e1, seed=4, inner_iters=5))
    out = tmp_path / "report.json"
    report.save(out)
    import json

    doc = json.loads(out.read_text())
    assert doc["cost"] == report.cost
    assert doc["method"] == "mep"
    csv_path = tmp_path / "trace.csv"
    report.save_trace_csv(csv_path)
    header = csv_path.read_text().splitlines()[0]
    assert header == "beta,iter,F,grad_norm,wall_ms"
