"""Target recursions are validated against golden files produced by the
solver's exact implementation through the bridge formats."""

from __future__ import annotations

import json

import numpy as np
import pytest
import torch

from spn_trainer.data import ProblemSet, load_request, sample_problems
from spn_trainer.targets import (
    gibbs_log_rows,
    gibbs_rows,
    hard_values,
    route_costs,
    shortest_costs,
    soft_values,
)

flpo = pytest.importorskip("flpo")
torch.set_num_threads(2)


def _golden(tmp_path, n=4, m=3, beta=7.0, seed=5):
    from flpo.bridge import export_exact_policy, export_request
    from flpo.instance import generate_instance

    inst = generate_instance(n, m, seed=seed)
    Y = np.random.default_rng(seed + 1).uniform(0, 1, (m, 2))
    request = tmp_path / "request.json"
    policy = tmp_path / "policy.json"
    export_request(inst, Y, request)
    export_exact_policy(inst, Y, beta, policy)
    problems, _ = load_request(request)
    golden = json.loads(policy.read_text())
    return inst, Y, problems, golden


def test_gibbs_rows_match_solver_golden_export(tmp_path):
    inst, Y, problems, golden = _golden(tmp_path)
    beta = 7.0
    tokens = problems.tokens()
    values = soft_values(problems, beta)
    for agent in range(inst.n_agents):
        mat = np.array(golden["agents"][agent]["rows"])
        start_row = gibbs_rows(problems, beta, tokens[:, 0, :], 0, values)[agent]
        assert np.allclose(start_row.numpy(), mat[0], atol=1e-6)
        for j in range(1, inst.facility_count + 1):
            row = gibbs_rows(problems, beta, tokens[:, j, :], 1, values)[agent]
            assert np.allclose(row.numpy(), mat[j], atol=1e-6)


def test_soft_values_match_solver_free_energy(tmp_path):
    from flpo.dp import free_energy
    from flpo.instance import generate_instance

    inst = generate_instance(3, 4, seed=21)
    Y = np.random.default_rng(22).uniform(0, 1, (4, 2))
    problems = ProblemSet(
        starts=torch.tensor(inst.starts).float(),
        dests=torch.tensor(inst.destinations).float(),
        facilities=torch.tensor(Y).float(),
    )
    for beta in (0.01, 1.0, 100.0):
        ours = float(soft_values(problems, beta)[:, 0, 0].mean())
        theirs = free_energy(inst, Y, beta)
        assert ours == pytest.approx(theirs, rel=1e-5)  # float32 coordinates


def test_shortest_costs_match_solver_fitness(tmp_path):
    from flpo.baselines import fitness
    from flpo.instance import generate_instance

    inst = generate_instance(5, 4, seed=23)
    Y = np.random.default_rng(24).uniform(0, 1, (4, 2))
    problems = ProblemSet(
        starts=torch.tensor(inst.starts).float(),
        dests=torch.tensor(inst.destinations).float(),
        facilities=torch.tensor(Y).float(),
    )
    ours = float(shortest_costs(problems).mean())
    assert ours == pytest.approx(fitness(inst, Y), rel=1e-5)


def test_gibbs_log_rows_final_stage_is_indicator():
    p = sample_problems(6, 3, np.random.default_rng(0))
    rows = gibbs_log_rows(p, 2.0, p.starts, stage=3)
    assert torch.all(rows[:, 4] == 0.0)
    assert torch.all(torch.isinf(rows[:, :4]))


def test_hard_values_lower_bound_soft_values():
    p = sample_problems(8, 4, np.random.default_rng(1))
    hard = hard_values(p)[:, 0, 0]
    for beta in (0.1, 1.0, 10.0, 1000.0):
        soft = soft_values(p, beta)[:, 0, 0]
        assert torch.all(soft <= hard + 1e-9)
    assert torch.all(hard - soft_values(p, 1e5)[:, 0, 0] < 1e-3)


def test_route_costs_hand_case():
    problems = ProblemSet(
        starts=torch.tensor([[0.0, 0.0]]),
        dests=torch.tensor([[1.0, 0.0]]),
        facilities=torch.tensor([[0.5, 0.0], [0.9, 0.9]]),
    )
    paths = torch.tensor([[0, 1, 3, 3]])
    assert float(route_costs(problems, paths)[0]) == pytest.approx(0.5, rel=1e-6)
