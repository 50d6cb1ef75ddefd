from __future__ import annotations

import numpy as np
import pytest
import torch
import torch.nn as nn

from spn_trainer import (
    SPN,
    ModelConfig,
    reinforce_step,
    rollout,
    route_costs,
    sample_problems,
    supervised_step,
)
from spn_trainer.data import ProblemSet
from spn_trainer.train import _row_kl

torch.set_num_threads(2)


def test_row_kl_nonnegative_and_zero_at_match():
    probs = torch.tensor([[0.2, 0.3, 0.5], [0.9, 0.05, 0.05]])
    kl_same = _row_kl(probs, torch.log(probs))
    assert torch.all(kl_same.abs() < 1e-6)
    other = torch.log(torch.tensor([[0.5, 0.3, 0.2], [0.1, 0.8, 0.1]]))
    assert torch.all(_row_kl(probs, other) > 0.0)


def test_supervised_uniform_model_uniform_targets_zero_kl():
    # force uniform model rows on a balanced (M=1) stage graph, where the
    # tiny-beta targets are uniform too: the KL must vanish
    torch.manual_seed(3)
    model = SPN(ModelConfig(d_h=32, heads=4, l_enc=1, m_star=4))

    def uniform_rows(encoded, positions, dests, current=None):
        b, t, _ = encoded.shape
        rows = torch.full((b, t), 1.0 / (t - 1))
        rows[:, 0] = 0.0
        return rows

    model.decode_step = uniform_rows
    p = sample_problems(64, 1, np.random.default_rng(0))
    kl = supervised_step(model, p, beta=1e-9)
    assert kl < 1e-3


def test_supervised_kl_nonnegative_and_decreasing():
    torch.manual_seed(4)
    model = SPN(ModelConfig(d_h=32, heads=4, l_enc=2, m_star=4))
    opt = torch.optim.Adam(model.parameters(), lr=1e-3)
    rng = np.random.default_rng(1)
    gen = torch.Generator().manual_seed(0)
    first = None
    last = None
    for step in range(60):
        p = sample_problems(64, 4, rng)
        kl = supervised_step(model, p, 5.0, opt, gen)
        assert kl >= 0.0
        if first is None:
            first = kl
        last = kl
    assert last < first


def test_reinforce_requires_two_samples():
    model = SPN(ModelConfig(d_h=32, heads=4, l_enc=1, m_star=4))
    p = sample_problems(4, 3, np.random.default_rng(2))
    with pytest.raises(ValueError):
        reinforce_step(model, p, 1)


def test_reinforce_zero_advantage_zero_update():
    # single facility at the destination: every trajectory has identical
    # cost, the baseline cancels exactly, and no parameter moves
    torch.manual_seed(5)
    model = SPN(ModelConfig(d_h=32, heads=4, l_enc=1, m_star=4))
    starts = torch.tensor([[0.3, 0.3], [0.6, 0.1]])
    dests = torch.tensor([[0.8, 0.8], [0.2, 0.9]])
    problems = ProblemSet(starts=starts, dests=dests, facilities=dests[:1] * 0 + 0.5)
    # place the lone facility exactly on each agent's destination is not
    # possible for two agents; instead collapse start == dest == facility
    problems = ProblemSet(
        starts=torch.full((2, 2), 0.5),
        dests=torch.full((2, 2), 0.5),
        facilities=torch.full((1, 2), 0.5),
    )
    before = [p.clone() for p in model.parameters()]
    opt = torch.optim.SGD(model.parameters(), lr=1.0)
    mean_cost, _ = reinforce_step(model, problems, 4, opt, torch.Generator().manual_seed(0))
    assert mean_cost == pytest.approx(0.0, abs=1e-12)
    for old, new in zip(before, model.parameters()):
        assert torch.allclose(old, new)


def test_reinforce_sign_two_path_bandit():
    # 1-parameter policy over two fixed paths: lowering one path's cost
    # below the baseline must raise its probability after a step
    class Bandit(nn.Module):
        def __init__(self):
            super().__init__()
            self.logit = nn.Parameter(torch.zeros(1))

        def prob_a(self):
            return torch.sigmoid(self.logit)

    torch.manual_seed(6)
    bandit = Bandit()
    opt = torch.optim.SGD(bandit.parameters(), lr=0.1)
    costs = torch.tensor([0.2, 1.0])  # path A cheap, path B dear
    gen = torch.Generator().manual_seed(0)
    p_before = float(bandit.prob_a())
    for _ in range(50):
        p_a = bandit.prob_a()
        draws = (torch.rand(16, generator=gen) > p_a.detach()).long()  # 0 -> A
        logp = torch.where(draws == 0, torch.log(p_a), torch.log1p(-p_a))
        cost = costs[draws]
        adv = cost - cost.mean()
        loss = (adv.detach() * logp).mean()
        opt.zero_grad()
        loss.backward()
        opt.step()
    assert float(bandit.prob_a()) > p_before


def test_rollout_logprob_gradient_matches_finite_differences():
    # frozen tiny model: d(log pi(path)) / d(theta_i) via autograd equals
    # central finite differences on a fixed sampled path
    torch.manual_seed(7)
    model = SPN(ModelConfig(d_h=8, heads=2, l_enc=1, m_star=2))
    p = sample_problems(3, 3, np.random.default_rng(3))
    with torch.no_grad():
        paths, _ = rollout(model, p, mode="sample", rng=torch.Generator().manual_seed(1))
    model = model.double()  # float32 FD noise would swamp the 1e-3 bound
    dests64 = p.dests.double()

    def logp_of_paths(m):
        tokens = p.tokens().double()
        encoded = m.encode(tokens)
        total = torch.zeros((), dtype=torch.float64)
        nodes = paths[:, 0]
        for k in range(3):
            positions = torch.gather(
                tokens, 1, nodes.view(-1, 1, 1).expand(-1, 1, 2)
            ).squeeze(1)
            probs = m.decode_step(encoded, positions, dests64)
            nxt = paths[:, k + 1]
            alive = nodes != 4
            step_logp = torch.log(torch.gather(probs, 1, nxt.unsqueeze(1)).squeeze(1))
            total = total + torch.where(alive, step_logp, torch.zeros_like(step_logp)).sum()
            nodes = nxt
        return total

    loss = logp_of_paths(model)
    loss.backward()
    param = model.gate.weight
    grad = param.grad.detach().clone()
    h = 1e-3
    for idx in [(0, 0), (0, 3)]:
        with torch.no_grad():
            param[idx] += h
        up = float(logp_of_paths(model))
        with torch.no_grad():
            param[idx] -= 2 * h
        down = float(logp_of_paths(model))
        with torch.no_grad():
            param[idx] += h
        fd = (up - down) / (2 * h)
        assert grad[idx] == pytest.approx(fd, rel=1e-3, abs=1e-5)


def test_reinforce_improves_mean_cost():
    torch.manual_seed(8)
    model = SPN(ModelConfig(d_h=32, heads=4, l_enc=2, m_star=4))
    opt = torch.optim.Adam(model.parameters(), lr=1e-3)
    rng = np.random.default_rng(4)
    gen = torch.Generator().manual_seed(2)
    costs = []
    for step in range(40):
        p = sample_problems(32, 4, rng)
        mean_cost, _ = reinforce_step(model, p, 4, opt, gen)
        costs.append(mean_cost)
    assert np.mean(costs[-10:]) < np.mean(costs[:10])
