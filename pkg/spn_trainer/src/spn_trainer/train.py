"""Training: annealed supervised imitation of the exact stagewise Gibbs
policy, REINFORCE fine-tuning with a shared per-instance mean baseline,
and the staged curriculum over growing graph sizes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .data import ProblemSet, sample_problems
from .model import SPN, ModelConfig
from .rollout import rollout
from .targets import gibbs_log_rows, route_costs, shortest_costs, soft_values

PHASE_ORDER = ("phase1", "phase2", "phase3", "phase4", "ft")


class CurriculumError(RuntimeError):
    """A phase was started without its required pretraining checkpoint."""


@dataclass(frozen=True)
class TrainPhase:
    name: str
    mode: str  # "supervised" | "policy-gradient"
    pretrain: str | None
    epochs: int
    m: int | tuple[int, ...]
    lr: float = 1e-4
    batch: int = 256
    n_samples: int = 4  # policy-gradient rollouts per instance
    beta_start: float = 1.0
    beta_end: float = 1e3


def desk_phases(scale: float = 1.0) -> list[TrainPhase]:
    """Table-level curriculum at desk budgets (epochs cut ~100x; here one
    epoch is one optimizer step on a fresh sampled batch)."""

    def ep(n: int) -> int:
        return max(1, int(round(n * scale)))

    return [
        TrainPhase("phase1", "supervised", None, ep(100), 10, batch=128),
        TrainPhase("phase2", "supervised", "phase1", ep(15), 50, batch=64),
        TrainPhase("phase3", "policy-gradient", "phase2", ep(100), 50, batch=32),
        TrainPhase("phase4", "policy-gradient", "phase3", ep(20), 100, batch=16),
        TrainPhase("ft", "policy-gradient", "phase4", ep(10), (10, 100), batch=16),
    ]


def supervised_step(
    model: SPN,
    problems: ProblemSet,
    beta: float,
    optimizer: torch.optim.Optimizer | None = None,
    rng: torch.Generator | None = None,
) -> float:
    """One Monte-Carlo KL step against the exact stagewise Gibbs targets.

    Trajectories are drawn uniformly from the path space (stagewise-uniform
    next nodes, absorbing), which covers every reachable decision state; at
    each pre-absorption decision the loss accumulates
    KL(model row || Gibbs row). Returns the mean per-decision KL.

    The model is stage-free (it conditions on position and destination
    only), so every state is supervised with the far-from-horizon rows the
    policy export semantics promise: the stage-0 row at the start, stage-1
    rows elsewhere.
    """
    tokens = problems.tokens()
    b = tokens.shape[0]
    m = problems.m
    dest = m + 1
    encoded = model.encode(tokens)
    values = soft_values(problems, beta)
    nodes = torch.zeros(b, dtype=torch.int64)
    total = tokens.new_zeros(())
    steps = 0
    for k in range(m):
        alive = nodes != dest
        if not bool(alive.any()):
            break
        positions = _coords_at(tokens, nodes)
        target_log = gibbs_log_rows(
            problems, beta, positions, min(k, 1), values, exclude=nodes
        )
        model_probs = model.decode_step(encoded, positions, problems.dests, current=nodes)
        kl_rows = _row_kl(model_probs[:, 1:], target_log[:, 1:].float())
        total = total + kl_rows[alive].sum()
        steps += int(alive.sum())
        nxt = torch.randint(1, dest + 1, (b,), generator=rng)
        nodes = torch.where(alive, nxt, torch.full_like(nodes, dest))
    loss = total / max(steps, 1)
    if optimizer is not None:
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()
    return float(loss.detach())


def _coords_at(tokens: torch.Tensor, nodes: torch.Tensor) -> torch.Tensor:
    return torch.gather(
        tokens, 1, nodes.view(-1, 1, 1).expand(-1, 1, tokens.shape[-1])
    ).squeeze(1)


def _row_kl(model_probs: torch.Tensor, target_log: torch.Tensor) -> torch.Tensor:
    """KL(model || target) per row.

    Masked target columns (-inf) carry zero model mass; they are floored to
    a large finite value so the product is an exact zero instead of the
    0 * inf NaN that would poison the backward pass.
    """
    target_log = target_log.clamp_min(-1e4)
    model_log = torch.log(model_probs.clamp_min(1e-30))
    return (model_probs * (model_log - target_log)).sum(dim=-1)


def reinforce_step(
    model: SPN,
    problems: ProblemSet,
    n_samples: int,
    optimizer: torch.optim.Optimizer | None = None,
    rng: torch.Generator | None = None,
) -> tuple[float, float]:
    """REINFORCE with the per-instance mean sampled cost as the baseline.

    Returns (mean sampled cost, surrogate loss). With fewer than two
    samples the baseline is undefined.
    """
    if n_samples < 2:
        raise ValueError("n_samples must be >= 2 (baseline needs a mean)")
    b = problems.n_agents
    encoded = model.encode(problems.tokens())
    rep = ProblemSet(
        starts=problems.starts.repeat_interleave(n_samples, dim=0),
        dests=problems.dests.repeat_interleave(n_samples, dim=0),
        facilities=problems.facilities,
    )
    encoded_rep = encoded.repeat_interleave(n_samples, dim=0)
    paths, logp = rollout(model, rep, mode="sample", rng=rng, encoded=encoded_rep)
    costs = route_costs(rep, paths).float().view(b, n_samples)
    baseline = costs.mean(dim=1, keepdim=True)
    advantage = costs - baseline
    loss = (advantage.detach() * logp.view(b, n_samples)).mean()
    if optimizer is not None:
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()
    return float(costs.mean()), float(loss.detach())


@dataclass
class Checkpoint:
    phase: str
    epochs: int
    m: int | tuple[int, ...]
    seed: int
    config: ModelConfig
    state_dict: dict = field(repr=False, default_factory=dict)

    def save(self, path: str | Path) -> None:
        torch.save(
            {
                "phase": self.phase,
                "epochs": self.epochs,
                "m": self.m,
                "seed": self.seed,
                "config": vars(self.config),
                "state_dict": self.state_dict,
            },
            path,
        )

    @staticmethod
    def load(path: str | Path) -> "Checkpoint":
        doc = torch.load(path, weights_only=False)
        return Checkpoint(
            phase=doc["phase"],
            epochs=doc["epochs"],
            m=doc["m"] if not isinstance(doc["m"], list) else tuple(doc["m"]),
            seed=doc["seed"],
            config=ModelConfig(**doc["config"]),
            state_dict=doc["state_dict"],
        )


@dataclass(frozen=True)
class CurriculumConfig:
    model: ModelConfig = ModelConfig()
    phases: tuple[str, ...] = PHASE_ORDER
    out_dir: str | Path = "checkpoints"
    seed: int = 0
    scale: float = 1.0
    anneal: bool = True  # supervised-target beta annealing (ablation toggle)
    pretrain: bool = True  # load the previous phase's checkpoint (ablation toggle)


def _phase_beta(phase: TrainPhase, epoch: int, anneal: bool) -> float:
    if not anneal:
        return phase.beta_end
    if phase.epochs <= 1:
        return phase.beta_end
    ratio = phase.beta_end / phase.beta_start
    return float(phase.beta_start * ratio ** (epoch / (phase.epochs - 1)))


def run_curriculum(config: CurriculumConfig) -> dict[str, Path]:
    """Execute the requested phases in order; returns checkpoint paths.

    Each phase records a checkpoint and appends metric rows (epoch, phase,
    loss or mean cost, seed) to metrics.csv in the output directory.
    """
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    metrics_path = out_dir / "metrics.csv"
    if not metrics_path.exists():
        metrics_path.write_text("phase,epoch,metric,value,seed\n")
    all_phases = {p.name: p for p in desk_phases(config.scale)}
    for name in config.phases:
        if name not in all_phases:
            raise CurriculumError(f"unknown phase {name!r}")
    torch.manual_seed(config.seed)
    model = SPN(config.model)
    written: dict[str, Path] = {}
    for name in PHASE_ORDER:
        if name not in config.phases:
            continue
        phase = all_phases[name]
        if phase.pretrain is not None:
            if config.pretrain:
                if phase.pretrain not in written:
                    prev = out_dir / f"{phase.pretrain}.pt"
                    if not prev.exists():
                        raise CurriculumError(
                            f"{name} requires a {phase.pretrain} checkpoint; "
                            f"none found at {prev}"
                        )
                    model.load_state_dict(Checkpoint.load(prev).state_dict)
                # else: the in-process model already carries those weights
            elif phase.mode == "policy-gradient":
                # "no pre-train" ablation: policy-gradient from scratch
                torch.manual_seed(config.seed)
                model = SPN(config.model)
        optimizer = torch.optim.Adam(model.parameters(), lr=phase.lr)
        np_rng = np.random.default_rng(
            np.random.SeedSequence((config.seed, PHASE_ORDER.index(name)))
        )
        torch_rng = torch.Generator().manual_seed(config.seed * 1000 + PHASE_ORDER.index(name))
        rows = []
        for epoch in range(phase.epochs):
            sizes = phase.m if isinstance(phase.m, tuple) else (phase.m,)
            m = int(sizes[epoch % len(sizes)])
            problems = sample_problems(phase.batch, m, np_rng)
            if phase.mode == "supervised":
                beta = _phase_beta(phase, epoch, config.anneal)
                value = supervised_step(model, problems, beta, optimizer, torch_rng)
                rows.append(f"{name},{epoch},kl,{value!r},{config.seed}")
            else:
                mean_cost, _ = reinforce_step(
                    model, problems, phase.n_samples, optimizer, torch_rng
                )
                rows.append(f"{name},{epoch},mean_cost,{mean_cost!r},{config.seed}")
        with metrics_path.open("a") as fh:
            fh.write("\n".join(rows) + "\n")
        ckpt = Checkpoint(
            phase=name,
            epochs=phase.epochs,
            m=phase.m,
            seed=config.seed,
            config=config.model,
            state_dict={k: v.clone() for k, v in model.state_dict().items()},
        )
        path = out_dir / f"{name}.pt"
        ckpt.save(path)
        written[name] = path
    return written


def evaluate_gap(
    model: SPN,
    m: int,
    n_instances: int = 16,
    n_agents: int = 64,
    seed: int = 1234,
    beam_width: int = 0,
) -> float:
    """Mean relative optimality gap of greedy (or beam top-1) decoding."""
    from .rollout import beam_rollout

    rng = np.random.default_rng(seed)
    gaps = []
    with torch.no_grad():
        for _ in range(n_instances):
            problems = sample_problems(n_agents, m, rng)
            best = shortest_costs(problems)
            if beam_width > 0:
                paths, _ = beam_rollout(model, problems, beam_width)
                flat = ProblemSet(
                    starts=problems.starts.repeat_interleave(beam_width, dim=0),
                    dests=problems.dests.repeat_interleave(beam_width, dim=0),
                    facilities=problems.facilities,
                )
                costs = route_costs(flat, paths.reshape(-1, m + 2)).view(-1, beam_width)
                cost = costs.min(dim=1).values
            else:
                paths, _ = rollout(model, problems, mode="greedy")
                cost = route_costs(problems, paths)
            gaps.append(float(cost.mean() / best.mean()) - 1.0)
    return float(np.mean(gaps))
