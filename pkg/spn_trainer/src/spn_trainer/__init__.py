"""Shortest-path policy network trainer.

Trains a permutation-equivariant encoder-decoder to imitate and then
improve stagewise routing policies on the facility stage graph, and
exports them as solver bridge policy files.
"""

from .data import ProblemSet, load_request, sample_problems, write_policy_file
from .export import export_policy, policy_matrices
from .model import SPN, ModelConfig
from .rollout import beam_rollout, rollout
from .targets import gibbs_log_rows, gibbs_rows, route_costs, shortest_costs, soft_values
from .train import (
    Checkpoint,
    CurriculumConfig,
    CurriculumError,
    TrainPhase,
    desk_phases,
    evaluate_gap,
    reinforce_step,
    run_curriculum,
    supervised_step,
)

__version__ = "0.1.0"
