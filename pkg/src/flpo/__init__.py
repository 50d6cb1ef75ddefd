"""Facility-location and path optimization toolkit.

Joint optimization of continuous facility locations and discrete agent
routes by annealed minimization of a maximum-entropy free energy, with
exact dynamic-programming gradients, a mixture-sampling gradient
estimator, metaheuristic baselines, and a benchmark harness.
"""

from .anneal import AnnealConfig, SolveReport, beta_schedule, extract_solution, solve
from .baselines import CEMParams, GAParams, SAParams, cem_solve, fitness, ga_solve, sa_solve
from .dp import (
    PolicyMatrix,
    backward_values,
    free_energy,
    free_energy_and_gradient,
    free_energy_gradient,
    gibbs_policy,
    greedy_rollout,
)
from .instance import (
    CanonicalPath,
    Instance,
    Path,
    canonicalize,
    generate_instance,
    load_instance,
    pair_cost,
    path_cost,
    save_instance,
)
from .sampling import (
    EnumerationSource,
    ExactDPSource,
    PolicySource,
    SampleSet,
    UniformSource,
    beam_search,
    empirical_gibbs_weights,
    estimate_gradient,
    sample_policy_paths,
    sample_uniform_paths,
)

__version__ = "0.1.0"

__all__ = [
    "AnnealConfig",
    "CEMParams",
    "CanonicalPath",
    "EnumerationSource",
    "ExactDPSource",
    "GAParams",
    "Instance",
    "Path",
    "PolicyMatrix",
    "PolicySource",
    "SAParams",
    "SampleSet",
    "SolveReport",
    "UniformSource",
    "backward_values",
    "beam_search",
    "beta_schedule",
    "canonicalize",
    "cem_solve",
    "empirical_gibbs_weights",
    "estimate_gradient",
    "extract_solution",
    "fitness",
    "free_energy",
    "free_energy_and_gradient",
    "free_energy_gradient",
    "ga_solve",
    "generate_instance",
    "gibbs_policy",
    "greedy_rollout",
    "load_instance",
    "pair_cost",
    "path_cost",
    "sa_solve",
    "sample_policy_paths",
    "sample_uniform_paths",
    "save_instance",
    "solve",
]
