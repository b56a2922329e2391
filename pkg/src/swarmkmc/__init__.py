"""Lattice kinetic Monte Carlo for vacancy-mediated Cu precipitation in bcc Fe-Cu.

The package couples a classical residence-time simulator with a
policy-reweighted sampler: a learned per-vacancy preference is fused with
the physical jump rates, the bias is removed afterwards by importance
weights, and the policy itself is trained with PPO against an
energy-descent reward.
"""

from swarmkmc.errors import ConfigError, SimulationError, SwarmKMCError, VerificationError
from swarmkmc.lattice import FE, CU, VACANCY, Lattice
from swarmkmc.energetics import (
    PairPotential,
    RateParams,
    load_default_potential,
    load_potential,
    total_energy,
    delta_energy_hop,
)
from swarmkmc.kinetics import ClassicalKMC, RunResult, TrajectoryCSV, run_classical
from swarmkmc.reweight import ISAuditCSV, SwarmSampler, TrajectoryRecord, run_swarm
from swarmkmc.agents import MLP, make_actor, make_critic, observe_all, critic_features
from swarmkmc.training import PPOConfig, load_policy, train
from swarmkmc.metrics import (
    BenchmarkReport,
    advancement_factor,
    effective_transition_ratio,
    equilibrium_bonds,
    measure_advancement,
    speedup_ratio,
    transition_per_step_energy,
)
from swarmkmc.verify import run_suite

__all__ = [
    "FE", "CU", "VACANCY", "Lattice",
    "SwarmKMCError", "ConfigError", "VerificationError", "SimulationError",
    "PairPotential", "RateParams", "load_potential", "load_default_potential",
    "total_energy", "delta_energy_hop",
    "ClassicalKMC", "RunResult", "TrajectoryCSV", "run_classical",
    "SwarmSampler", "TrajectoryRecord", "ISAuditCSV", "run_swarm",
    "MLP", "make_actor", "make_critic", "observe_all", "critic_features",
    "PPOConfig", "train", "load_policy",
    "advancement_factor", "transition_per_step_energy", "effective_transition_ratio",
    "equilibrium_bonds", "measure_advancement", "speedup_ratio", "BenchmarkReport",
    "run_suite",
]

__version__ = "0.1.0"
