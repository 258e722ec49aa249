"""Shielded self-learning switching control for a two-level VSC with an LC filter."""

from .agent import AgentConfig, DqnAgent, ReplayMemory, Transition, encode_state, reward
from .analysis import ThdResult, Waveform, rms_tracking_error, thd
from .harness import (
    EpisodeLog,
    RunConfig,
    RunReport,
    SimulationDiverged,
    baseline_report,
    default_config,
    evaluate,
    run_episode,
    sensitivity_sweep,
    train,
)
from .mpc import MpcConfig
from .plant import DiscreteModel, PlantParams, PlantState, SwitchAction
from .shield import ShieldConfig, ShieldDecision
from .signals import AlphaBeta, ReferenceSpec, clarke, inverse_clarke, reference_at

__version__ = "0.1.0"

__all__ = [
    "AgentConfig",
    "AlphaBeta",
    "DiscreteModel",
    "DqnAgent",
    "EpisodeLog",
    "MpcConfig",
    "PlantParams",
    "PlantState",
    "ReferenceSpec",
    "ReplayMemory",
    "RunConfig",
    "RunReport",
    "ShieldConfig",
    "ShieldDecision",
    "SimulationDiverged",
    "SwitchAction",
    "ThdResult",
    "Transition",
    "Waveform",
    "baseline_report",
    "clarke",
    "default_config",
    "encode_state",
    "evaluate",
    "inverse_clarke",
    "reference_at",
    "reward",
    "rms_tracking_error",
    "run_episode",
    "sensitivity_sweep",
    "thd",
    "train",
]
