"""Task planning for a four-arm, two-group fruit-harvesting robot.

The robot's arms share a joint within each group, so only one arm per group
can be out grasping at a time.  This package models that as a two-agent
Markov game (:mod:`~harvestplan.env`), provides baseline planners, an exact
search for tiny instances, and a numpy PPO learner.
"""
from .env import DoneReason, EnvConfig, HarvestEnv, legal_actions, run_episode, step, time_reward
from .errors import (
    GenerationFailed,
    HarvestError,
    IllegalAction,
    InvalidArm,
    InvalidLayout,
    InvalidState,
    MissingArtifact,
    NonFiniteLoss,
    SearchBudgetExceeded,
    TooManyFruits,
    Unreachable,
)
from .layouts import PRESETS, Distribution, LayoutSpec, generate
from .oracle import optimal_makespan
from .planners import GreedyPlanner, RandomPlanner, StaticListPlanner
from .types import ArmState, EpisodeMetrics, FruitLayout, GroupAction, Phase, SystemState, TransitionKind
from .workspace import WorkspaceConfig

__version__ = "0.1.0"

__all__ = [
    "ArmState",
    "Distribution",
    "DoneReason",
    "EnvConfig",
    "EpisodeMetrics",
    "FruitLayout",
    "GenerationFailed",
    "GreedyPlanner",
    "GroupAction",
    "HarvestEnv",
    "HarvestError",
    "IllegalAction",
    "InvalidArm",
    "InvalidLayout",
    "InvalidState",
    "LayoutSpec",
    "MissingArtifact",
    "NonFiniteLoss",
    "PRESETS",
    "Phase",
    "RandomPlanner",
    "SearchBudgetExceeded",
    "StaticListPlanner",
    "SystemState",
    "TooManyFruits",
    "TransitionKind",
    "Unreachable",
    "WorkspaceConfig",
    "generate",
    "legal_actions",
    "optimal_makespan",
    "run_episode",
    "step",
    "time_reward",
]
