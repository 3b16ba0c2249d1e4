"""Multi-agent RL for environments with durative (duration-delayed) actions.

The package couples a per-agent levelled-graph episodic memory with a
pivot-timestep search and a reward-redistribution pass, so that rewards
whose causes were committed many steps earlier are credited at their commit
times during TD training.
"""

from .core import (
    DurativeAction,
    Episode,
    GlobalTransition,
    ReplayBuffer,
    StepRecord,
    Trajectory,
    discretize_return,
    episode_return,
)
from .memory import MemoryStore
from .search import PivotMap, search_pivot_timesteps
from .training import Trainer, TrainerConfig, redistribute

__all__ = [
    "DurativeAction",
    "Episode",
    "GlobalTransition",
    "MemoryStore",
    "PivotMap",
    "ReplayBuffer",
    "StepRecord",
    "Trainer",
    "TrainerConfig",
    "Trajectory",
    "discretize_return",
    "episode_return",
    "redistribute",
    "search_pivot_timesteps",
]

__version__ = "0.1.0"
