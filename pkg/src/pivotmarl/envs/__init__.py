"""Environment registry and named presets."""

from __future__ import annotations

from .afforestation import AfforestationEnv
from .base import (
    ConfigError,
    EnvConfig,
    GridEnv,
    PendingEffect,
    StepOutcome,
    collective_truth,
    ground_truth_pivot,
    is_offbeat_reward,
)
from .quarry import QuarryEnv
from .stag_hunter import StagHunterEnv

__all__ = [
    "AfforestationEnv",
    "ConfigError",
    "EnvConfig",
    "GridEnv",
    "PendingEffect",
    "QuarryEnv",
    "StagHunterEnv",
    "StepOutcome",
    "collective_truth",
    "ground_truth_pivot",
    "is_offbeat_reward",
    "make_env",
    "PRESETS",
]

PRESETS: dict[str, EnvConfig] = {
    # two archers, flight times 14 and 6, timeline 0..14
    "stag-hunter": EnvConfig("stag-hunter", grid=(15, 15), horizon=14, durations=(14, 6)),
    # the introductory variant: flight times 10 and 5, timeline 0..10
    "stag-hunter-fig1": EnvConfig("stag-hunter-fig1", grid=(15, 15), horizon=10, durations=(10, 5)),
    # reduction check: every action resolves instantly
    "stag-hunter-instant": EnvConfig("stag-hunter-instant", grid=(15, 15), horizon=14, durations=(0, 0)),
    "quarry": EnvConfig("quarry", grid=(7, 1), horizon=10, durations=(9, 5)),
    "quarry-instant": EnvConfig("quarry-instant", grid=(7, 1), horizon=10, durations=(0, 0)),
    "afforestation": EnvConfig("afforestation", grid=(7, 1), horizon=12, durations=(8, 4)),
}

_ENV_CLASSES = {
    "stag-hunter": StagHunterEnv,
    "stag-hunter-fig1": StagHunterEnv,
    "stag-hunter-instant": StagHunterEnv,
    "quarry": QuarryEnv,
    "quarry-instant": QuarryEnv,
    "afforestation": AfforestationEnv,
}


def make_env(name: str, **overrides) -> GridEnv:
    """Instantiate a preset; keyword overrides patch the preset config."""
    if name not in PRESETS:
        raise ConfigError(f"unknown environment preset {name!r}; have {sorted(PRESETS)}")
    config = PRESETS[name].with_overrides(**overrides) if overrides else PRESETS[name]
    return _ENV_CLASSES[name](config)


def max_episode_length(name: str, **overrides) -> int:
    config = PRESETS[name].with_overrides(**overrides) if overrides else PRESETS[name]
    return config.horizon + 1
