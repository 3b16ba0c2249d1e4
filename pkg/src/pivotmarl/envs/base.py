"""Deterministic grid worlds whose actions carry execution durations.

An action committed at timestep t with duration m takes effect while the
environment processes timestep t + m. Episodes run over timesteps
0..horizon inclusive (so a duration-``horizon`` action committed at t=0
resolves exactly at the final step) and end early when a resolution event
(catch, detonation, storm) closes the task.

Every environment also tracks causality: each step outcome reports which
committed actions produced its reward, which gives evaluation code a
ground-truth pivot oracle. The learning stack never reads these annotations.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from ..core import Episode, Observation


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class EnvConfig:
    name: str
    n_agents: int = 2
    grid: tuple[int, int] = (15, 15)
    horizon: int = 14
    durations: tuple[int, ...] = (14, 6)
    seed: int = 0
    append_timestep: bool = False
    task_reward: float = 10.0
    step_penalty: float = -0.1
    safety_penalty: float = -5.0
    # payout per arrow when the stag escapes on a partial hit; None means
    # the task reward scaled by the fraction of arrows that hit
    partial_per_hit: float | None = None
    # stag-hunter escape semantics: when False the episode keeps running
    # after the stag escapes, and losing it costs ``failure_penalty`` at the
    # final step (charged to the mistimed volley)
    escape_ends_episode: bool = True
    failure_penalty: float = 0.0

    def validate(self) -> None:
        if self.n_agents < 1:
            raise ConfigError("need at least one agent")
        if len(self.durations) != self.n_agents:
            raise ConfigError("one duration per agent required")
        if self.horizon < 1:
            raise ConfigError("horizon must be >= 1")
        if any(d < 0 or d > self.horizon for d in self.durations):
            raise ConfigError(f"durations must lie in [0, horizon]: {self.durations}")
        if self.grid[0] < 1 or self.grid[1] < 1:
            raise ConfigError(f"invalid grid {self.grid}")

    def with_overrides(self, **kwargs) -> "EnvConfig":
        return replace(self, **kwargs)


@dataclass(frozen=True)
class PendingEffect:
    """A committed durative action waiting to resolve.

    resolve_time = commit_time + duration; each effect resolves exactly once,
    or never if the episode ends first.
    """

    owner: int
    action_id: int
    commit_time: int
    resolve_time: int

    def __post_init__(self) -> None:
        if self.resolve_time < self.commit_time:
            raise ValueError("resolve_time before commit_time")


@dataclass
class StepOutcome:
    joint_observation: list[Observation]
    reward: float
    done: bool
    # commit timestep of each agent whose durative action caused this reward;
    # empty when the reward has no durative cause (it is then on-beat)
    contributors: dict[int, int] = field(default_factory=dict)
    task_success: bool = False
    event: str = ""


class GridEnv:
    """Common bookkeeping for the durative grid worlds."""

    action_names: tuple[str, ...] = ("NOOP",)

    def __init__(self, config: EnvConfig) -> None:
        config.validate()
        self.config = config
        self.n_agents = config.n_agents
        self.horizon = config.horizon
        self.t = 0
        self.done = True

    @property
    def n_actions(self) -> int:
        return len(self.action_names)

    # -- subclass hooks -----------------------------------------------------

    def _reset_state(self) -> None:
        raise NotImplementedError

    def _apply_step(self, actions: list[int]) -> StepOutcome:
        raise NotImplementedError

    def _observe(self, agent: int) -> Observation:
        raise NotImplementedError

    def legal_actions(self, agent: int) -> tuple[int, ...]:
        raise NotImplementedError

    def state(self) -> tuple[int, ...]:
        raise NotImplementedError

    # -- public API ----------------------------------------------------------

    def reset(self) -> list[Observation]:
        self.t = 0
        self.done = False
        self._reset_state()
        return self.observations()

    def observations(self) -> list[Observation]:
        obs = [self._observe(i) for i in range(self.n_agents)]
        if self.config.append_timestep:
            obs = [o + (self.t,) for o in obs]
        return obs

    def step(self, actions: list[int]) -> StepOutcome:
        if self.done:
            raise RuntimeError("step() called on a finished episode; reset() first")
        if len(actions) != self.n_agents:
            raise ValueError(f"expected {self.n_agents} actions, got {len(actions)}")
        for a in actions:
            if not 0 <= a < self.n_actions:
                raise ValueError(f"unknown action id {a}")
        outcome = self._apply_step(actions)
        if not outcome.done and self.t >= self.horizon:
            outcome.done = True
            outcome.event = outcome.event or "timeout"
        self.t += 1
        self.done = outcome.done
        outcome.joint_observation = self.observations()
        return outcome


def ground_truth_pivot(episode: Episode) -> dict[int, dict[int, int]]:
    """Oracle map: nonzero-reward timestep -> {agent: commit timestep}.

    Zero-reward timesteps are absent. An empty commit map means the reward
    had no durative cause, i.e. its true pivot is the timestep itself.
    """
    out: dict[int, dict[int, int]] = {}
    for t, tr in enumerate(episode.transitions):
        if tr.reward != 0:
            out[t] = dict(episode.pivot_truth.get(t, {}))
    return out


def collective_truth(contributors: dict[int, int], t: int) -> int:
    """Recency-collective ground truth: the latest contributing commit."""
    return max(contributors.values()) if contributors else t


def is_offbeat_reward(contributors: dict[int, int], t: int) -> bool:
    """A reward is off-schedule when some causing action was committed
    strictly earlier (duration >= 1)."""
    return any(commit < t for commit in contributors.values())
