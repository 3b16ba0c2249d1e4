"""Shared vocabulary for episodes with durative (duration-delayed) actions.

Everything downstream (environments, episodic memory, pivot search, training)
speaks in terms of the types defined here: per-agent trajectories of
(observation, action, reward) triples, the aligned global transition record,
and an episode-granular replay buffer.

Conventions:
  * observations are tuples of plain ints so they hash exactly;
  * the reward at a timestep is shared by all agents;
  * discretized episode returns are stored as scaled integers (tenths) so
    they can be used as exact dictionary keys.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal

import numpy as np

Observation = tuple[int, ...]

# Discretized episode return, in tenths (8.6 -> 86). Exact integer keys avoid
# float-equality pitfalls when indexing return-keyed memory sub-graphs.
ReturnKey = int


@dataclass(frozen=True)
class DurativeAction:
    """A primitive action together with its execution duration.

    The duration is fixed at commit time; an action committed at timestep t
    takes effect at t + duration. Duration 0 means the effect is immediate.
    """

    action_id: int
    duration: int

    def __post_init__(self) -> None:
        if self.action_id < 0:
            raise ValueError(f"action_id must be >= 0, got {self.action_id}")
        if self.duration < 0:
            raise ValueError(f"duration must be >= 0, got {self.duration}")


@dataclass
class StepRecord:
    """One (observation, action, reward) triple of a per-agent trajectory.

    ``history_digest`` is a stable 64-bit digest of the agent's
    action-observation history up to and including ``observation``; it is
    filled in at collection time and used as the tabular Q key. ``legal``
    records which actions were available (empty tuple = all).
    """

    observation: Observation
    action: int
    reward: float
    history_digest: int = 0
    legal: tuple[int, ...] = ()
    afterstate_key: int | None = None  # cached by the memory at insert time


@dataclass
class Trajectory:
    """Ordered per-agent step records; the timestep of step k is k."""

    agent: int
    steps: list[StepRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.steps)

    def rewards(self) -> list[float]:
        return [s.reward for s in self.steps]


@dataclass
class GlobalTransition:
    """One timestep of the global (centralized-training) view."""

    state: tuple[int, ...]
    joint_action: tuple[DurativeAction, ...]
    reward: float
    next_state: tuple[int, ...]
    done: bool


@dataclass
class Episode:
    """A completed episode: global transitions plus per-agent trajectories.

    ``pivot_truth`` holds the environment's causality annotations: for each
    nonzero-reward timestep t, a map from contributing agent to the timestep
    at which that agent committed the causing action. Steps whose reward has
    no durative cause carry an empty map. It is instrumentation for search
    evaluation only and is never read by the search itself.
    """

    transitions: list[GlobalTransition]
    trajectories: list[Trajectory]
    pivot_truth: dict[int, dict[int, int]] = field(default_factory=dict)
    task_success: bool = False
    digest: int = 0  # cached content digest, filled by the collector
    _cols: tuple | None = field(default=None, repr=False, compare=False)

    def __len__(self) -> int:
        return len(self.transitions)

    @property
    def n_agents(self) -> int:
        return len(self.trajectories)

    def rewards(self) -> list[float]:
        return [t.reward for t in self.transitions]

    def columns(self) -> tuple[list[tuple[list[int], list[int], list[tuple[int, ...]]]], list[float]]:
        """Per-agent (digests, actions, legals) columns plus the reward list,
        cached; the hot training loops index these instead of step objects."""
        if self._cols is None:
            per_agent = []
            for traj in self.trajectories:
                digests = [s.history_digest for s in traj.steps]
                actions = [s.action for s in traj.steps]
                legals = [s.legal for s in traj.steps]
                per_agent.append((digests, actions, legals))
            self._cols = (per_agent, [t.reward for t in self.transitions])
        return self._cols

    def content_digest(self) -> int:
        """Digest of observable episode content, for memoizing searches."""
        h = fold_digest(0xE15C0DE, len(self.transitions))
        for traj in self.trajectories:
            for s in traj.steps:
                h = fold_digest(h, s.action, *s.observation)
        for t in self.transitions:
            h = fold_digest(h, discretize_return(t.reward))
        return h


def episode_return(traj: Trajectory | Episode) -> float:
    """Sum of rewards over the episode.

    Raises ValueError on an empty episode.
    """
    rewards = traj.rewards()
    if not rewards:
        raise ValueError("empty episode")
    return math.fsum(rewards)


def discretize_return(x: float) -> ReturnKey:
    """Round a return to 1 decimal (half away from zero), scaled by 10.

    The scaled-integer form (8.649 -> 86) is the canonical sub-graph key.
    """
    if not math.isfinite(x):
        raise ValueError(f"return must be finite, got {x}")
    scaled = Decimal(repr(float(x))).scaleb(1)
    return int(scaled.quantize(Decimal(1), rounding=ROUND_HALF_UP))


def return_key_value(key: ReturnKey) -> float:
    """Float value of a discretized return key (86 -> 8.6)."""
    return key / 10.0


class ReplayBuffer:
    """Bounded FIFO store of whole episodes with uniform batch sampling.

    Whole episodes (not flat transitions) are kept because pivot search and
    reward redistribution need trajectories end to end. Sampling within one
    batch is uniform without replacement. Single-writer: no internal locking.
    """

    def __init__(self, capacity: int) -> None:
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._episodes: list[Episode] = []
        self._next = 0  # ring cursor once full

    def __len__(self) -> int:
        return len(self._episodes)

    def insert(self, episode: Episode) -> None:
        if len(self._episodes) < self.capacity:
            self._episodes.append(episode)
        else:
            self._episodes[self._next] = episode
            self._next = (self._next + 1) % self.capacity

    def sample(self, batch_size: int, rng: np.random.Generator) -> list[Episode]:
        if not self._episodes:
            raise ValueError("cannot sample from an empty buffer")
        if batch_size > len(self._episodes):
            raise ValueError(
                f"batch_size {batch_size} exceeds stored episodes {len(self._episodes)}"
            )
        idx = rng.choice(len(self._episodes), size=batch_size, replace=False)
        return [self._episodes[int(i)] for i in idx]

    def recent(self, k: int) -> list[Episode]:
        """The last k inserted episodes, oldest first."""
        k = min(k, len(self._episodes))
        if len(self._episodes) < self.capacity:
            return self._episodes[-k:]
        order = self._episodes[self._next:] + self._episodes[: self._next]
        return order[-k:]


# --- history digests ------------------------------------------------------

_MASK64 = (1 << 64) - 1


def fold_digest(h: int, *values: int) -> int:
    """Fold integers into a 64-bit running digest (splitmix64-style).

    Deterministic across runs and platforms, unlike built-in ``hash``.
    """
    for v in values:
        h = (h ^ (v & _MASK64)) & _MASK64
        h = (h + 0x9E3779B97F4A7C15) & _MASK64
        z = h
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        h = z ^ (z >> 31)
    return h


def observation_digest(obs: Observation) -> int:
    return fold_digest(len(obs), *obs)


# --- line-oriented episode fixtures ----------------------------------------


def dump_trajectory(traj: Trajectory) -> str:
    """Serialize to the fixture format: one ``t obs_csv action reward`` per line."""
    lines = []
    for t, s in enumerate(traj.steps):
        obs_csv = ",".join(str(v) for v in s.observation)
        lines.append(f"{t} {obs_csv} {s.action} {s.reward!r}")
    return "\n".join(lines) + "\n"


def load_trajectory(text: str, agent: int = 0) -> Trajectory:
    steps = []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        t_str, obs_csv, action_str, reward_str = line.split(" ")
        obs = tuple(int(v) for v in obs_csv.split(",")) if obs_csv else ()
        step = StepRecord(obs, int(action_str), float(reward_str))
        if int(t_str) != len(steps):
            raise ValueError(f"timestep {t_str} out of order")
        steps.append(step)
    traj = Trajectory(agent=agent, steps=steps)
    digests = history_digests(traj)
    for s, d in zip(traj.steps, digests):
        s.history_digest = d
    return traj


def history_digests(traj: Trajectory) -> list[int]:
    """Recompute per-step history digests for a trajectory.

    The digest at step t covers observations o_0..o_t and actions u_0..u_{t-1},
    i.e. everything the agent has seen when it chooses u_t.
    """
    out = []
    h = fold_digest(0x7A11, traj.agent)
    for s in traj.steps:
        h = fold_digest(h, *s.observation)
        out.append(h)
        h = fold_digest(h, s.action)
    return out
