"""Reward redistribution and tabular TD training (IQL / VDN).

Function approximation is replaced by tabular Q keyed on a digest of each
agent's full action-observation history prefix, which realizes the same
conditioning as a recurrent agent exactly in these small deterministic
games. The redistribution pass moves each delayed reward back to its pivot
timestep, leaving a beta-scaled residual at the original slot; TD targets
are then formed on the rewritten reward sequence.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .core import (
    DurativeAction,
    Episode,
    GlobalTransition,
    ReplayBuffer,
    StepRecord,
    Trajectory,
    fold_digest,
)
from .envs.base import GridEnv
from .memory import MemoryStore
from .search import PivotMap, search_pivot_timesteps, subgraph_stamps

LEARNERS = ("iql", "vdn")
ESTIMATORS = ("legem", "1step", "nstep", "tdlambda")
MEMORY_SCHEMES = ("scheme1", "scheme2", "off")


@dataclass(frozen=True)
class TrainerConfig:
    learner: str = "vdn"
    target_estimator: str = "legem"
    memory_scheme: str = "scheme1"
    nstep_n: int = 5
    td_lambda: float = 0.9
    gamma: float = 0.99
    beta: float = 1e-5
    learning_rate: float = 0.5
    batch_size: int = 32
    buffer_capacity: int = 5_000
    target_sync_interval: int = 200
    train_interval_episodes: int = 1
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_anneal_steps: int = 50_000
    eval_epsilon: float = 0.0
    path_cap: int = 10_000
    key_mode: str = "exact"
    simhash_bits: int = 32

    def validate(self) -> None:
        if self.learner not in LEARNERS:
            raise ValueError(f"learner must be one of {LEARNERS}")
        if self.target_estimator not in ESTIMATORS:
            raise ValueError(f"target_estimator must be one of {ESTIMATORS}")
        if self.memory_scheme not in MEMORY_SCHEMES:
            raise ValueError(f"memory_scheme must be one of {MEMORY_SCHEMES}")
        if self.target_estimator == "legem" and self.memory_scheme == "off":
            raise ValueError("the legem estimator needs a memory scheme")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        if not 0.0 < self.beta < 1.0:
            raise ValueError("beta must lie in (0, 1)")
        if self.nstep_n < 1:
            raise ValueError("nstep_n must be >= 1")
        if not 0.0 <= self.td_lambda <= 1.0:
            raise ValueError("td_lambda must lie in [0, 1]")

    def epsilon(self, env_steps: int) -> float:
        frac = min(1.0, env_steps / max(1, self.eps_anneal_steps))
        return self.eps_start + frac * (self.eps_end - self.eps_start)


# --- reward redistribution ---------------------------------------------------


@dataclass
class RedistributedEpisode:
    original: list[float]
    redistributed: list[float]
    kappa: PivotMap


def redistribute(rewards: list[float], kappa: PivotMap, beta: float) -> RedistributedEpisode:
    """One ascending pass: each reward with pivot e_t < t is written onto its
    pivot slot (overwriting it) and shrunk to beta * r_t at the source.

    Later iterations see earlier updates, so colliding pivots resolve
    last-writer-wins.
    """
    if not 0.0 < beta < 1.0:
        raise ValueError("beta must lie in (0, 1)")
    out = list(rewards)
    for t in sorted(kappa):
        e = kappa[t]
        if e > t:
            raise ValueError(f"pivot {e} after its reward timestep {t}")
        if e < t:
            out[e] = out[t]
            out[t] = beta * out[t]
    return RedistributedEpisode(list(rewards), out, dict(kappa))


# --- TD target estimators ----------------------------------------------------
# bootstrap_next[t] is the (learner-specific) value of the state reached
# after step t; terminal steps carry 0.


def onestep_targets(rewards: list[float], bootstrap_next: list[float], gamma: float) -> list[float]:
    last = len(rewards) - 1
    return [
        r + (gamma * bootstrap_next[t] if t < last else 0.0)
        for t, r in enumerate(rewards)
    ]


def legem_targets(
    rewards: list[float],
    bootstrap_next: list[float],
    gamma: float,
    kappa: PivotMap,
    beta: float,
) -> tuple[list[float], RedistributedEpisode]:
    red = redistribute(rewards, kappa, beta)
    return onestep_targets(red.redistributed, bootstrap_next, gamma), red


def nstep_targets(rewards: list[float], bootstrap_next: list[float], gamma: float, n: int) -> list[float]:
    """Forward-view n-step returns over raw rewards; the tail truncates at
    the terminal step without bootstrapping."""
    if n < 1:
        raise ValueError("n must be >= 1")
    horizon = len(rewards)
    out = []
    for t in range(horizon):
        m = min(n, horizon - t)
        g = 0.0
        scale = 1.0
        for k in range(m):
            g += scale * rewards[t + k]
            scale *= gamma
        if t + n < horizon:
            g += scale * bootstrap_next[t + n - 1]
        out.append(g)
    return out


def tdlambda_targets(rewards: list[float], bootstrap_next: list[float], gamma: float, lam: float) -> list[float]:
    """Recursive lambda-returns over raw rewards; lambda=0 is the one-step
    target and lambda=1 the Monte-Carlo return."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lambda must lie in [0, 1]")
    horizon = len(rewards)
    out = [0.0] * horizon
    out[-1] = rewards[-1]
    for t in range(horizon - 2, -1, -1):
        out[t] = rewards[t] + gamma * ((1.0 - lam) * bootstrap_next[t] + lam * out[t + 1])
    return out


def vdn_mix(q_values: list[float]) -> float:
    """VDN joint value: the arithmetic sum of the chosen-action values."""
    return float(sum(q_values))


# --- tabular Q ----------------------------------------------------------------


class QTable:
    """Per-agent action values keyed by history digest, default 0.

    Internally one list of per-action values per digest, which keeps the hot
    loops to a single dict lookup.
    """

    def __init__(self, n_actions: int) -> None:
        self.n_actions = n_actions
        self._rows: dict[int, list[float]] = {}

    def row(self, digest: int) -> list[float] | None:
        return self._rows.get(digest)

    def get(self, digest: int, action: int) -> float:
        row = self._rows.get(digest)
        return row[action] if row is not None else 0.0

    def add(self, digest: int, action: int, delta: float) -> None:
        row = self._rows.get(digest)
        if row is None:
            row = self._rows[digest] = [0.0] * self.n_actions
        row[action] += delta

    def max_over(self, digest: int, legal: tuple[int, ...]) -> float:
        row = self._rows.get(digest)
        if row is None:
            return 0.0
        if not legal:
            return max(row)
        return max(row[a] for a in legal)

    def argmax(self, digest: int, legal: tuple[int, ...]) -> int:
        row = self._rows.get(digest)
        if row is None:
            return legal[0]
        best, best_q = legal[0], row[legal[0]]
        for a in legal[1:]:
            if row[a] > best_q:
                best, best_q = a, row[a]
        return best

    def copy(self) -> "QTable":
        dup = QTable(self.n_actions)
        dup._rows = {k: list(v) for k, v in self._rows.items()}
        return dup

    def __len__(self) -> int:
        return len(self._rows)

    def dump(self, out: io.TextIOBase) -> None:
        for digest in sorted(self._rows):
            row = self._rows[digest]
            out.write(f"{digest:x} " + " ".join(repr(v) for v in row) + "\n")


# --- the trainer ----------------------------------------------------------------


class Trainer:
    """Collects episodes, maintains memory/replay, and runs TD updates."""

    def __init__(self, env: GridEnv, config: TrainerConfig, seed: int = 0) -> None:
        config.validate()
        self.env = env
        self.config = config
        self.rng = np.random.default_rng(seed)
        self.n_agents = env.n_agents
        self.n_actions = env.n_actions
        self.q = [QTable(self.n_actions) for _ in range(self.n_agents)]
        self.q_target = [t.copy() for t in self.q]
        self.buffer = ReplayBuffer(config.buffer_capacity)
        self.memory: MemoryStore | None = None
        if config.memory_scheme != "off":
            self.memory = MemoryStore(
                self.n_agents,
                env.horizon + 1,
                key_mode=config.key_mode,
                simhash_bits=config.simhash_bits,
                seed=seed,
            )
        self.env_steps = 0
        self.episodes = 0
        self.train_steps = 0
        # pivot maps memoized per episode content, revalidated against the
        # version stamps of the sub-graphs the search reads
        self._kappa_cache: dict[int, tuple[tuple[int, ...], PivotMap]] = {}

    # -- acting ----------------------------------------------------------------

    def act(self, agent: int, digest: int, epsilon: float, legal: tuple[int, ...]) -> int:
        if epsilon > 0.0 and self.rng.random() < epsilon:
            return int(legal[self.rng.integers(len(legal))])
        return self.q[agent].argmax(digest, legal)

    def sync_targets(self) -> None:
        self.q_target = [t.copy() for t in self.q]

    # -- episode collection ------------------------------------------------------

    def run_episode(self, epsilon: float, collect: bool = True) -> Episode:
        """Play one episode. With ``collect`` the episode is inserted into
        the replay buffer and the episodic memory and counts env steps."""
        env = self.env
        obs = env.reset()
        digests = [fold_digest(0x7A11, i) for i in range(self.n_agents)]
        trajectories = [Trajectory(agent=i) for i in range(self.n_agents)]
        transitions: list[GlobalTransition] = []
        pivot_truth: dict[int, dict[int, int]] = {}
        done = False
        t = 0
        success = False
        while not done:
            state = env.state()
            actions = []
            step_digests = []
            legal_sets = []
            for i in range(self.n_agents):
                h = fold_digest(digests[i], *obs[i])
                step_digests.append(h)
                legal = env.legal_actions(i)
                legal_sets.append(legal)
                a = self.act(i, h, epsilon, legal)
                actions.append(a)
                digests[i] = fold_digest(h, a)
            outcome = env.step(actions)
            joint = tuple(
                DurativeAction(
                    a,
                    env.config.durations[i] if a == getattr(env, "durative_action", -1) else 0,
                )
                for i, a in enumerate(actions)
            )
            transitions.append(
                GlobalTransition(state, joint, outcome.reward, env.state(), outcome.done)
            )
            for i in range(self.n_agents):
                trajectories[i].steps.append(
                    StepRecord(obs[i], actions[i], outcome.reward, step_digests[i], legal_sets[i])
                )
            if outcome.contributors:
                pivot_truth[t] = dict(outcome.contributors)
            obs = outcome.joint_observation
            done = outcome.done
            success = outcome.task_success
            t += 1
        episode = Episode(transitions, trajectories, pivot_truth, success)
        episode.digest = episode.content_digest()
        if collect:
            self.env_steps += t
            self.episodes += 1
            self.buffer.insert(episode)
            if self.memory is not None:
                self.memory.update(trajectories)
        return episode

    # -- training ------------------------------------------------------------------

    def _bootstrap_next(self, episode: Episode) -> list[list[float]]:
        """Per-agent value of the state reached after each step (0 terminal)."""
        cols, _rewards = episode.columns()
        horizon = len(episode)
        values = []
        for i in range(self.n_agents):
            digests, _actions, legals = cols[i]
            rows = self.q_target[i]._rows
            vals = [0.0] * horizon
            for t in range(horizon - 1):
                row = rows.get(digests[t + 1])
                if row is not None:
                    legal = legals[t + 1]
                    vals[t] = max(row[a] for a in legal) if legal else max(row)
            values.append(vals)
        return values

    def _episode_kappa(self, episode: Episode) -> PivotMap:
        stamps = subgraph_stamps(episode, self.memory)
        hit = self._kappa_cache.get(episode.digest)
        if hit is not None and hit[0] == stamps:
            return hit[1]
        kappa = search_pivot_timesteps(
            episode,
            self.memory,
            scheme=self.config.memory_scheme,
            path_cap=self.config.path_cap,
        )
        if len(self._kappa_cache) > 8192:
            self._kappa_cache.clear()
        self._kappa_cache[episode.digest] = (stamps, kappa)
        return kappa

    def _episode_targets(self, episode: Episode) -> list[list[float]]:
        """Per-agent TD target per timestep, per the configured estimator."""
        cfg = self.config
        _cols, rewards = episode.columns()
        boot = self._bootstrap_next(episode)
        if cfg.learner == "vdn":
            joint = [sum(vals) for vals in zip(*boot)]
            boot_for = [joint] * self.n_agents
        else:
            boot_for = boot
        if cfg.target_estimator == "legem":
            kappa = self._episode_kappa(episode)
            red = redistribute(rewards, kappa, cfg.beta).redistributed
            return [onestep_targets(red, boot_for[i], cfg.gamma) for i in range(self.n_agents)]
        if cfg.target_estimator == "1step":
            return [onestep_targets(rewards, boot_for[i], cfg.gamma) for i in range(self.n_agents)]
        if cfg.target_estimator == "nstep":
            return [
                nstep_targets(rewards, boot_for[i], cfg.gamma, cfg.nstep_n)
                for i in range(self.n_agents)
            ]
        return [
            tdlambda_targets(rewards, boot_for[i], cfg.gamma, cfg.td_lambda)
            for i in range(self.n_agents)
        ]

    def train_step(self) -> None:
        cfg = self.config
        batch = self.buffer.sample(cfg.batch_size, self.rng)
        alpha = cfg.learning_rate
        n_agents = self.n_agents
        q_rows = [table._rows for table in self.q]
        n_actions = self.n_actions
        for episode in batch:
            targets = self._episode_targets(episode)
            cols, _rewards = episode.columns()
            horizon = len(episode)
            if cfg.learner == "vdn":
                tgt = targets[0]
                for t in range(horizon):
                    mixed = 0.0
                    slots = []
                    for i in range(n_agents):
                        digests, actions, _legals = cols[i]
                        rows = q_rows[i]
                        d, a = digests[t], actions[t]
                        row = rows.get(d)
                        if row is None:
                            row = rows[d] = [0.0] * n_actions
                        mixed += row[a]
                        slots.append((row, a))
                    delta = alpha * (tgt[t] - mixed)
                    for row, a in slots:
                        row[a] += delta
            else:
                for i in range(n_agents):
                    digests, actions, _legals = cols[i]
                    rows = q_rows[i]
                    tgt = targets[i]
                    for t in range(horizon):
                        d, a = digests[t], actions[t]
                        row = rows.get(d)
                        if row is None:
                            row = rows[d] = [0.0] * n_actions
                        row[a] += alpha * (tgt[t] - row[a])
        self.train_steps += 1
        if self.train_steps % cfg.target_sync_interval == 0:
            self.sync_targets()

    # -- evaluation -------------------------------------------------------------

    def evaluate(self, episodes: int) -> tuple[float, float]:
        """(mean return, success rate) over fresh greedy episodes."""
        returns = []
        successes = 0
        for _ in range(episodes):
            ep = self.run_episode(self.config.eval_epsilon, collect=False)
            returns.append(sum(ep.rewards()))
            successes += 1 if ep.task_success else 0
        return float(np.mean(returns)), successes / episodes

    # -- checkpointing ------------------------------------------------------------

    def dump_checkpoint(self, out: io.TextIOBase) -> None:
        cfg = self.config
        out.write("# trainer checkpoint\n")
        for key in sorted(vars(cfg) if hasattr(cfg, "__dict__") else cfg.__dataclass_fields__):
            out.write(f"config.{key}={getattr(cfg, key)!r}\n")
        for i, table in enumerate(self.q):
            out.write(f"# agent {i} ({len(table)} rows)\n")
            table.dump(out)
