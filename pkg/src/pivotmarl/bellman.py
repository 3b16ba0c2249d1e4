"""Bellman operator with reward redistribution, over explicit finite MDPs.

Used to verify the contraction property of TD learning on redistributed
rewards: the operator applies an arbitrary (Q-independent) rewrite of the
reward table and then the usual optimality backup, so it contracts in the
sup norm with modulus gamma.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


@dataclass
class ExplicitMDP:
    """Tabular MDP over joint actions: P[s, a, s'] and R[s, a]."""

    transition: np.ndarray  # (S, A, S) row-stochastic in s'
    reward: np.ndarray  # (S, A)
    gamma: float

    def __post_init__(self) -> None:
        s, a, s2 = self.transition.shape
        if s != s2 or self.reward.shape != (s, a):
            raise ValueError("inconsistent transition/reward shapes")
        if not np.allclose(self.transition.sum(axis=2), 1.0):
            raise ValueError("transition rows must sum to 1")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")

    @property
    def n_states(self) -> int:
        return self.reward.shape[0]

    @property
    def n_joint_actions(self) -> int:
        return self.reward.shape[1]


def random_mdp(
    n_states: int,
    n_joint_actions: int,
    gamma: float,
    rng: np.random.Generator,
) -> ExplicitMDP:
    raw = rng.random((n_states, n_joint_actions, n_states)) + 1e-3
    transition = raw / raw.sum(axis=2, keepdims=True)
    reward = rng.normal(size=(n_states, n_joint_actions))
    return ExplicitMDP(transition, reward, gamma)


def offbeat_bellman_apply(
    q: np.ndarray,
    mdp: ExplicitMDP,
    redistributor: Callable[[np.ndarray], np.ndarray] | None = None,
) -> np.ndarray:
    """(Gamma Q)(s, a) = R_hat(s, a) + gamma * E_{s'}[max_a' Q(s', a')]."""
    if q.shape != mdp.reward.shape:
        raise ValueError(f"Q shape {q.shape} does not match MDP {mdp.reward.shape}")
    reward = mdp.reward if redistributor is None else redistributor(mdp.reward)
    if reward.shape != mdp.reward.shape:
        raise ValueError("redistributor must preserve the reward table shape")
    next_value = q.max(axis=1)  # (S,)
    return reward + mdp.gamma * (mdp.transition @ next_value)


def fixed_point(
    mdp: ExplicitMDP,
    redistributor: Callable[[np.ndarray], np.ndarray] | None = None,
    tol: float = 1e-8,
    max_iter: int = 100_000,
) -> tuple[np.ndarray, int]:
    """Iterate from Q = 0 until the successive sup-norm difference < tol."""
    q = np.zeros_like(mdp.reward)
    for it in range(1, max_iter + 1):
        q_next = offbeat_bellman_apply(q, mdp, redistributor)
        if np.max(np.abs(q_next - q)) < tol:
            return q_next, it
        q = q_next
    raise RuntimeError(f"no fixed point within {max_iter} iterations")
