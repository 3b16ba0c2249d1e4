"""Quarry: timed explosive installation on a one-dimensional strip.

Agents walk along the strip, install one explosive each at the quarry cell
and retreat. Each agent's explosive has its own fuse; the episode ends at
the first detonation (or at timeout). The team is rewarded by the fraction
of explosives detonating on that step and penalized for every agent caught
outside the safe border cells. Completing the task therefore requires
installing at staggered times so all fuses run out together, with everyone
clear of the blast.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..core import Observation
from .base import ConfigError, EnvConfig, GridEnv, PendingEffect, StepOutcome

NOOP = 0
LEFT = 1
RIGHT = 2
INSTALL = 3


@dataclass
class _Explosive:
    effect: PendingEffect
    position: int


class QuarryEnv(GridEnv):
    action_names = ("NOOP", "LEFT", "RIGHT", "INSTALL")
    durative_action = INSTALL

    def __init__(self, config: EnvConfig) -> None:
        super().__init__(config)
        self.width = config.grid[0]
        if self.width < 3:
            raise ConfigError("quarry strip needs width >= 3")
        self.quarry_x = self.width // 2
        self.safe_cells = (0, self.width - 1)
        self.start_pos = [
            self.quarry_x - 1 if i % 2 == 0 else self.quarry_x + 1
            for i in range(config.n_agents)
        ]
        self.pos: list[int] = []
        self.explosives: list[_Explosive | None] = []

    def _reset_state(self) -> None:
        self.pos = list(self.start_pos)
        self.explosives = [None] * self.n_agents

    def legal_actions(self, agent: int) -> tuple[int, ...]:
        legal = [NOOP, LEFT, RIGHT]
        if self.pos[agent] == self.quarry_x and self.explosives[agent] is None:
            legal.append(INSTALL)
        return tuple(legal)

    def _observe(self, agent: int) -> Observation:
        expl = self.explosives[agent]
        if expl is None:
            placed, ex, cd = 0, 0, 0
        else:
            placed, ex, cd = 1, expl.position, expl.effect.resolve_time - self.t
        return (self.pos[agent], self.quarry_x, placed, ex, cd)

    def state(self) -> tuple[int, ...]:
        flat = list(self.pos)
        for expl in self.explosives:
            flat.extend((0, 0, 0) if expl is None else (1, expl.position, expl.effect.resolve_time - self.t))
        return tuple(flat)

    def _apply_step(self, actions: list[int]) -> StepOutcome:
        t = self.t
        for agent, action in enumerate(actions):
            if action == LEFT:
                self.pos[agent] = max(0, self.pos[agent] - 1)
            elif action == RIGHT:
                self.pos[agent] = min(self.width - 1, self.pos[agent] + 1)
            elif action == INSTALL:
                if self.pos[agent] == self.quarry_x and self.explosives[agent] is None:
                    effect = PendingEffect(agent, INSTALL, t, t + self.config.durations[agent])
                    self.explosives[agent] = _Explosive(effect, self.pos[agent])

        detonated: dict[int, int] = {}
        for agent, expl in enumerate(self.explosives):
            if expl is not None and expl.effect.resolve_time == t:
                detonated[agent] = expl.effect.commit_time

        if detonated:
            k = len(detonated)
            unsafe = sum(1 for p in self.pos if p not in self.safe_cells)
            reward = (
                self.config.task_reward * k / self.n_agents
                + self.config.safety_penalty * unsafe / self.n_agents
            )
            return StepOutcome(
                [],
                reward,
                done=True,
                contributors=detonated,
                task_success=k == self.n_agents,
                event="detonation",
            )
        return StepOutcome([], self.config.step_penalty, done=False)
