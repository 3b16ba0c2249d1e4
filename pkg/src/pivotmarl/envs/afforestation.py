"""Afforestation: plant trees early enough to stop the sandstorm.

Farmers walk a north-south strip. Trees may be planted in the northern
cells; a tree planted at time t matures after the owner's growth duration.
The sandstorm always strikes while the final timestep is processed: the team
is rewarded by the fraction of mature trees and penalized for each farmer
still outside the southern safe cells. Episodes always run the full horizon,
so every trajectory has the same length.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..core import Observation
from .base import ConfigError, EnvConfig, GridEnv, PendingEffect, StepOutcome

NOOP = 0
NORTH = 1
SOUTH = 2
PLANT = 3


@dataclass
class _Tree:
    effect: PendingEffect
    position: int


class AfforestationEnv(GridEnv):
    action_names = ("NOOP", "NORTH", "SOUTH", "PLANT")
    durative_action = PLANT
    storm_warning = 2  # steps before the storm at which it becomes observable

    def __init__(self, config: EnvConfig) -> None:
        super().__init__(config)
        self.height = config.grid[0]
        if self.height < 4:
            raise ConfigError("afforestation strip needs height >= 4")
        self.plant_cells = (self.height - 2, self.height - 1)
        self.safe_cells = (0, 1)
        self.start_pos = [2] * config.n_agents
        self.pos: list[int] = []
        self.trees: list[_Tree | None] = []

    def _reset_state(self) -> None:
        self.pos = list(self.start_pos)
        self.trees = [None] * self.n_agents

    def legal_actions(self, agent: int) -> tuple[int, ...]:
        legal = [NOOP, NORTH, SOUTH]
        if self.pos[agent] in self.plant_cells and self.trees[agent] is None:
            legal.append(PLANT)
        return tuple(legal)

    def _observe(self, agent: int) -> Observation:
        tree = self.trees[agent]
        if tree is None:
            planted, ty, cd = 0, 0, 0
        else:
            planted, ty, cd = 1, tree.position, max(0, tree.effect.resolve_time - self.t)
        steps_left = self.horizon - self.t
        storm = steps_left if steps_left <= self.storm_warning else 0
        return (self.pos[agent], planted, ty, cd, storm)

    def state(self) -> tuple[int, ...]:
        flat = list(self.pos)
        for tree in self.trees:
            flat.extend((0, 0, 0) if tree is None else (1, tree.position, max(0, tree.effect.resolve_time - self.t)))
        flat.append(min(self.storm_warning + 1, self.horizon - self.t))
        return tuple(flat)

    def _apply_step(self, actions: list[int]) -> StepOutcome:
        t = self.t
        for agent, action in enumerate(actions):
            if action == NORTH:
                self.pos[agent] = min(self.height - 1, self.pos[agent] + 1)
            elif action == SOUTH:
                self.pos[agent] = max(0, self.pos[agent] - 1)
            elif action == PLANT:
                if self.pos[agent] in self.plant_cells and self.trees[agent] is None:
                    effect = PendingEffect(agent, PLANT, t, t + self.config.durations[agent])
                    self.trees[agent] = _Tree(effect, self.pos[agent])

        if t == self.horizon:  # the storm strikes on the final step
            mature = {
                agent: tree.effect.commit_time
                for agent, tree in enumerate(self.trees)
                if tree is not None and tree.effect.resolve_time <= t
            }
            k = len(mature)
            unsafe = sum(1 for p in self.pos if p not in self.safe_cells)
            reward = (
                self.config.task_reward * k / self.n_agents
                + self.config.safety_penalty * unsafe / self.n_agents
            )
            return StepOutcome(
                [],
                reward,
                done=True,
                contributors=mature,
                task_success=k == self.n_agents,
                event="storm",
            )
        return StepOutcome([], self.config.step_penalty, done=False)
