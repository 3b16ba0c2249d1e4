"""Stag-hunter: immobile archers must hit the stag simultaneously.

Each agent owns a small quiver of arrows. SHOOT launches an arrow that
strikes after the agent's fixed flight duration; the stag is caught only if
every agent lands an arrow on the same timestep. A volley with fewer arrows
wounds the stag, which escapes: the team collects a partial reward right
away, and (in the continuing variant) pays for the lost hunt at the end of
the episode, both consequences of the same mistimed commits. Agents observe
their own position, the stag's position and the state of their own arrows;
they never see the other hunters.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..core import Observation
from .base import EnvConfig, GridEnv, PendingEffect, StepOutcome

NOOP = 0
SHOOT = 1

ARROW_READY = 0
ARROW_FLYING = 1
ARROW_LANDED = 2


@dataclass
class _Arrow:
    effect: PendingEffect
    landed: bool = False


class StagHunterEnv(GridEnv):
    action_names = ("NOOP", "SHOOT")
    durative_action = SHOOT

    def __init__(self, config: EnvConfig, quiver: int = 2) -> None:
        super().__init__(config)
        self.quiver_size = quiver
        w, h = config.grid
        self.stag_home = (w - 1, h // 2)
        # archers stand at their flight distance from the stag
        self.agent_pos = [
            (max(0, self.stag_home[0] - config.durations[i]), h // 2)
            for i in range(config.n_agents)
        ]
        self.arrows: list[list[_Arrow]] = []
        self.stag_present = True
        self.escape_volley: dict[int, int] = {}

    def _reset_state(self) -> None:
        self.arrows = [[] for _ in range(self.n_agents)]
        self.stag_present = True
        self.escape_volley = {}

    def legal_actions(self, agent: int) -> tuple[int, ...]:
        if len(self.arrows[agent]) < self.quiver_size:
            return (NOOP, SHOOT)
        return (NOOP,)

    def _arrow_slots(self, agent: int) -> list[int]:
        slots = []
        for arrow in self.arrows[agent]:
            if arrow.landed:
                slots.extend((ARROW_LANDED, self.t - arrow.effect.resolve_time))
            else:
                slots.extend((ARROW_FLYING, arrow.effect.resolve_time - self.t))
        while len(slots) < 2 * self.quiver_size:
            slots.extend((ARROW_READY, 0))
        return slots

    def _observe(self, agent: int) -> Observation:
        ax, ay = self.agent_pos[agent]
        sx, sy = self.stag_home if self.stag_present else (-1, -1)
        return (ax, ay, sx, sy, *self._arrow_slots(agent))

    def state(self) -> tuple[int, ...]:
        flat = [1 if self.stag_present else 0]
        for agent in range(self.n_agents):
            flat.extend(self._arrow_slots(agent))
        return tuple(flat)

    def _apply_step(self, actions: list[int]) -> StepOutcome:
        t = self.t
        cfg = self.config
        for agent, action in enumerate(actions):
            if action == SHOOT and len(self.arrows[agent]) < self.quiver_size:
                effect = PendingEffect(agent, SHOOT, t, t + cfg.durations[agent])
                self.arrows[agent].append(_Arrow(effect))

        landing: dict[int, int] = {}
        for agent in range(self.n_agents):
            for arrow in self.arrows[agent]:
                if not arrow.landed and arrow.effect.resolve_time == t:
                    arrow.landed = True
                    # one agent cannot land two arrows at once (distinct
                    # commit times, equal duration)
                    landing[agent] = arrow.effect.commit_time

        if landing and self.stag_present:
            hits = len(landing)
            if hits == self.n_agents:
                return StepOutcome(
                    [], cfg.task_reward, done=True,
                    contributors=landing, task_success=True, event="catch",
                )
            # partial volley: the stag escapes wounded
            self.stag_present = False
            self.escape_volley = dict(landing)
            partial = (
                cfg.partial_per_hit * hits
                if cfg.partial_per_hit is not None
                else cfg.task_reward * hits / self.n_agents
            )
            if cfg.escape_ends_episode:
                return StepOutcome(
                    [], partial, done=True,
                    contributors=landing, task_success=False, event="escape",
                )
            if t == self.horizon:
                # the lost hunt is settled on the spot
                return StepOutcome(
                    [], partial - cfg.failure_penalty, done=True,
                    contributors=landing, task_success=False, event="escape",
                )
            return StepOutcome([], partial, done=False, contributors=landing, event="escape")

        if t == self.horizon and not self.stag_present:
            # the episode ends with the stag long gone: the mistimed volley
            # that let it escape pays the failure penalty
            return StepOutcome(
                [], -cfg.failure_penalty, done=True,
                contributors=dict(self.escape_volley), event="hunt-failed",
            )
        return StepOutcome([], cfg.step_penalty, done=False)
