import numpy as np
import pytest

from pivotmarl.core import Episode, GlobalTransition, StepRecord, Trajectory
from pivotmarl.envs import (
    ConfigError,
    EnvConfig,
    PRESETS,
    collective_truth,
    ground_truth_pivot,
    is_offbeat_reward,
    make_env,
)
from pivotmarl.envs.quarry import INSTALL, LEFT, NOOP, RIGHT
from pivotmarl.envs.stag_hunter import SHOOT


def rollout(env, policy):
    """policy(agent, t, legal) -> action; returns the finished Episode."""
    obs = env.reset()
    trajs = [Trajectory(agent=i) for i in range(env.n_agents)]
    transitions = []
    truth = {}
    done, t = False, 0
    while not done:
        state = env.state()
        actions = [policy(i, t, env.legal_actions(i)) for i in range(env.n_agents)]
        out = env.step(actions)
        for i in range(env.n_agents):
            trajs[i].steps.append(StepRecord(obs[i], actions[i], out.reward))
        transitions.append(GlobalTransition(state, (), out.reward, env.state(), out.done))
        if out.contributors:
            truth[t] = dict(out.contributors)
        obs, done = out.joint_observation, out.done
        t += 1
    return Episode(transitions, trajs, truth, out.task_success)


def scripted(plan):
    """plan: {(agent, t): action}; everything else NOOP."""
    return lambda agent, t, legal: plan.get((agent, t), 0)


class TestStagHunter:
    def test_reset_shows_own_and_stag_position_only(self):
        env = make_env("stag-hunter")
        obs = env.reset()
        # own position, stag position, own-arrow slots; nothing else
        assert obs[0][:4] == (0, 7, 14, 7)
        assert obs[1][:4] == (8, 7, 14, 7)
        assert obs[0][4:] == (0, 0, 0, 0)

    def test_observation_blind_to_other_agents(self):
        env = make_env("stag-hunter")
        env.reset()
        before = env.observations()[0]
        env.step([0, 1])  # agent 1 fires
        after = env.observations()[0]
        assert before == after  # agent 0 cannot see agent 1's arrow

    def test_same_seed_same_observations(self):
        a = make_env("stag-hunter", seed=5)
        b = make_env("stag-hunter", seed=5)
        assert a.reset() == b.reset()

    def test_canonical_success_plan(self):
        env = make_env("stag-hunter")
        ep = rollout(env, scripted({(0, 0): SHOOT, (1, 8): SHOOT}))
        assert len(ep) == 15
        assert ep.rewards() == pytest.approx([-0.1] * 14 + [10.0])
        assert ep.task_success

    def test_fig1_variant_success(self):
        env = make_env("stag-hunter-fig1")
        ep = rollout(env, scripted({(0, 0): SHOOT, (1, 5): SHOOT}))
        assert ep.task_success
        assert len(ep) == 11

    def test_noop_forever_pays_step_penalty(self):
        env = make_env("stag-hunter")
        ep = rollout(env, scripted({}))
        assert ep.rewards() == pytest.approx([-0.1] * 15)
        assert not ep.task_success

    def test_lone_arrow_lets_stag_escape(self):
        env = make_env("stag-hunter")
        ep = rollout(env, scripted({(1, 0): SHOOT}))
        # flight time 6: the stag escapes at t=6 and the episode ends there
        assert len(ep) == 7
        assert ep.rewards()[-1] == pytest.approx(5.0)
        assert not ep.task_success

    def test_continuing_variant_charges_the_volley(self):
        env = make_env("stag-hunter", escape_ends_episode=False, failure_penalty=8.0)
        ep = rollout(env, scripted({(1, 0): SHOOT}))
        assert len(ep) == 15
        assert ep.rewards()[6] == pytest.approx(5.0)
        assert ep.rewards()[14] == pytest.approx(-8.0)
        truth = ground_truth_pivot(ep)
        assert truth[6] == {1: 0}
        assert truth[14] == {1: 0}  # the end-of-hunt penalty blames the same commit

    def test_step_after_done_rejected(self):
        env = make_env("stag-hunter")
        rollout(env, scripted({}))
        with pytest.raises(RuntimeError):
            env.step([0, 0])

    def test_unknown_action_rejected(self):
        env = make_env("stag-hunter")
        env.reset()
        with pytest.raises(ValueError):
            env.step([0, 7])

    def test_shoot_masked_when_quiver_empty(self):
        env = make_env("stag-hunter")
        env.reset()
        env.step([SHOOT, 0])
        env.step([SHOOT, 0])
        assert env.legal_actions(0) == (0,)
        assert env.legal_actions(1) == (0, 1)


class TestGroundTruthOracle:
    def test_success_episode_pivots(self):
        env = make_env("stag-hunter")
        ep = rollout(env, scripted({(0, 0): SHOOT, (1, 8): SHOOT}))
        truth = ground_truth_pivot(ep)
        assert truth[14] == {0: 0, 1: 8}
        assert collective_truth(truth[14], 14) == 8
        assert is_offbeat_reward(truth[14], 14)

    def test_step_penalties_are_on_beat(self):
        env = make_env("stag-hunter")
        ep = rollout(env, scripted({(0, 0): SHOOT, (1, 8): SHOOT}))
        truth = ground_truth_pivot(ep)
        for t in range(14):
            assert truth[t] == {}
            assert collective_truth(truth[t], t) == t
            assert not is_offbeat_reward(truth[t], t)

    def test_zero_rewards_absent(self):
        env = make_env("stag-hunter", step_penalty=0.0)
        ep = rollout(env, scripted({}))
        assert ground_truth_pivot(ep) == {}

    def test_instant_actions_pivot_to_themselves(self):
        env = make_env("stag-hunter-instant")
        ep = rollout(env, scripted({(0, 3): SHOOT, (1, 3): SHOOT}))
        truth = ground_truth_pivot(ep)
        assert ep.task_success
        assert truth[3] == {0: 3, 1: 3}
        assert collective_truth(truth[3], 3) == 3
        assert not is_offbeat_reward(truth[3], 3)


class TestDeterminismAndEffects:
    def test_identical_rollouts(self):
        rng = np.random.default_rng(0)
        actions = [[int(rng.integers(2)), int(rng.integers(2))] for _ in range(15)]

        def run_once():
            env = make_env("stag-hunter", seed=9)
            env.reset()
            seq = []
            for acts in actions:
                legal = [env.legal_actions(i) for i in range(2)]
                acts = [a if a in legal[i] else 0 for i, a in enumerate(acts)]
                out = env.step(acts)
                seq.append((tuple(map(tuple, out.joint_observation)), out.reward, out.done))
                if out.done:
                    break
            return seq

        assert run_once() == run_once()

    def test_effects_resolve_exactly_once_or_never(self):
        env = make_env("stag-hunter")
        env.reset()
        env.step([SHOOT, 0])  # resolves at t=14
        env.step([0, SHOOT])  # agent1 at t=1 -> resolves at t=7 (escape)
        resolved = []
        done = False
        while not done:
            out = env.step([0, 0])
            if out.contributors:
                resolved.append(dict(out.contributors))
            done = out.done
        # the lone arrow resolved once; agent0's arrow never landed because
        # the episode ended first
        assert resolved == [{1: 1}]

    def test_instant_reward_depends_only_on_state_and_action(self):
        """With all durations zero, histories reaching the same state get the
        same reward for the same joint action."""
        outcomes = []
        for prefix in (2, 5, 9):  # different NOOP histories, same state
            env = make_env("stag-hunter-instant")
            env.reset()
            for _ in range(prefix):
                env.step([0, 0])
            state = env.state()
            out = env.step([SHOOT, SHOOT])
            outcomes.append((state, out.reward, out.task_success))
        states = {o[0] for o in outcomes}
        assert len(states) == 1
        assert len({(o[1], o[2]) for o in outcomes}) == 1


class TestQuarry:
    def test_reset_observation_fields(self):
        env = make_env("quarry")
        obs = env.reset()
        # own position, quarry position, own explosive status
        assert obs[0] == (2, 3, 0, 0, 0)
        assert obs[1] == (4, 3, 0, 0, 0)

    def test_coordinated_completion(self):
        env = make_env("quarry")
        plan = {
            (0, 0): RIGHT, (0, 1): INSTALL, (0, 2): LEFT, (0, 3): LEFT, (0, 4): LEFT,
            (1, 0): LEFT, (1, 5): INSTALL, (1, 6): RIGHT, (1, 7): RIGHT, (1, 8): RIGHT,
        }
        ep = rollout(env, scripted(plan))
        assert ep.task_success
        assert len(ep) == 11
        assert ep.rewards()[-1] == pytest.approx(10.0)
        truth = ground_truth_pivot(ep)
        assert truth[10] == {0: 1, 1: 5}

    def test_single_detonation_is_partial_and_penalized(self):
        env = make_env("quarry")
        plan = {(0, 0): RIGHT, (0, 1): INSTALL, (1, 0): RIGHT, (1, 1): RIGHT}
        ep = rollout(env, scripted(plan))
        # detonation at t=10 with one explosive; agent 0 stayed at the
        # quarry while agent 1 reached the right border
        assert len(ep) == 11
        assert ep.rewards()[-1] == pytest.approx(10 * 1 / 2 - 5 * 1 / 2)
        assert not ep.task_success

    def test_observation_shows_own_countdown_only(self):
        env = make_env("quarry")
        env.reset()
        env.step([RIGHT, NOOP])
        out = env.step([INSTALL, NOOP])
        # installed at t=1 with fuse 9: 8 steps left as seen from t=2
        assert out.joint_observation[0] == (3, 3, 1, 3, 8)
        assert out.joint_observation[1] == (4, 3, 0, 0, 0)

    def test_install_masked_away_from_quarry(self):
        env = make_env("quarry")
        env.reset()
        assert INSTALL not in env.legal_actions(0)
        env.step([RIGHT, NOOP])
        assert INSTALL in env.legal_actions(0)

    def test_movement_clamped_at_borders(self):
        env = make_env("quarry")
        env.reset()
        for _ in range(8):
            out = env.step([LEFT, RIGHT])
        assert out.joint_observation[0][0] == 0
        assert out.joint_observation[1][0] == 6


class TestAfforestation:
    def test_fixed_length_episodes(self):
        env = make_env("afforestation")
        ep = rollout(env, scripted({}))
        assert len(ep) == 13

    def test_coordinated_planting_wins(self):
        env = make_env("afforestation")
        plan = {}
        for agent in (0, 1):
            plan[(agent, 0)] = 1  # north 2 -> 3
            plan[(agent, 1)] = 1  # 3 -> 4
            plan[(agent, 2)] = 1  # 4 -> 5
            plan[(agent, 3)] = 3  # plant (matures at 3 + duration)
            for k, t in enumerate(range(4, 8)):
                plan[(agent, t)] = 2  # south back to the safe rows
        ep = rollout(env, scripted(plan))
        assert ep.task_success
        assert ep.rewards()[-1] == pytest.approx(10.0)
        truth = ground_truth_pivot(ep)
        assert truth[12] == {0: 3, 1: 3}

    def test_unsafe_farmers_are_penalized(self):
        env = make_env("afforestation")
        plan = {}
        for agent in (0, 1):
            plan[(agent, 0)] = 1
            plan[(agent, 1)] = 1
            plan[(agent, 2)] = 1
            plan[(agent, 3)] = 3
            # nobody returns south
        ep = rollout(env, scripted(plan))
        assert ep.rewards()[-1] == pytest.approx(10.0 - 5.0)
        assert ep.task_success  # trees grew; the farmers just got hurt

    def test_late_planting_fails(self):
        env = make_env("afforestation")
        plan = {(0, 0): 1, (0, 1): 1, (0, 2): 1, (0, 8): 3}
        # agent 0 plants at t=8 (matures at 16 > horizon); agent 1 never plants
        ep = rollout(env, scripted(plan))
        assert not ep.task_success
        truth = ground_truth_pivot(ep)
        assert truth[12] == {}


class TestConfigValidation:
    def test_bad_durations(self):
        with pytest.raises(ConfigError):
            make_env("stag-hunter", durations=(20, 6))
        with pytest.raises(ConfigError):
            make_env("stag-hunter", durations=(-1, 6))

    def test_bad_grid(self):
        with pytest.raises(ConfigError):
            make_env("quarry", grid=(2, 1))

    def test_unknown_preset(self):
        with pytest.raises(ConfigError):
            make_env("chess")

    def test_presets_validate(self):
        for name in PRESETS:
            env = make_env(name)
            env.reset()

    def test_timestep_appended_when_asked(self):
        env = make_env("stag-hunter", append_timestep=True)
        obs0 = env.reset()
        out = env.step([0, 0])
        assert obs0[0][-1] == 0
        assert out.joint_observation[0][-1] == 1
