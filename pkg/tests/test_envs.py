"""Tests for the credit-assignment bandit, point-mass control, and noise."""

from __future__ import annotations

import itertools

import numpy as np
import pytest

from decq.core import GlobalAction, Transition
from decq.envs import (
    NoiseWrapperConfig,
    NoisyEnv,
    PointMassConfig,
    PointMassEnv,
    TabularCreditConfig,
    TabularCreditEnv,
    point_mass_step,
    tabular_credit_step,
    wrap_noise,
)


class TestTabularCredit:
    def test_optimal_action_pays_plus_one(self):
        cfg = TabularCreditConfig(N=3, n=4)
        reward, done = tabular_credit_step(cfg, GlobalAction((0, 0, 0)))
        assert reward == 1.0 and done is True

    def test_one_dimension_off_pays_minus_one(self):
        cfg = TabularCreditConfig(N=3, n=4)
        reward, done = tabular_credit_step(cfg, GlobalAction((0, 1, 0)))
        assert reward == -1.0 and done is True

    def test_exactly_one_positive_action(self):
        cfg = TabularCreditConfig(N=2, n=3, optimal=GlobalAction((1, 2)))
        rewards = [
            tabular_credit_step(cfg, GlobalAction(a))[0]
            for a in itertools.product(range(3), repeat=2)
        ]
        assert rewards.count(1.0) == 1
        assert rewards.count(-1.0) == 8
        assert tabular_credit_step(cfg, GlobalAction((1, 2)))[0] == 1.0

    def test_default_optimal_is_first_index_tuple(self):
        cfg = TabularCreditConfig(N=4, n=5)
        assert tuple(cfg.optimal) == (0, 0, 0, 0)
        assert cfg.spec.sizes == (5, 5, 5, 5)
        assert cfg.spec.num_atomic == 625

    def test_env_wrapper_single_step_episodes(self):
        env = TabularCreditEnv(TabularCreditConfig(N=2, n=3))
        state = env.reset()
        assert state.shape == (1,) and state[0] == 0.0
        next_state, reward, done = env.step(GlobalAction((0, 0)))
        assert reward == 1.0 and done is True
        assert np.array_equal(next_state, np.zeros(1))

    def test_invalid_configs_rejected(self):
        with pytest.raises(ValueError):
            TabularCreditConfig(N=0, n=3)
        with pytest.raises(ValueError):
            TabularCreditConfig(N=2, n=1)
        with pytest.raises(ValueError):
            TabularCreditConfig(N=2, n=3, optimal=GlobalAction((0, 3)))

    def test_invalid_action_rejected(self):
        cfg = TabularCreditConfig(N=2, n=3)
        with pytest.raises(ValueError):
            tabular_credit_step(cfg, GlobalAction((0, 0, 0)))


class TestPointMass:
    def test_levels_are_symmetric_with_zero_middle(self):
        np.testing.assert_allclose(PointMassConfig(N=2, bins=3).levels, [-1.0, 0.0, 1.0])
        np.testing.assert_allclose(
            PointMassConfig(N=2, bins=5).levels, [-1.0, -0.5, 0.0, 0.5, 1.0]
        )

    def test_zero_action_at_target_gives_zero_reward(self):
        cfg = PointMassConfig(N=3, bins=3)
        next_state, reward, done = point_mass_step(np.zeros(3), GlobalAction((1, 1, 1)), cfg)
        assert np.array_equal(next_state, np.zeros(3))
        assert reward == 0.0
        assert done is False

    def test_displacement_and_reward_formula(self):
        cfg = PointMassConfig(N=2, bins=3, step_scale=0.1)
        next_state, reward, _ = point_mass_step(np.array([0.5, -0.5]), GlobalAction((0, 2)), cfg)
        np.testing.assert_allclose(next_state, [0.4, -0.4])
        expected = -np.linalg.norm([0.4, -0.4]) / np.sqrt(2)
        assert reward == pytest.approx(expected, rel=1e-12)

    def test_states_clamped_to_unit_box(self):
        cfg = PointMassConfig(N=1, bins=3, step_scale=0.5)
        state = np.array([0.9])
        for _ in range(5):
            state, _, _ = point_mass_step(state, GlobalAction((2,)), cfg)
        assert state[0] == 1.0

    def test_done_exactly_at_horizon(self):
        cfg = PointMassConfig(N=1, bins=3, horizon=3)
        assert point_mass_step(np.zeros(1), GlobalAction((1,)), cfg, t=1)[2] is False
        assert point_mass_step(np.zeros(1), GlobalAction((1,)), cfg, t=2)[2] is True

    def test_reward_bounded(self):
        cfg = PointMassConfig(N=4, bins=3)
        rng = np.random.default_rng(0)
        for _ in range(50):
            state = rng.uniform(-1, 1, size=4)
            action = GlobalAction(tuple(rng.integers(0, 3, size=4).tolist()))
            _, reward, _ = point_mass_step(state, action, cfg)
            assert -2.0 <= reward <= 0.0

    def test_env_episode_bookkeeping(self):
        env = PointMassEnv(PointMassConfig(N=2, bins=3, horizon=4), seed=5)
        state = env.reset()
        assert state.shape == (2,)
        assert np.all(np.abs(state) <= 1.0)
        steps = 0
        done = False
        while not done:
            _, _, done = env.step(GlobalAction((1, 1)))
            steps += 1
        assert steps == 4

    def test_env_reset_is_seeded(self):
        a = PointMassEnv(PointMassConfig(N=3), seed=7)
        b = PointMassEnv(PointMassConfig(N=3), seed=7)
        assert np.array_equal(a.reset(), b.reset())
        assert not np.array_equal(a.reset(), PointMassEnv(PointMassConfig(N=3), seed=8).reset())

    def test_nonzero_target_reward(self):
        cfg = PointMassConfig(N=1, bins=3, target=(0.5,))
        _, reward, _ = point_mass_step(np.array([0.5]), GlobalAction((1,)), cfg)
        assert reward == 0.0

    def test_invalid_configs_rejected(self):
        with pytest.raises(ValueError):
            PointMassConfig(N=2, bins=4)
        with pytest.raises(ValueError):
            PointMassConfig(N=2, bins=1)
        with pytest.raises(ValueError):
            PointMassConfig(N=2, step_scale=0.0)
        with pytest.raises(ValueError):
            PointMassConfig(N=2, target=(0.0,))
        with pytest.raises(ValueError):
            PointMassConfig(N=1, target=(1.5,))

    def test_state_shape_checked(self):
        cfg = PointMassConfig(N=2)
        with pytest.raises(ValueError):
            point_mass_step(np.zeros(3), GlobalAction((1, 1)), cfg)


def constant_stream(k: int) -> list[Transition]:
    return [
        Transition(
            state=np.array([float(i)]),
            action=GlobalAction((0,)),
            reward=0.5,
            next_state=np.array([float(i + 1)]),
            done=(i == k - 1),
        )
        for i in range(k)
    ]


class TestNoise:
    def test_zero_sigma_is_exact_identity(self):
        stream = constant_stream(5)
        rng = np.random.default_rng(0)
        before = rng.bit_generator.state
        out = list(wrap_noise(stream, NoiseWrapperConfig(), rng))
        assert all(a is b for a, b in zip(out, stream))
        assert rng.bit_generator.state == before

    def test_reward_noise_mean_reverts(self):
        stream = constant_stream(4000)
        rng = np.random.default_rng(1)
        out = list(wrap_noise(stream, NoiseWrapperConfig(reward_sigma=0.3), rng))
        rewards = np.array([t.reward for t in out])
        assert abs(rewards.mean() - 0.5) < 4 * 0.3 / np.sqrt(4000)
        assert np.std(rewards) == pytest.approx(0.3, rel=0.1)

    def test_state_noise_leaves_rewards_alone(self):
        stream = constant_stream(10)
        out = list(wrap_noise(stream, NoiseWrapperConfig(state_sigma=0.1), np.random.default_rng(2)))
        assert all(t.reward == 0.5 for t in out)
        assert all(not np.array_equal(t.state, s.state) for t, s in zip(out, stream))

    def test_noise_stream_reproducible(self):
        cfg = NoiseWrapperConfig(reward_sigma=0.2, state_sigma=0.1)
        a = list(wrap_noise(constant_stream(6), cfg, np.random.default_rng(3)))
        b = list(wrap_noise(constant_stream(6), cfg, np.random.default_rng(3)))
        for x, y in zip(a, b):
            assert x.reward == y.reward
            assert np.array_equal(x.state, y.state)
            assert np.array_equal(x.next_state, y.next_state)

    def test_negative_sigma_rejected(self):
        with pytest.raises(ValueError):
            NoiseWrapperConfig(reward_sigma=-0.1)

    def test_noisy_env_hides_but_does_not_change_trajectory(self):
        actions = [GlobalAction((0, 2)), GlobalAction((2, 1)), GlobalAction((1, 1))]
        clean = PointMassEnv(PointMassConfig(N=2, horizon=10), seed=4)
        wrapped_inner = PointMassEnv(PointMassConfig(N=2, horizon=10), seed=4)
        noisy = NoisyEnv(wrapped_inner, NoiseWrapperConfig(reward_sigma=0.5, state_sigma=0.5), seed=9)

        clean.reset()
        noisy.reset()
        for action in actions:
            clean_state, clean_reward, _ = clean.step(action)
            noisy_state, noisy_reward, _ = noisy.step(action)
            assert np.array_equal(wrapped_inner._state, clean_state)
            assert not np.array_equal(noisy_state, clean_state)
            assert noisy_reward != clean_reward

    def test_noisy_env_zero_sigma_passthrough(self):
        inner = TabularCreditEnv(TabularCreditConfig(N=2, n=3))
        noisy = NoisyEnv(inner, NoiseWrapperConfig(), seed=0)
        state = noisy.reset()
        assert np.array_equal(state, np.zeros(1))
        _, reward, done = noisy.step(GlobalAction((0, 0)))
        assert reward == 1.0 and done is True
