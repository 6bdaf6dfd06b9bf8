"""Tests for action-space factorisation types and the factorised argmax."""

from __future__ import annotations

import itertools

import numpy as np
import pytest

from decq.core import ActionSpaceSpec, GlobalAction, Transition, global_q, joint_argmax


class TestActionSpaceSpec:
    def test_dims_and_atomic_count(self):
        spec = ActionSpaceSpec((3, 5, 2))
        assert spec.dims == 3
        assert spec.num_atomic == 30

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            ActionSpaceSpec(())

    def test_rejects_singleton_dimension(self):
        with pytest.raises(ValueError):
            ActionSpaceSpec((3, 1))

    def test_validate_action(self):
        spec = ActionSpaceSpec((3, 5))
        spec.validate_action(GlobalAction((2, 4)))
        with pytest.raises(ValueError):
            spec.validate_action(GlobalAction((3, 0)))
        with pytest.raises(ValueError):
            spec.validate_action(GlobalAction((0,)))

    def test_random_action_in_range(self):
        spec = ActionSpaceSpec((2, 3, 4))
        rng = np.random.default_rng(0)
        for _ in range(100):
            spec.validate_action(spec.random_action(rng))


class TestTransition:
    def test_rejects_non_finite_reward(self):
        with pytest.raises(ValueError):
            Transition(
                state=np.zeros(2), action=GlobalAction((0,)),
                reward=float("nan"), next_state=np.zeros(2), done=False,
            )

    def test_rejects_bad_n_used(self):
        with pytest.raises(ValueError):
            Transition(
                state=np.zeros(2), action=GlobalAction((0,)),
                reward=0.0, next_state=np.zeros(2), done=False, n_used=0,
            )


class TestJointArgmax:
    def test_spec_example(self):
        assert tuple(joint_argmax([np.array([1, 3, 2]), np.array([0, -1, 5])])) == (1, 2)

    def test_tie_breaks_to_lowest_index(self):
        assert tuple(joint_argmax([np.array([2.0, 2.0, 1.0])])) == (0,)

    def test_empty_vector_rejected(self):
        with pytest.raises(ValueError):
            joint_argmax([np.array([1.0]), np.array([])])

    def test_matches_brute_force_enumeration(self):
        rng = np.random.default_rng(11)
        for sizes in [(2,), (4,), (2, 3), (4, 4), (2, 3, 4), (3, 3, 3)]:
            spec = ActionSpaceSpec(sizes)
            for _ in range(20):
                utilities = [rng.normal(size=n) for n in sizes]
                best = joint_argmax(utilities)
                best_q = global_q(utilities, best, "mean")
                for combo in itertools.product(*(range(n) for n in sizes)):
                    q = global_q(utilities, GlobalAction(combo), "mean")
                    assert q <= best_q


class TestGlobalQ:
    def test_mean_example(self):
        utilities = [np.array([2.0, 4.0]), np.array([6.0, 0.0])]
        assert global_q(utilities, GlobalAction((1, 0)), "mean") == 5.0

    def test_sum_example(self):
        utilities = [np.array([2.0, 4.0]), np.array([6.0, 0.0])]
        assert global_q(utilities, GlobalAction((1, 0)), "sum") == 10.0

    def test_single_dimension_modes_agree(self):
        utilities = [np.array([1.5, -2.0, 0.25])]
        for a in range(3):
            action = GlobalAction((a,))
            assert global_q(utilities, action, "mean") == global_q(utilities, action, "sum")

    def test_sum_is_n_times_mean(self):
        rng = np.random.default_rng(3)
        for sizes in [(2, 2), (3, 4, 5), (2, 3, 4, 5)]:
            spec = ActionSpaceSpec(sizes)
            for _ in range(25):
                utilities = [rng.normal(size=n) for n in sizes]
                action = spec.random_action(rng)
                mean_q = global_q(utilities, action, "mean")
                sum_q = global_q(utilities, action, "sum")
                assert sum_q == pytest.approx(spec.dims * mean_q, rel=1e-12)

    def test_unknown_mode_rejected(self):
        with pytest.raises(ValueError):
            global_q([np.array([1.0, 2.0])], GlobalAction((0,)), "median")
