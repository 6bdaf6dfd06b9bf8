"""Tests for the manual-gradient network: forward, backward, optimiser."""

from __future__ import annotations

import numpy as np
import pytest

from decq.core import ActionSpaceSpec
from decq.net import (
    LN_EPS,
    NetConfig,
    adam_step,
    backward,
    clip_grad_norm,
    forward,
    forward_batch,
    global_norm,
    huber,
    init_adam,
    init_params,
    load_params,
    polyak_update,
    save_params,
)


def small_config(seed: int = 0) -> NetConfig:
    return NetConfig(input_dim=5, spec=ActionSpaceSpec((3, 4)), hidden=12, seed=seed)


class TestForward:
    def test_zero_params_give_zero_utilities(self):
        params = init_params(small_config())
        for arr in params.values():
            arr[...] = 0.0
        params["ln_g"][...] = 1.0
        rng = np.random.default_rng(0)
        for _ in range(5):
            heads = forward(params, rng.normal(size=5))
            for u in heads:
                assert np.all(u == 0.0)

    def test_output_shapes(self):
        cfg = NetConfig(input_dim=2, spec=ActionSpaceSpec((3, 5)), hidden=8, seed=1)
        heads = forward(init_params(cfg), np.zeros(2))
        assert [u.shape for u in heads] == [(3,), (5,)]

    def test_layernorm_identity(self):
        params = init_params(small_config(3), dtype=np.float64)
        rng = np.random.default_rng(4)
        # Large inputs keep the pre-norm variance far above the epsilon guard.
        _, cache = forward_batch(params, 100.0 * rng.normal(size=(16, 5)), with_cache=True)
        xhat = cache["xhat"]
        assert np.max(np.abs(xhat.mean(axis=1))) < 1e-6
        assert np.max(np.abs(xhat.var(axis=1) - 1.0)) < 1e-6

    def test_rejects_non_finite_input(self):
        params = init_params(small_config())
        with pytest.raises(ValueError):
            forward(params, np.array([1.0, np.nan, 0.0, 0.0, 0.0]))

    def test_rejects_bad_shape(self):
        params = init_params(small_config())
        with pytest.raises(ValueError):
            forward(params, np.zeros((2, 5)))

    def test_deterministic_init(self):
        a = init_params(small_config(7))
        b = init_params(small_config(7))
        c = init_params(small_config(8))
        assert all(np.array_equal(a[k], b[k]) for k in a)
        assert any(not np.array_equal(a[k], c[k]) for k in a)


class TestBackward:
    def test_zero_upstream_gives_zero_grads(self):
        params = init_params(small_config(1), dtype=np.float64)
        states = np.random.default_rng(2).normal(size=(4, 5))
        heads, cache = forward_batch(params, states, with_cache=True)
        grads = backward(params, cache, [np.zeros_like(u) for u in heads])
        assert all(np.all(g == 0.0) for g in grads.values())

    def test_head_gradient_matches_textbook_linear_form(self):
        # For loss sum((U - Y)^2) on one head, dL/dW = h^T (2 (U - Y)),
        # with h recomputed here from the layer definitions.
        params = init_params(small_config(5), dtype=np.float64)
        rng = np.random.default_rng(6)
        states = rng.normal(size=(8, 5))
        heads, cache = forward_batch(params, states, with_cache=True)
        target = rng.normal(size=heads[0].shape)
        upstream = [2.0 * (heads[0] - target), np.zeros_like(heads[1])]
        grads = backward(params, cache, upstream)

        z0 = states @ params["w_in"] + params["b_in"]
        h0 = np.maximum(z0, 0)
        a1 = np.maximum(h0 @ params["w_r1"] + params["b_r1"], 0)
        pre = h0 + np.maximum(a1 @ params["w_r2"] + params["b_r2"], 0)
        xhat = (pre - pre.mean(axis=1, keepdims=True)) / np.sqrt(
            pre.var(axis=1, keepdims=True) + LN_EPS
        )
        h = params["ln_g"] * xhat + params["ln_b"]
        expected = h.T @ (2.0 * (heads[0] - target))
        np.testing.assert_allclose(grads["head_w_0"], expected, rtol=1e-12)
        assert np.all(grads["head_w_1"] == 0.0)

    def test_gradcheck_central_differences(self):
        rng = np.random.default_rng(10)
        params = init_params(small_config(11), dtype=np.float64)
        states = rng.normal(size=(3, 5))
        weights = [rng.normal(size=(3, 3)), rng.normal(size=(3, 4))]

        def loss(p):
            heads = forward_batch(p, states)
            return sum(float(np.sum(w * u)) for w, u in zip(weights, heads))

        _, cache = forward_batch(params, states, with_cache=True)
        grads = backward(params, cache, weights)
        h = 1e-5
        worst = 0.0
        for key in params:
            flat = params[key].reshape(-1)
            gflat = grads[key].reshape(-1)
            for i in rng.choice(flat.size, size=min(6, flat.size), replace=False):
                orig = flat[i]
                flat[i] = orig + h
                up = loss(params)
                flat[i] = orig - h
                dn = loss(params)
                flat[i] = orig
                fd = (up - dn) / (2 * h)
                worst = max(worst, abs(fd - gflat[i]) / max(abs(fd), abs(gflat[i]), 1e-8))
        assert worst < 1e-4

    def test_shape_mismatch_rejected(self):
        params = init_params(small_config())
        heads, cache = forward_batch(params, np.zeros((2, 5), dtype=np.float32), with_cache=True)
        with pytest.raises(ValueError):
            backward(params, cache, [np.zeros((2, 3))])
        with pytest.raises(ValueError):
            backward(params, cache, [np.zeros((2, 4)), np.zeros((2, 4))])


class TestHuber:
    def test_values_and_derivatives(self):
        v, d = huber(np.array([0.0, 0.5, 2.0, -2.0]))
        np.testing.assert_allclose(v, [0.0, 0.125, 1.5, 1.5])
        np.testing.assert_allclose(d, [0.0, 0.5, 1.0, -1.0])

    def test_kappa_validation(self):
        with pytest.raises(ValueError):
            huber(1.0, kappa=0.0)

    def test_continuity_at_kappa(self):
        v_in, _ = huber(1.0 - 1e-12)
        v_out, _ = huber(1.0 + 1e-12)
        assert v_in == pytest.approx(v_out, abs=1e-11)


class TestAdam:
    def test_first_step_magnitude(self):
        params = {"w": np.array([1.0])}
        state = init_adam(params, lr=0.1)
        adam_step(params, {"w": np.array([0.5])}, state)
        assert abs(abs(1.0 - params["w"][0]) - 0.1) < 1e-6
        assert params["w"][0] < 1.0
        assert state.t == 1

    def test_zero_gradient_never_moves(self):
        params = {"w": np.array([0.25, -0.5])}
        state = init_adam(params, lr=0.1)
        for _ in range(10):
            adam_step(params, {"w": np.zeros(2)}, state)
        assert np.array_equal(params["w"], np.array([0.25, -0.5]))

    def test_two_steps_match_hand_recursion(self):
        lr, b1, b2, eps = 0.01, 0.9, 0.999, 1e-8
        g1, g2 = 0.3, -0.2
        w = 1.0
        m = (1 - b1) * g1
        v = (1 - b2) * g1 * g1
        w -= lr * (m / (1 - b1)) / (np.sqrt(v / (1 - b2)) + eps)
        m = b1 * m + (1 - b1) * g2
        v = b2 * v + (1 - b2) * g2 * g2
        w -= lr * (m / (1 - b1**2)) / (np.sqrt(v / (1 - b2**2)) + eps)

        params = {"w": np.array([1.0])}
        state = init_adam(params, lr=lr)
        adam_step(params, {"w": np.array([g1])}, state)
        adam_step(params, {"w": np.array([g2])}, state)
        assert params["w"][0] == pytest.approx(w, rel=1e-12)

    def test_non_finite_gradient_rejected_without_mutation(self):
        params = {"w": np.array([1.0]), "b": np.array([2.0])}
        state = init_adam(params, lr=0.1)
        with pytest.raises(ValueError):
            adam_step(params, {"w": np.array([np.nan]), "b": np.array([0.0])}, state)
        assert params["w"][0] == 1.0 and params["b"][0] == 2.0
        assert state.t == 0
        assert np.all(state.m["w"] == 0.0)

    def test_key_mismatch_rejected(self):
        params = {"w": np.array([1.0])}
        state = init_adam(params)
        with pytest.raises(ValueError):
            adam_step(params, {"q": np.array([1.0])}, state)


class TestClipAndPolyak:
    def test_below_threshold_untouched(self):
        grads = {"a": np.array([3.0, 4.0])}
        clipped, norm = clip_grad_norm(grads, max_norm=40.0)
        assert norm == 5.0
        assert np.array_equal(clipped["a"], np.array([3.0, 4.0]))

    def test_spec_scaling_example(self):
        grads = {"a": np.array([30.0, 40.0])}
        clipped, norm = clip_grad_norm(grads, max_norm=40.0)
        assert norm == 50.0
        np.testing.assert_allclose(clipped["a"], [24.0, 32.0], rtol=1e-15)

    def test_post_clip_norm_bounded(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            grads = {"a": rng.normal(size=7) * 100, "b": rng.normal(size=(3, 3)) * 100}
            clipped, _ = clip_grad_norm(grads, max_norm=40.0)
            assert global_norm(clipped) <= 40.0 + 1e-9

    def test_polyak_small_step(self):
        target = {"w": np.zeros(3)}
        online = {"w": np.ones(3)}
        polyak_update(target, online, c=0.005)
        np.testing.assert_allclose(target["w"], 0.005, rtol=1e-15)

    def test_polyak_hard_copy(self):
        target = {"w": np.zeros(3)}
        online = {"w": np.array([1.0, -2.0, 3.0])}
        polyak_update(target, online, c=1.0)
        assert np.array_equal(target["w"], online["w"])

    def test_polyak_geometric_convergence(self):
        target = {"w": np.array([0.0])}
        online = {"w": np.array([1.0])}
        for t in range(1, 30):
            polyak_update(target, online, c=0.5)
            assert abs(target["w"][0] - 1.0) == 0.5**t

    def test_polyak_validation(self):
        with pytest.raises(ValueError):
            polyak_update({"w": np.zeros(2)}, {"w": np.zeros(2)}, c=0.0)
        with pytest.raises(ValueError):
            polyak_update({"w": np.zeros(2)}, {"v": np.zeros(2)}, c=0.5)
        with pytest.raises(ValueError):
            polyak_update({"w": np.zeros(2)}, {"w": np.zeros(3)}, c=0.5)


class TestCheckpoint:
    def test_roundtrip(self, tmp_path):
        params = init_params(small_config(9))
        path = tmp_path / "ckpt.npz"
        save_params(path, params, meta={"algorithm": "decqn", "K": 1})
        loaded, meta = load_params(path)
        assert meta == {"algorithm": "decqn", "K": 1}
        assert set(loaded) == set(params)
        for key in params:
            assert np.array_equal(loaded[key], params[key])
            assert loaded[key].dtype == params[key].dtype
