"""Feed-forward utility network with hand-written gradients.

The architecture is a single input layer, a two-layer residual block,
layer normalisation, and one linear head per action dimension:

    h0 = relu(W_in s + b_in)
    h  = LayerNorm(h0 + relu(W2 relu(W1 h0 + b1) + b2))
    u_i = H_i h + c_i

Parameters live in a plain dict of named arrays, gradients in a dict of
the same shape, so the optimiser, clipping, Polyak averaging and
checkpointing are all simple dict traversals.  Training runs in float32;
the same graph can be instantiated in float64 for finite-difference
gradient checks.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from decq.core import ActionSpaceSpec

__all__ = [
    "NetConfig",
    "AdamState",
    "init_params",
    "forward",
    "forward_batch",
    "backward",
    "huber",
    "init_adam",
    "adam_step",
    "global_norm",
    "clip_grad_norm",
    "polyak_update",
    "save_params",
    "load_params",
]

LN_EPS = 1e-5


@dataclass(frozen=True)
class NetConfig:
    """Shape and seed of one utility network."""

    input_dim: int
    spec: ActionSpaceSpec
    hidden: int = 512
    seed: int = 0

    def __post_init__(self) -> None:
        if self.input_dim < 1:
            raise ValueError(f"input_dim must be >= 1, got {self.input_dim}")
        if self.hidden < 1:
            raise ValueError(f"hidden width must be >= 1, got {self.hidden}")


def _uniform_fan_in(rng: np.random.Generator, fan_in: int, fan_out: int, dtype) -> np.ndarray:
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=(fan_in, fan_out)).astype(dtype)


def init_params(config: NetConfig, dtype=np.float32) -> dict[str, np.ndarray]:
    """Fresh parameter dict; weights uniform with fan-in scaling, biases zero.

    The draw order is fixed (input layer, residual layers, heads in
    dimension order) so a given seed always yields bit-identical params.
    """
    rng = np.random.default_rng(config.seed)
    h = config.hidden
    params = {
        "w_in": _uniform_fan_in(rng, config.input_dim, h, dtype),
        "b_in": np.zeros(h, dtype=dtype),
        "w_r1": _uniform_fan_in(rng, h, h, dtype),
        "b_r1": np.zeros(h, dtype=dtype),
        "w_r2": _uniform_fan_in(rng, h, h, dtype),
        "b_r2": np.zeros(h, dtype=dtype),
        "ln_g": np.ones(h, dtype=dtype),
        "ln_b": np.zeros(h, dtype=dtype),
    }
    for i, n in enumerate(config.spec.sizes):
        params[f"head_w_{i}"] = _uniform_fan_in(rng, h, n, dtype)
        params[f"head_b_{i}"] = np.zeros(n, dtype=dtype)
    return params


def _num_heads(params: Mapping[str, np.ndarray]) -> int:
    n = 0
    while f"head_w_{n}" in params:
        n += 1
    return n


def forward_batch(
    params: Mapping[str, np.ndarray], states: np.ndarray, with_cache: bool = False
):
    """Utilities for a batch of states, optionally with the backward cache.

    Returns a list of N arrays of shape (batch, n_i); with ``with_cache``
    the pair (utilities, cache) where the cache holds every intermediate
    needed by :func:`backward`.
    """
    states = np.asarray(states)
    if states.ndim != 2:
        raise ValueError(f"expected (batch, input_dim) states, got shape {states.shape}")
    if not np.all(np.isfinite(states)):
        raise ValueError("states contain non-finite values")
    x = states.astype(params["w_in"].dtype, copy=False)

    z0 = x @ params["w_in"] + params["b_in"]
    h0 = np.maximum(z0, 0)
    z1 = h0 @ params["w_r1"] + params["b_r1"]
    a1 = np.maximum(z1, 0)
    z2 = a1 @ params["w_r2"] + params["b_r2"]
    pre = h0 + np.maximum(z2, 0)

    mu = pre.mean(axis=1, keepdims=True)
    var = pre.var(axis=1, keepdims=True)
    sigma = np.sqrt(var + LN_EPS)
    xhat = (pre - mu) / sigma
    h = params["ln_g"] * xhat + params["ln_b"]

    heads = [h @ params[f"head_w_{i}"] + params[f"head_b_{i}"] for i in range(_num_heads(params))]
    if not with_cache:
        return heads
    cache = {"x": x, "z0": z0, "h0": h0, "z1": z1, "a1": a1, "z2": z2,
             "xhat": xhat, "sigma": sigma, "h": h}
    return heads, cache


def forward(params: Mapping[str, np.ndarray], state: np.ndarray) -> list[np.ndarray]:
    """Per-dimension utility vectors for a single state."""
    state = np.asarray(state)
    if state.ndim != 1:
        raise ValueError(f"expected a flat state vector, got shape {state.shape}")
    heads = forward_batch(params, state[None, :])
    return [u[0] for u in heads]


def backward(
    params: Mapping[str, np.ndarray],
    cache: Mapping[str, np.ndarray],
    upstream: Iterable[np.ndarray],
) -> dict[str, np.ndarray]:
    """Gradients of a scalar loss given d(loss)/d(head outputs).

    ``upstream`` must hold one (batch, n_i) array per head, exactly the
    shapes returned by :func:`forward_batch`.
    """
    upstream = list(upstream)
    n_heads = _num_heads(params)
    if len(upstream) != n_heads:
        raise ValueError(f"expected {n_heads} upstream arrays, got {len(upstream)}")

    h = cache["h"]
    grads: dict[str, np.ndarray] = {}
    dh = np.zeros_like(h)
    for i, du in enumerate(upstream):
        du = np.asarray(du, dtype=h.dtype)
        if du.shape != (h.shape[0], params[f"head_w_{i}"].shape[1]):
            raise ValueError(
                f"upstream[{i}] has shape {du.shape}, "
                f"expected {(h.shape[0], params[f'head_w_{i}'].shape[1])}"
            )
        grads[f"head_w_{i}"] = h.T @ du
        grads[f"head_b_{i}"] = du.sum(axis=0)
        dh += du @ params[f"head_w_{i}"].T

    xhat, sigma = cache["xhat"], cache["sigma"]
    grads["ln_g"] = (dh * xhat).sum(axis=0)
    grads["ln_b"] = dh.sum(axis=0)
    dxhat = dh * params["ln_g"]
    # Standard layer-norm backward: centre dxhat and remove its projection
    # onto xhat, then rescale by 1/sigma (per row).
    dpre = (
        dxhat
        - dxhat.mean(axis=1, keepdims=True)
        - xhat * (dxhat * xhat).mean(axis=1, keepdims=True)
    ) / sigma

    dz2 = dpre * (cache["z2"] > 0)
    grads["w_r2"] = cache["a1"].T @ dz2
    grads["b_r2"] = dz2.sum(axis=0)
    da1 = dz2 @ params["w_r2"].T
    dz1 = da1 * (cache["z1"] > 0)
    grads["w_r1"] = cache["h0"].T @ dz1
    grads["b_r1"] = dz1.sum(axis=0)
    # The skip connection feeds dpre straight into h0 alongside the block path.
    dh0 = dpre + dz1 @ params["w_r1"].T
    dz0 = dh0 * (cache["z0"] > 0)
    grads["w_in"] = cache["x"].T @ dz0
    grads["b_in"] = dz0.sum(axis=0)
    return grads


def huber(x, kappa: float = 1.0):
    """Huber loss and its derivative, elementwise.

    Quadratic 0.5 x^2 inside |x| <= kappa, linear kappa(|x| - kappa/2)
    outside; the derivative is x inside and kappa sign(x) outside.
    """
    if not kappa > 0:
        raise ValueError(f"kappa must be positive, got {kappa}")
    x = np.asarray(x)
    absx = np.abs(x)
    inside = absx <= kappa
    value = np.where(inside, 0.5 * x * x, kappa * (absx - 0.5 * kappa))
    deriv = np.where(inside, x, kappa * np.sign(x))
    return value, deriv


@dataclass
class AdamState:
    """Per-parameter moment accumulators and step counter."""

    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def init_adam(params: Mapping[str, np.ndarray], lr: float = 1e-4) -> AdamState:
    if not lr > 0:
        raise ValueError(f"learning rate must be positive, got {lr}")
    return AdamState(
        lr=lr,
        m={k: np.zeros_like(p) for k, p in params.items()},
        v={k: np.zeros_like(p) for k, p in params.items()},
    )


def adam_step(
    params: dict[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    state: AdamState,
) -> dict[str, np.ndarray]:
    """One bias-corrected Adam update, in place; returns ``params``.

    Rejects non-finite gradients before touching any accumulator, so a
    failed step leaves both the parameters and the optimiser state intact.
    """
    if set(grads) != set(params):
        raise ValueError("gradient keys do not match parameter keys")
    if not np.isfinite(global_norm(grads)):
        raise ValueError("non-finite gradient; update rejected")
    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t
    for k, p in params.items():
        g = np.asarray(grads[k], dtype=p.dtype)
        m = state.m[k]
        v = state.v[k]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return params


def global_norm(grads: Mapping[str, np.ndarray]) -> float:
    """Global L2 norm over every array in the gradient dict."""
    sq = 0.0
    for g in grads.values():
        sq += float(np.sum(np.square(np.asarray(g, dtype=np.float64))))
    return float(np.sqrt(sq))


def clip_grad_norm(
    grads: dict[str, np.ndarray], max_norm: float = 40.0
) -> tuple[dict[str, np.ndarray], float]:
    """Scale gradients to a global-norm ceiling; returns (grads, raw norm).

    The pre-clip norm is returned so callers can log it without a second
    pass over the arrays.
    """
    if not max_norm > 0:
        raise ValueError(f"max_norm must be positive, got {max_norm}")
    norm = global_norm(grads)
    if norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return grads, norm


def polyak_update(
    target: dict[str, np.ndarray], online: Mapping[str, np.ndarray], c: float = 0.005
) -> dict[str, np.ndarray]:
    """In-place exponential target update: target <- c online + (1-c) target."""
    if not 0 < c <= 1:
        raise ValueError(f"Polyak coefficient must lie in (0, 1], got {c}")
    if set(target) != set(online):
        raise ValueError("target and online parameter keys do not match")
    for k, t in target.items():
        o = online[k]
        if o.shape != t.shape:
            raise ValueError(f"shape mismatch for {k}: {t.shape} vs {o.shape}")
        t *= 1.0 - c
        t += c * o
    return target


def save_params(path, params: Mapping[str, np.ndarray], meta: dict | None = None) -> None:
    """Write a checkpoint: named arrays plus a JSON metadata string.

    The file is a standard ``.npz`` archive; every parameter is stored
    under its dict key and the metadata under ``__meta__``.
    """
    payload = dict(params)
    payload["__meta__"] = np.asarray(json.dumps(meta or {}))
    np.savez(path, **payload)


def load_params(path) -> tuple[dict[str, np.ndarray], dict]:
    """Read a checkpoint written by :func:`save_params`."""
    with np.load(path, allow_pickle=False) as archive:
        meta = json.loads(str(archive["__meta__"]))
        params = {k: archive[k] for k in archive.files if k != "__meta__"}
    return params, meta
