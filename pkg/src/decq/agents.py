"""Decomposed Q-learning agents: single-critic, sum-combined, and ensemble.

All three algorithms share one code path.  The global value of a state
and action tuple is the mean (or sum) of per-dimension utilities; the
bootstrap target maximises each dimension independently on the
across-critic mean of the target networks; the ensemble variant adds a
weighted regulariser pulling each online utility toward its own target
copy, with weights growing in the per-dimension TD error.  Setting K=1
and beta=0 makes the ensemble agent's arithmetic identical to the plain
one, which tests assert bitwise.

A tabular variant of the same update rule supports the single-state
credit-assignment experiment.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from decq.core import ActionSpaceSpec, GlobalAction, Transition, joint_argmax
from decq.net import (
    AdamState,
    NetConfig,
    adam_step,
    backward,
    clip_grad_norm,
    forward,
    forward_batch,
    huber,
    init_adam,
    init_params,
    polyak_update,
)
from decq.replay import Batch, NStepAssembler, PrioritizedBuffer

__all__ = [
    "ALGORITHMS",
    "AgentConfig",
    "EnsembleCritic",
    "NeuralAgent",
    "UpdateReport",
    "select_action",
    "compute_target",
    "decqn_loss",
    "regularisation_loss",
    "total_update",
    "td_weight",
    "TabularUtilities",
    "tabular_select",
    "tabular_update",
]

ALGORITHMS = ("decqn", "decqn_sum", "revalued")
WEIGHT_FNS = ("exponential", "quadratic")


@dataclass(frozen=True)
class AgentConfig:
    """Algorithm choice plus every training hyperparameter.

    ``K`` and ``beta`` default per algorithm: the single-critic variants
    use one critic and no regulariser, the ensemble variant ten critics
    and beta 0.5.  Passing explicit values inconsistent with the
    algorithm (extra critics or a nonzero beta on a plain agent) is an
    error rather than a silent reinterpretation.
    """

    algorithm: str = "decqn"
    K: int | None = None
    beta: float | None = None
    weight_fn: str = "exponential"
    gamma: float = 0.99
    lr: float = 1e-4
    batch_size: int = 256
    hidden: int = 512
    buffer_capacity: int = 500_000
    n_step: int = 3
    polyak_c: float = 0.005
    priority_alpha: float = 0.6
    beta_is: float = 0.2
    priority_floor: float = 1e-6
    clip_norm: float = 40.0
    epsilon_start: float = 1.0
    epsilon_min: float = 0.05
    epsilon_decay: float = 0.99995

    def __post_init__(self) -> None:
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}, expected one of {ALGORITHMS}")
        if self.weight_fn not in WEIGHT_FNS:
            raise ValueError(f"unknown weight_fn {self.weight_fn!r}, expected one of {WEIGHT_FNS}")
        ensemble = self.algorithm == "revalued"
        if self.K is None:
            object.__setattr__(self, "K", 10 if ensemble else 1)
        if self.beta is None:
            object.__setattr__(self, "beta", 0.5 if ensemble else 0.0)
        if self.K < 1:
            raise ValueError(f"ensemble size must be >= 1, got {self.K}")
        if self.beta < 0:
            raise ValueError(f"beta must be non-negative, got {self.beta}")
        if not ensemble and self.K != 1:
            raise ValueError(f"{self.algorithm} uses a single critic, got K={self.K}")
        if not ensemble and self.beta != 0.0:
            raise ValueError(f"{self.algorithm} has no regulariser, got beta={self.beta}")
        if not 0 < self.gamma <= 1:
            raise ValueError(f"gamma must lie in (0, 1], got {self.gamma}")
        if not 0 <= self.epsilon_min <= self.epsilon_start <= 1:
            raise ValueError("need 0 <= epsilon_min <= epsilon_start <= 1")
        if not 0 < self.epsilon_decay <= 1:
            raise ValueError(f"epsilon_decay must lie in (0, 1], got {self.epsilon_decay}")

    @property
    def mode(self) -> str:
        """How per-dimension utilities combine into a global value."""
        return "sum" if self.algorithm == "decqn_sum" else "mean"


def td_weight(delta_abs, kind: str = "exponential"):
    """Regulariser weight as a function of |TD error|.

    Both variants are 0 at zero error, nondecreasing, and capped at 1:
    exponential is 1 - exp(-|d|), quadratic is min(d^2, 1).
    """
    delta_abs = np.abs(np.asarray(delta_abs, dtype=np.float64))
    if kind == "exponential":
        return 1.0 - np.exp(-delta_abs)
    if kind == "quadratic":
        return np.minimum(delta_abs * delta_abs, 1.0)
    raise ValueError(f"unknown weight_fn {kind!r}, expected one of {WEIGHT_FNS}")


class EnsembleCritic:
    """K independent online networks, their target copies, and optimisers."""

    def __init__(self, net_config: NetConfig, K: int, lr: float, seed: int = 0) -> None:
        if K < 1:
            raise ValueError(f"ensemble size must be >= 1, got {K}")
        self.K = int(K)
        self.spec = net_config.spec
        children = np.random.SeedSequence(seed).spawn(K)
        self.online: list[dict[str, np.ndarray]] = []
        self.target: list[dict[str, np.ndarray]] = []
        self.adam: list[AdamState] = []
        for child in children:
            cfg = NetConfig(
                input_dim=net_config.input_dim,
                spec=net_config.spec,
                hidden=net_config.hidden,
                seed=int(child.generate_state(1)[0]),
            )
            params = init_params(cfg)
            self.online.append(params)
            self.target.append({k: v.copy() for k, v in params.items()})
            self.adam.append(init_adam(params, lr=lr))

    def online_utilities(self, state: np.ndarray, k: int) -> list[np.ndarray]:
        return forward(self.online[k], state)

    def mean_online_utilities(self, state: np.ndarray) -> list[np.ndarray]:
        """Across-critic mean of the online utility vectors for one state."""
        per_critic = [forward(p, state) for p in self.online]
        return [
            np.mean([per_critic[k][i] for k in range(self.K)], axis=0, dtype=np.float64)
            for i in range(self.spec.dims)
        ]


def select_action(
    critic: EnsembleCritic,
    state: np.ndarray,
    epsilon: float,
    mode: str,
    rng: np.random.Generator,
) -> GlobalAction:
    """Behaviour policy: per-dimension epsilon-greedy on one sampled critic.

    In train mode a single critic index is drawn first (one per call, so
    one per time-step), then each dimension independently explores with
    probability epsilon or takes that critic's argmax.  In eval mode the
    action is the greedy argmax of the across-critic mean, with no
    randomness consumed.
    """
    if not 0 <= epsilon <= 1:
        raise ValueError(f"epsilon must lie in [0, 1], got {epsilon}")
    if mode == "eval":
        return joint_argmax(critic.mean_online_utilities(state))
    if mode != "train":
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    k = int(rng.integers(critic.K))
    utilities = critic.online_utilities(state, k)
    sub_actions = []
    for i, n in enumerate(critic.spec.sizes):
        if rng.random() < epsilon:
            sub_actions.append(int(rng.integers(n)))
        else:
            sub_actions.append(int(np.argmax(utilities[i])))
    return GlobalAction(tuple(sub_actions))


def compute_target(
    batch: Batch,
    target_params: Sequence[dict[str, np.ndarray]],
    gamma: float,
    mode: str = "mean",
) -> np.ndarray:
    """Bootstrap target per batch element, shared by every critic.

    y = r + gamma^n_used * agg_i max_a' Ubar_i(s', a') on non-terminal
    rows, where Ubar is the across-critic mean of the target networks and
    agg is the mean over dimensions (or the sum in sum mode); terminal
    rows use y = r.
    """
    if mode not in ("mean", "sum"):
        raise ValueError(f"mode must be 'mean' or 'sum', got {mode!r}")
    per_critic = [forward_batch(p, batch.next_states) for p in target_params]
    n_dims = len(per_critic[0])
    agg = np.zeros(len(batch), dtype=np.float64)
    for i in range(n_dims):
        mean_i = np.mean(
            np.stack([heads[i] for heads in per_critic]).astype(np.float64), axis=0
        )
        agg += mean_i.max(axis=1)
    if mode == "mean":
        agg /= n_dims
    discount = np.power(float(gamma), batch.n_used.astype(np.float64))
    return batch.rewards + discount * agg * ~batch.dones


def decqn_loss(
    batch: Batch,
    utilities: Sequence[np.ndarray],
    y: np.ndarray,
    is_weights: np.ndarray,
    mode: str = "mean",
) -> tuple[float, list[np.ndarray], np.ndarray]:
    """Weighted Huber loss on the decomposed value, with head gradients.

    ``utilities`` are one critic's online outputs for the batch states.
    Returns (loss, upstream gradient per head, per-element TD error);
    each taken sub-action's utility receives a 1/N share of dLoss/dQ in
    mean mode and the full share in sum mode.
    """
    if mode not in ("mean", "sum"):
        raise ValueError(f"mode must be 'mean' or 'sum', got {mode!r}")
    n_dims = len(utilities)
    rows = np.arange(len(batch))
    q = np.zeros(len(batch), dtype=np.float64)
    for i in range(n_dims):
        q += utilities[i][rows, batch.actions[:, i]].astype(np.float64)
    if mode == "mean":
        q /= n_dims
    td = y - q
    value, deriv = huber(td)
    is_weights = np.asarray(is_weights, dtype=np.float64)
    loss = float(np.mean(is_weights * value))
    # d(loss)/dQ = -w * huber'(td) / B, then a 1/N (or 1) share per head.
    dq = -(is_weights * deriv) / len(batch)
    share = dq / n_dims if mode == "mean" else dq
    upstream = []
    for i in range(n_dims):
        g = np.zeros_like(utilities[i])
        g[rows, batch.actions[:, i]] = share
        upstream.append(g)
    return loss, upstream, td


def regularisation_loss(
    batch: Batch,
    utilities: Sequence[np.ndarray],
    target_utilities: Sequence[np.ndarray],
    y: np.ndarray,
    is_weights: np.ndarray,
    weight_fn: str = "exponential",
) -> tuple[float, list[np.ndarray]]:
    """Weighted pull of each taken utility toward its own target copy.

    Per element and dimension: w_i = weight(|y - U_i(s, a_i)|) treated as
    a constant, term w_i * Huber(Ubar_i(s, a_i) - U_i(s, a_i)).  The same
    importance weights as the main loss scale each element's contribution.
    Returns (loss, upstream gradient per head) for the online network.
    """
    n_dims = len(utilities)
    rows = np.arange(len(batch))
    is_weights = np.asarray(is_weights, dtype=np.float64)
    loss = 0.0
    upstream = []
    for i in range(n_dims):
        cols = batch.actions[:, i]
        u_on = utilities[i][rows, cols].astype(np.float64)
        u_tar = target_utilities[i][rows, cols].astype(np.float64)
        w = td_weight(np.abs(y - u_on), weight_fn)
        value, deriv = huber(u_tar - u_on)
        loss += float(np.mean(is_weights * w * value))
        g = np.zeros_like(utilities[i])
        # d/dU of Huber(Ubar - U) is -huber'(Ubar - U).
        g[rows, cols] = -(is_weights * w * deriv) / len(batch)
        upstream.append(g)
    return loss, upstream


@dataclass(frozen=True)
class UpdateReport:
    """What one gradient step produced, for logging and priorities."""

    loss: float
    grad_norm: float
    td_errors: np.ndarray


class NeuralAgent:
    """Training-loop owner of critics, replay, exploration, and updates."""

    def __init__(
        self,
        config: AgentConfig,
        spec: ActionSpaceSpec,
        observation_dim: int,
        seed: int = 0,
    ) -> None:
        self.config = config
        self.spec = spec
        root = np.random.SeedSequence(seed)
        act_ss, sample_ss, net_ss = root.spawn(3)
        self._act_rng = np.random.default_rng(act_ss)
        self._sample_rng = np.random.default_rng(sample_ss)
        self.critic = EnsembleCritic(
            NetConfig(input_dim=observation_dim, spec=spec, hidden=config.hidden),
            K=config.K,
            lr=config.lr,
            seed=int(net_ss.generate_state(1)[0]),
        )
        self.buffer = PrioritizedBuffer(
            capacity=config.buffer_capacity,
            alpha=config.priority_alpha,
            beta_is=config.beta_is,
            eps_p=config.priority_floor,
        )
        self._assembler = NStepAssembler(n=config.n_step, gamma=config.gamma)
        self.updates_done = 0

    @property
    def epsilon(self) -> float:
        """Exploration rate after ``updates_done`` decays, floored."""
        cfg = self.config
        return max(cfg.epsilon_min, cfg.epsilon_start * cfg.epsilon_decay**self.updates_done)

    def act(self, state: np.ndarray) -> GlobalAction:
        return select_action(self.critic, state, self.epsilon, "train", self._act_rng)

    def greedy_utilities(self, state: np.ndarray) -> list[np.ndarray]:
        return self.critic.mean_online_utilities(state)

    def observe(self, raw: Transition) -> None:
        """Feed one raw step; stores completed n-step aggregates."""
        for assembled in self._assembler.push(raw):
            self.buffer.add(assembled)

    def update(self) -> UpdateReport:
        return total_update(self, self.buffer, self._sample_rng)


def total_update(
    agent: NeuralAgent, buffer: PrioritizedBuffer, rng: np.random.Generator
) -> UpdateReport:
    """One full learning step over a prioritized batch.

    Samples once, computes the shared ensemble target, then per critic
    builds main + beta * regulariser gradients, clips, and applies Adam;
    afterwards Polyak-updates every target copy, refreshes priorities
    with the across-critic mean |TD error|, and advances the epsilon
    decay counter.
    """
    cfg = agent.config
    if len(buffer) < cfg.batch_size:
        raise RuntimeError(
            f"buffer holds {len(buffer)} transitions, need at least {cfg.batch_size}"
        )
    batch, indices, is_weights = buffer.sample(cfg.batch_size, rng)
    critic = agent.critic
    y = compute_target(batch, critic.target, cfg.gamma, cfg.mode)

    td_abs_total = np.zeros(len(batch), dtype=np.float64)
    loss_total = 0.0
    norm_total = 0.0
    for k in range(critic.K):
        utilities, cache = forward_batch(critic.online[k], batch.states, with_cache=True)
        loss_k, upstream, td = decqn_loss(batch, utilities, y, is_weights, cfg.mode)
        if cfg.beta > 0:
            target_utilities = forward_batch(critic.target[k], batch.states)
            reg_loss, reg_upstream = regularisation_loss(
                batch, utilities, target_utilities, y, is_weights, cfg.weight_fn
            )
            loss_k += cfg.beta * reg_loss
            for g, rg in zip(upstream, reg_upstream):
                g += cfg.beta * rg
        grads = backward(critic.online[k], cache, upstream)
        grads, raw_norm = clip_grad_norm(grads, cfg.clip_norm)
        adam_step(critic.online[k], grads, critic.adam[k])
        td_abs_total += np.abs(td)
        loss_total += loss_k
        norm_total += min(raw_norm, cfg.clip_norm)
    for k in range(critic.K):
        polyak_update(critic.target[k], critic.online[k], cfg.polyak_c)
    buffer.update_priorities(indices, td_abs_total / critic.K)
    agent.updates_done += 1
    return UpdateReport(
        loss=loss_total / critic.K,
        grad_norm=norm_total / critic.K,
        td_errors=td_abs_total / critic.K,
    )


class TabularUtilities:
    """Per-dimension utility arrays with a lagged target copy."""

    def __init__(
        self,
        spec: ActionSpaceSpec,
        rng: np.random.Generator,
        low: float = -0.1,
        high: float = 0.1,
        alpha: float = 0.1,
    ) -> None:
        if not alpha > 0:
            raise ValueError(f"learning rate must be positive, got {alpha}")
        self.spec = spec
        self.alpha = float(alpha)
        self.U = [rng.uniform(low, high, size=n) for n in spec.sizes]
        self.U_bar = [u.copy() for u in self.U]

    def set_value(self, dim: int, sub_action: int, value: float) -> None:
        """Pin one utility (and its target copy) to a fixed start value."""
        self.U[dim][sub_action] = value
        self.U_bar[dim][sub_action] = value

    def greedy_utilities(self) -> list[np.ndarray]:
        return self.U


def tabular_select(
    tab: TabularUtilities, epsilon: float, rng: np.random.Generator
) -> GlobalAction:
    """Per-dimension epsilon-greedy on the tabular utilities."""
    if not 0 <= epsilon <= 1:
        raise ValueError(f"epsilon must lie in [0, 1], got {epsilon}")
    sub_actions = []
    for i, n in enumerate(tab.spec.sizes):
        if rng.random() < epsilon:
            sub_actions.append(int(rng.integers(n)))
        else:
            sub_actions.append(int(np.argmax(tab.U[i])))
    return GlobalAction(tuple(sub_actions))


def tabular_update(
    tab: TabularUtilities,
    action: GlobalAction,
    reward: float,
    beta: float = 0.0,
    weight_fn: str = "exponential",
    c_tab: float = 0.05,
) -> None:
    """Squared-error analogue of the neural update on a terminal transition.

    With target y = reward: delta = y - mean_i U[i][a_i]; each taken
    utility moves by alpha * delta / N minus the weighted pull
    alpha * beta * w_i * (U - U_bar), with w_i computed from the
    per-dimension error y - U[i][a_i]; afterwards the whole target table
    tracks the online one with coefficient c_tab.  All deltas and weights
    use pre-update values, so dimensions update simultaneously.
    """
    if beta < 0:
        raise ValueError(f"beta must be non-negative, got {beta}")
    if not 0 < c_tab <= 1:
        raise ValueError(f"c_tab must lie in (0, 1], got {c_tab}")
    tab.spec.validate_action(action)
    n_dims = tab.spec.dims
    taken = [tab.U[i][action[i]] for i in range(n_dims)]
    delta = reward - sum(taken) / n_dims
    alpha = tab.alpha
    for i in range(n_dims):
        step = alpha * delta / n_dims
        if beta > 0:
            w = float(td_weight(abs(reward - taken[i]), weight_fn))
            step -= alpha * beta * w * (taken[i] - tab.U_bar[i][action[i]])
        tab.U[i][action[i]] = taken[i] + step
    for i in range(n_dims):
        tab.U_bar[i] = c_tab * tab.U[i] + (1.0 - c_tab) * tab.U_bar[i]
