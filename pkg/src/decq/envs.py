"""Desk-scale factorisable environments and noise wrappers.

Two tasks: a single-state credit-assignment bandit whose reward is +1
only for one jointly optimal action tuple, and a point-mass task where
each action dimension nudges one coordinate toward a target.  A Gaussian
noise wrapper perturbs rewards and/or observations without touching the
underlying dynamics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from decq.core import ActionSpaceSpec, GlobalAction, Transition

__all__ = [
    "TabularCreditConfig",
    "TabularCreditEnv",
    "tabular_credit_step",
    "PointMassConfig",
    "PointMassEnv",
    "point_mass_step",
    "NoiseWrapperConfig",
    "wrap_noise",
    "NoisyEnv",
]


@dataclass(frozen=True)
class TabularCreditConfig:
    """Single-state task: one action tuple pays +1, every other pays -1."""

    N: int
    n: int
    optimal: GlobalAction | None = None

    def __post_init__(self) -> None:
        if self.N < 1:
            raise ValueError(f"need at least one dimension, got {self.N}")
        if self.n < 2:
            raise ValueError(f"need at least two sub-actions, got {self.n}")
        if self.optimal is None:
            object.__setattr__(self, "optimal", GlobalAction((0,) * self.N))
        self.spec.validate_action(self.optimal)

    @property
    def spec(self) -> ActionSpaceSpec:
        return ActionSpaceSpec((self.n,) * self.N)


def tabular_credit_step(config: TabularCreditConfig, action: GlobalAction) -> tuple[float, bool]:
    """Reward +1 iff the action matches the optimal tuple exactly, else -1.

    Episodes are single-step: the transition always enters the terminal
    state, so done is always true.
    """
    config.spec.validate_action(action)
    reward = 1.0 if tuple(action) == tuple(config.optimal) else -1.0
    return reward, True


class TabularCreditEnv:
    """Stateful wrapper around :func:`tabular_credit_step`.

    The single non-terminal state is represented as a constant
    one-dimensional zero vector so the task plugs into the same training
    loop as the control task.
    """

    def __init__(self, config: TabularCreditConfig) -> None:
        self.config = config
        self.spec = config.spec
        self.observation_dim = 1

    def reset(self) -> np.ndarray:
        return np.zeros(1)

    def step(self, action: GlobalAction) -> tuple[np.ndarray, float, bool]:
        reward, done = tabular_credit_step(self.config, action)
        return np.zeros(1), reward, done


@dataclass(frozen=True)
class PointMassConfig:
    """N independent coordinates pushed by discretised bang-off-bang actions."""

    N: int
    bins: int = 3
    step_scale: float = 0.1
    horizon: int = 50
    target: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        if self.N < 1:
            raise ValueError(f"need at least one dimension, got {self.N}")
        if self.bins < 3 or self.bins % 2 == 0:
            raise ValueError(f"bins must be odd and >= 3 so a zero action exists, got {self.bins}")
        if not self.step_scale > 0:
            raise ValueError(f"step_scale must be positive, got {self.step_scale}")
        if self.horizon < 1:
            raise ValueError(f"horizon must be >= 1, got {self.horizon}")
        target = self.target
        if target is None:
            target = (0.0,) * self.N
        target = tuple(float(x) for x in target)
        if len(target) != self.N:
            raise ValueError(f"target must have {self.N} coordinates, got {len(target)}")
        if any(abs(x) > 1 for x in target):
            raise ValueError("target coordinates must lie in [-1, 1]")
        object.__setattr__(self, "target", target)

    @property
    def spec(self) -> ActionSpaceSpec:
        return ActionSpaceSpec((self.bins,) * self.N)

    @property
    def levels(self) -> np.ndarray:
        """Equally spaced action levels in [-1, 1]; the middle one is 0."""
        return np.linspace(-1.0, 1.0, self.bins)


def point_mass_step(
    state: np.ndarray, action: GlobalAction, config: PointMassConfig, t: int = 0
) -> tuple[np.ndarray, float, bool]:
    """One kinematic step: move, clamp, score by distance to target.

    Each coordinate moves by step_scale times the level of its sub-action
    and is clamped to [-1, 1].  The reward is the negative Euclidean
    distance to the target divided by sqrt(N), so one step's reward lies
    in [-2, 0].  ``t`` is the zero-based index of this step within the
    episode; the episode is done once ``t + 1`` reaches the horizon.
    """
    config.spec.validate_action(action)
    state = np.asarray(state, dtype=np.float64)
    if state.shape != (config.N,):
        raise ValueError(f"state must have shape ({config.N},), got {state.shape}")
    deltas = config.levels[np.asarray(tuple(action))]
    next_state = np.clip(state + config.step_scale * deltas, -1.0, 1.0)
    target = np.asarray(config.target)
    reward = -float(np.linalg.norm(next_state - target)) / np.sqrt(config.N)
    return next_state, reward, t + 1 >= config.horizon


class PointMassEnv:
    """Stateful point-mass episodes with uniform random starts."""

    def __init__(self, config: PointMassConfig, seed: int = 0) -> None:
        self.config = config
        self.spec = config.spec
        self.observation_dim = config.N
        self._rng = np.random.default_rng(seed)
        self._state = np.zeros(config.N)
        self._t = 0

    def reset(self) -> np.ndarray:
        self._state = self._rng.uniform(-1.0, 1.0, size=self.config.N)
        self._t = 0
        return self._state.copy()

    def step(self, action: GlobalAction) -> tuple[np.ndarray, float, bool]:
        next_state, reward, done = point_mass_step(self._state, action, self.config, self._t)
        self._state = next_state
        self._t += 1
        return next_state.copy(), reward, done


@dataclass(frozen=True)
class NoiseWrapperConfig:
    """Gaussian perturbation strengths for rewards and observations."""

    reward_sigma: float = 0.0
    state_sigma: float = 0.0

    def __post_init__(self) -> None:
        if self.reward_sigma < 0 or self.state_sigma < 0:
            raise ValueError("noise scales must be non-negative")


def wrap_noise(transition_stream, config: NoiseWrapperConfig, rng: np.random.Generator):
    """Yield transitions with Gaussian noise on rewards and observations.

    With both sigmas zero this is an exact identity and consumes no random
    numbers.  Otherwise, per transition, draws happen in a fixed order
    (state, next_state, reward) so streams are reproducible.
    """
    for tr in transition_stream:
        state, next_state, reward = tr.state, tr.next_state, tr.reward
        if config.state_sigma > 0:
            state = np.asarray(state, dtype=np.float64)
            next_state = np.asarray(next_state, dtype=np.float64)
            state = state + rng.normal(0.0, config.state_sigma, size=state.shape)
            next_state = next_state + rng.normal(0.0, config.state_sigma, size=next_state.shape)
        if config.reward_sigma > 0:
            reward = reward + float(rng.normal(0.0, config.reward_sigma))
        if state is tr.state and reward == tr.reward and next_state is tr.next_state:
            yield tr
        else:
            yield Transition(
                state=state,
                action=tr.action,
                reward=reward,
                next_state=next_state,
                done=tr.done,
                n_used=tr.n_used,
            )


class NoisyEnv:
    """Observation/reward noise around a stateful environment.

    Only what the agent sees is perturbed; the wrapped environment's
    internal trajectory is identical to an unwrapped run under the same
    action sequence.
    """

    def __init__(self, env, config: NoiseWrapperConfig, seed: int = 0) -> None:
        self.env = env
        self.config = config
        self.spec = env.spec
        self.observation_dim = env.observation_dim
        self._rng = np.random.default_rng(seed)

    def _observe(self, state: np.ndarray) -> np.ndarray:
        if self.config.state_sigma > 0:
            return state + self._rng.normal(0.0, self.config.state_sigma, size=state.shape)
        return state

    def reset(self) -> np.ndarray:
        return self._observe(self.env.reset())

    def step(self, action: GlobalAction) -> tuple[np.ndarray, float, bool]:
        next_state, reward, done = self.env.step(action)
        next_obs = self._observe(next_state)
        if self.config.reward_sigma > 0:
            reward = reward + float(self._rng.normal(0.0, self.config.reward_sigma))
        return next_obs, reward, done
