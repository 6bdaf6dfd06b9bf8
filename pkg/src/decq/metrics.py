"""Evaluation returns and training-stability statistics.

Stability is measured on the detrended gradient-norm series (consecutive
differences) via conditional value at risk: the mean of the samples at or
above the nearest-rank value-at-risk quantile.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from decq.core import joint_argmax

__all__ = ["RunLog", "detrend", "cvar", "evaluate"]


@dataclass
class RunLog:
    """In-memory record of one training run.

    ``updates`` rows are (update_idx, loss, grad_norm, epsilon); ``evals``
    rows are (update_idx, eval_return).  Update indices must be appended
    in strictly increasing order.
    """

    seed: int
    config_hash: str
    updates: list[tuple[int, float, float, float]] = field(default_factory=list)
    evals: list[tuple[int, float]] = field(default_factory=list)

    def record_update(self, update_idx: int, loss: float, grad_norm: float, epsilon: float) -> None:
        if self.updates and update_idx <= self.updates[-1][0]:
            raise ValueError("update_idx must be strictly increasing")
        self.updates.append((update_idx, float(loss), float(grad_norm), float(epsilon)))

    def record_eval(self, update_idx: int, eval_return: float) -> None:
        if self.evals and update_idx <= self.evals[-1][0]:
            raise ValueError("update_idx must be strictly increasing")
        self.evals.append((update_idx, float(eval_return)))

    def grad_norms(self) -> np.ndarray:
        return np.array([row[2] for row in self.updates])


def detrend(grad_norms) -> np.ndarray:
    """Consecutive differences of a gradient-norm series.

    Removes the slow drift of the norm so the stability statistic looks at
    update-to-update jumps; output is one element shorter than the input.
    """
    series = np.asarray(grad_norms, dtype=np.float64)
    if series.ndim != 1 or series.shape[0] < 2:
        raise ValueError("detrend needs a flat series of at least two values")
    return np.diff(series)


def cvar(samples, level: float = 0.95) -> float:
    """Mean of the upper tail at or beyond the nearest-rank quantile.

    The value at risk is the sorted sample at rank ceil(level * n)
    (1-based); the result is the mean of every sample >= that value, so it
    always dominates the quantile itself.
    """
    if not 0 < level < 1:
        raise ValueError(f"level must lie in (0, 1), got {level}")
    data = np.asarray(samples, dtype=np.float64)
    if data.ndim != 1 or data.size == 0:
        raise ValueError("cvar needs a non-empty flat sample")
    # The tiny nudge keeps ranks exact when level * n is an integer that
    # floating point would round up (e.g. 0.95 * 20).
    rank = int(math.ceil(level * data.size - 1e-12))
    rank = min(max(rank, 1), data.size)
    var = np.sort(data)[rank - 1]
    tail = data[data >= var]
    return float(tail.mean())


def evaluate(agent, env, episodes: int = 1, rng: np.random.Generator | None = None) -> float:
    """Mean undiscounted return of the greedy policy over fresh episodes.

    The agent is queried through ``greedy_utilities(state)`` (per-dimension
    utility vectors under evaluation mode); the greedy global action is the
    per-dimension argmax.  ``rng`` is accepted for callers whose envs want
    reseeding hooks; the policy itself uses no randomness.
    """
    if episodes < 1:
        raise ValueError(f"episodes must be >= 1, got {episodes}")
    total = 0.0
    for _ in range(episodes):
        state = env.reset()
        done = False
        while not done:
            action = joint_argmax(agent.greedy_utilities(state))
            state, reward, done = env.step(action)
            total += reward
    return total / episodes
