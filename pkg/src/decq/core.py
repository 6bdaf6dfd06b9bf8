"""Core types for factorisable MDPs.

An action space is factorised as a Cartesian product of N discrete
sub-action sets with sizes ``[n_1, ..., n_N]``.  A global action picks one
sub-action per dimension.  The global Q-value is composed from
per-dimension utility values, either as their mean or their sum, which
makes the global argmax decompose into N independent per-dimension
argmaxes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "ActionSpaceSpec",
    "GlobalAction",
    "Transition",
    "joint_argmax",
    "global_q",
]


@dataclass(frozen=True)
class ActionSpaceSpec:
    """The factorisation of an action space: sub-action counts per dimension.

    Every dimension must offer at least two sub-actions; a one-action
    dimension presents no decision and is rejected (the bias/variance
    inequalities verified by :mod:`decq.theory` assume sizes >= 2).
    """

    sizes: tuple[int, ...]

    def __post_init__(self) -> None:
        sizes = tuple(int(n) for n in self.sizes)
        object.__setattr__(self, "sizes", sizes)
        if len(sizes) < 1:
            raise ValueError("action space needs at least one dimension")
        for i, n in enumerate(sizes):
            if n < 2:
                raise ValueError(
                    f"dimension {i} has {n} sub-actions; every dimension needs >= 2"
                )

    @property
    def dims(self) -> int:
        return len(self.sizes)

    @property
    def num_atomic(self) -> int:
        """Number of distinct global actions, prod of the sizes."""
        return math.prod(self.sizes)

    def validate_action(self, action: "GlobalAction") -> None:
        """Raise ValueError unless ``action`` is well-formed for this space."""
        if len(action.sub_actions) != self.dims:
            raise ValueError(
                f"action has {len(action.sub_actions)} sub-actions, expected {self.dims}"
            )
        for i, (a, n) in enumerate(zip(action.sub_actions, self.sizes)):
            if not 0 <= a < n:
                raise ValueError(f"sub-action {a} out of range [0, {n}) in dimension {i}")

    def random_action(self, rng: np.random.Generator) -> "GlobalAction":
        return GlobalAction(tuple(int(rng.integers(n)) for n in self.sizes))


@dataclass(frozen=True)
class GlobalAction:
    """One full combination of sub-actions, one index per dimension."""

    sub_actions: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "sub_actions", tuple(int(a) for a in self.sub_actions))

    def __iter__(self):
        return iter(self.sub_actions)

    def __len__(self) -> int:
        return len(self.sub_actions)

    def __getitem__(self, i: int) -> int:
        return self.sub_actions[i]


@dataclass(frozen=True)
class Transition:
    """One (possibly multi-step aggregated) environment transition.

    ``reward`` carries the discounted aggregate of ``n_used`` consecutive
    raw rewards; ``next_state`` is the state observed after those steps.
    """

    state: np.ndarray
    action: GlobalAction
    reward: float
    next_state: np.ndarray
    done: bool
    n_used: int = 1

    def __post_init__(self) -> None:
        if not math.isfinite(self.reward):
            raise ValueError(f"non-finite reward {self.reward}")
        if self.n_used < 1:
            raise ValueError(f"n_used must be >= 1, got {self.n_used}")


def joint_argmax(utilities: Sequence[np.ndarray]) -> GlobalAction:
    """Per-dimension argmax over utility vectors; ties go to the lowest index.

    Because the global Q-value is a monotone aggregate (mean or sum) of one
    utility per dimension, maximising each dimension independently
    maximises the global value.
    """
    if len(utilities) == 0:
        raise ValueError("need at least one utility vector")
    picks = []
    for i, u in enumerate(utilities):
        u = np.asarray(u)
        if u.size == 0:
            raise ValueError(f"empty utility vector in dimension {i}")
        picks.append(int(np.argmax(u)))
    return GlobalAction(tuple(picks))


def global_q(utilities: Sequence[np.ndarray], action: GlobalAction, mode: str = "mean") -> float:
    """Global Q-value of ``action``: mean or sum of the selected utilities."""
    if mode not in ("mean", "sum"):
        raise ValueError(f"unknown mode {mode!r}, expected 'mean' or 'sum'")
    if len(action) != len(utilities):
        raise ValueError(
            f"action has {len(action)} sub-actions but got {len(utilities)} utility vectors"
        )
    total = 0.0
    for u, a in zip(utilities, action):
        total += float(np.asarray(u)[a])
    if mode == "mean":
        return total / len(utilities)
    return total
