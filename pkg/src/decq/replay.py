"""n-step transition assembly and proportional prioritized replay.

The assembler turns a stream of raw one-step transitions into n-step
aggregates with the discounted reward sum and the actual horizon used
(``n_used``), truncating at episode boundaries.  The buffer stores
transitions in flat arrays with a sum-tree over priorities, sampling
proportionally to priority^alpha and returning importance-sampling
weights normalised by the batch maximum.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from decq.core import GlobalAction, Transition

__all__ = [
    "NStepAssembler",
    "assemble",
    "SumTree",
    "Batch",
    "PrioritizedBuffer",
]


class NStepAssembler:
    """Rolling window that emits n-step aggregates in episode order.

    Each raw transition must continue the previous one (its state equal to
    the predecessor's next state) until an episode ends; a mismatch means
    the stream skipped or reordered steps and raises.
    """

    def __init__(self, n: int = 3, gamma: float = 0.99) -> None:
        if n < 1:
            raise ValueError(f"horizon must be >= 1, got {n}")
        if not 0 < gamma <= 1:
            raise ValueError(f"discount must lie in (0, 1], got {gamma}")
        self.n = int(n)
        self.gamma = float(gamma)
        self._window: list[Transition] = []

    def __len__(self) -> int:
        return len(self._window)

    def _aggregate(self, start: int, done: bool) -> Transition:
        window = self._window
        reward = 0.0
        scale = 1.0
        for step in window[start:]:
            reward += scale * step.reward
            scale *= self.gamma
        return Transition(
            state=window[start].state,
            action=window[start].action,
            reward=reward,
            next_state=window[-1].next_state,
            done=done,
            n_used=len(window) - start,
        )

    def push(self, raw: Transition) -> list[Transition]:
        """Feed one raw step; returns every aggregate it completes."""
        if raw.n_used != 1:
            raise ValueError("assembler input must be raw one-step transitions")
        if self._window and not np.array_equal(
            np.asarray(raw.state), np.asarray(self._window[-1].next_state)
        ):
            raise ValueError("out-of-order transition: state does not continue the episode")
        self._window.append(raw)
        if raw.done:
            out = [self._aggregate(start, done=True) for start in range(len(self._window))]
            self._window.clear()
            return out
        if len(self._window) == self.n:
            out = [self._aggregate(0, done=False)]
            del self._window[0]
            return out
        return []


def assemble(raw_stream, n: int = 3, gamma: float = 0.99):
    """Generator form of :class:`NStepAssembler` over a finished stream."""
    assembler = NStepAssembler(n=n, gamma=gamma)
    for raw in raw_stream:
        yield from assembler.push(raw)


class SumTree:
    """Array-backed binary sum tree with batched descent and update.

    Leaves sit at a power-of-two offset so every query descends the same
    number of levels, which lets both sampling and priority propagation
    run as whole-batch array operations.
    """

    def __init__(self, capacity: int) -> None:
        if capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {capacity}")
        self.capacity = int(capacity)
        base = 1
        while base < capacity:
            base *= 2
        self._base = base
        self._tree = np.zeros(2 * base, dtype=np.float64)

    @property
    def total(self) -> float:
        return float(self._tree[1])

    def leaf_values(self, indices: np.ndarray) -> np.ndarray:
        return self._tree[self._base + np.asarray(indices)]

    def set(self, indices: np.ndarray, values: np.ndarray) -> None:
        """Write leaf values and recompute every affected ancestor.

        Parents are recomputed from their children rather than patched
        with deltas, so the root never drifts from the true leaf sum.
        """
        indices = np.asarray(indices, dtype=np.int64)
        values = np.asarray(values, dtype=np.float64)
        if indices.size == 0:
            return
        if indices.min() < 0 or indices.max() >= self.capacity:
            raise IndexError("leaf index out of range")
        if np.any(values < 0):
            raise ValueError("priorities must be non-negative")
        # Later writes win when an index repeats in one call, matching a
        # sequential loop over the pairs.
        rev_unique, first_in_rev = np.unique(indices[::-1], return_index=True)
        self._tree[self._base + rev_unique] = values[::-1][first_in_rev]
        nodes = np.unique((self._base + rev_unique) // 2)
        while nodes[0] >= 1:
            self._tree[nodes] = self._tree[2 * nodes] + self._tree[2 * nodes + 1]
            if nodes[0] == 1:
                break
            nodes = np.unique(nodes // 2)

    def find(self, targets: np.ndarray) -> np.ndarray:
        """Leaf index whose prefix-sum interval contains each target mass."""
        targets = np.asarray(targets, dtype=np.float64).copy()
        idx = np.ones(targets.shape, dtype=np.int64)
        while idx[0] < self._base:
            left = 2 * idx
            left_sum = self._tree[left]
            go_right = targets >= left_sum
            targets -= left_sum * go_right
            idx = left + go_right
        leaves = idx - self._base
        # Rounding at the last level can land one past the final leaf when a
        # target sits exactly on the total; clamp back onto stored entries.
        return np.minimum(leaves, self.capacity - 1)


@dataclass(frozen=True)
class Batch:
    """Column arrays for one sampled minibatch."""

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    dones: np.ndarray
    n_used: np.ndarray

    def __len__(self) -> int:
        return self.states.shape[0]


class PrioritizedBuffer:
    """Proportional prioritized replay over fixed-capacity column storage.

    Priorities enter the tree as (|td| + eps_p)^alpha; sampling is i.i.d.
    proportional to the stored mass and importance weights are
    (size * P(i))^(-beta_is) scaled by the batch maximum.  New entries get
    the largest raw priority seen so far so they are sampled at least once
    before their TD error is known.
    """

    def __init__(
        self,
        capacity: int = 500_000,
        alpha: float = 0.6,
        beta_is: float = 0.2,
        eps_p: float = 1e-6,
    ) -> None:
        if capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {capacity}")
        if not (0 <= alpha <= 1 and 0 <= beta_is <= 1):
            raise ValueError("alpha and beta_is must lie in [0, 1]")
        if not eps_p > 0:
            raise ValueError(f"priority floor must be positive, got {eps_p}")
        self.capacity = int(capacity)
        self.alpha = float(alpha)
        self.beta_is = float(beta_is)
        self.eps_p = float(eps_p)
        self._tree = SumTree(self.capacity)
        self._size = 0
        self._next = 0
        self._max_priority = 1.0
        self._cols: dict[str, np.ndarray] | None = None

    def __len__(self) -> int:
        return self._size

    def _allocate(self, first: Transition) -> None:
        state = np.asarray(first.state, dtype=np.float64)
        n_dims = len(first.action)
        self._cols = {
            "states": np.zeros((self.capacity, state.shape[0]), dtype=np.float64),
            "actions": np.zeros((self.capacity, n_dims), dtype=np.int64),
            "rewards": np.zeros(self.capacity, dtype=np.float64),
            "next_states": np.zeros((self.capacity, state.shape[0]), dtype=np.float64),
            "dones": np.zeros(self.capacity, dtype=bool),
            "n_used": np.ones(self.capacity, dtype=np.int64),
        }

    def add(self, transition: Transition) -> None:
        """Append one transition, evicting FIFO once at capacity."""
        if self._cols is None:
            self._allocate(transition)
        cols = self._cols
        i = self._next
        cols["states"][i] = np.asarray(transition.state, dtype=np.float64)
        cols["actions"][i] = tuple(transition.action)
        cols["rewards"][i] = transition.reward
        cols["next_states"][i] = np.asarray(transition.next_state, dtype=np.float64)
        cols["dones"][i] = transition.done
        cols["n_used"][i] = transition.n_used
        self._tree.set(np.array([i]), np.array([self._max_priority**self.alpha]))
        self._next = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def sample(self, batch_size: int = 256, rng: np.random.Generator | None = None):
        """Draw a batch; returns (Batch, leaf indices, IS weights)."""
        if self._size == 0:
            raise RuntimeError("cannot sample from an empty buffer")
        if batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {batch_size}")
        rng = np.random.default_rng() if rng is None else rng
        total = self._tree.total
        targets = rng.uniform(0.0, total, size=batch_size)
        indices = self._tree.find(targets)
        # A zero-mass leaf can only be hit through fp rounding at interval
        # edges; push such draws onto the newest stored entry.
        mass = self._tree.leaf_values(indices)
        if np.any(mass <= 0):
            indices = np.where(mass > 0, indices, (self._next - 1) % self.capacity)
            mass = self._tree.leaf_values(indices)

        probs = mass / total
        weights = (self._size * probs) ** (-self.beta_is)
        weights = weights / weights.max()
        cols = self._cols
        batch = Batch(
            states=cols["states"][indices],
            actions=cols["actions"][indices],
            rewards=cols["rewards"][indices],
            next_states=cols["next_states"][indices],
            dones=cols["dones"][indices],
            n_used=cols["n_used"][indices],
        )
        return batch, indices, weights

    def update_priorities(self, indices: np.ndarray, td_errors: np.ndarray) -> None:
        """Set priority (|td| + eps_p)^alpha for each sampled index."""
        indices = np.asarray(indices, dtype=np.int64)
        td_errors = np.asarray(td_errors, dtype=np.float64)
        if indices.shape != td_errors.shape:
            raise ValueError("indices and td_errors must have matching shapes")
        if indices.size == 0:
            return
        if indices.min() < 0 or indices.max() >= self._size:
            raise IndexError("priority update index outside stored range")
        priorities = np.abs(td_errors) + self.eps_p
        self._tree.set(indices, priorities**self.alpha)
        self._max_priority = max(self._max_priority, float(priorities.max()))

    def transition_at(self, index: int) -> Transition:
        """Reconstruct the stored transition at one leaf index (for tests)."""
        if not 0 <= index < self._size:
            raise IndexError("index outside stored range")
        cols = self._cols
        return Transition(
            state=cols["states"][index].copy(),
            action=GlobalAction(tuple(int(a) for a in cols["actions"][index])),
            reward=float(cols["rewards"][index]),
            next_state=cols["next_states"][index].copy(),
            done=bool(cols["dones"][index]),
            n_used=int(cols["n_used"][index]),
        )
