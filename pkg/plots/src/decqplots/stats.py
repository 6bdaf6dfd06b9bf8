"""Numeric reductions for figure generation.

These deliberately re-implement the experiment suite's conventions
(trailing-window smoothing, diff detrending, nearest-rank CVaR,
normal-approximation confidence bands) from the definitions alone, so the
plotting package stays importable without the experiment code while still
agreeing with it on shared fixtures.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = ["smooth", "aggregate_curves", "detrend", "cvar"]


def smooth(values, window: int = 1) -> np.ndarray:
    """Trailing moving average with partial windows at the start.

    ``window=1`` is the exact identity; otherwise element ``t`` averages
    the last ``window`` values up to and including ``t``, shrinking the
    window near the start so the output length matches the input.
    """
    if window < 1:
        raise ValueError(f"smoothing window must be >= 1, got {window}")
    series = np.asarray(values, dtype=np.float64)
    if series.ndim != 1:
        raise ValueError("smooth expects a flat series")
    if window == 1:
        return series.copy()
    out = np.empty_like(series)
    csum = np.cumsum(series)
    for t in range(series.size):
        lo = max(0, t - window + 1)
        total = csum[t] - (csum[lo - 1] if lo > 0 else 0.0)
        out[t] = total / (t - lo + 1)
    return out


def aggregate_curves(per_seed: list[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """Across-seed mean and 95% band half-width per step.

    The band is 1.96 * sample std / sqrt(seeds); with one seed it
    collapses to zero width rather than propagating the undefined sample
    deviation.
    """
    if not per_seed:
        raise ValueError("need at least one seed series")
    stacked = np.stack([np.asarray(s, dtype=np.float64) for s in per_seed])
    mean = stacked.mean(axis=0)
    if stacked.shape[0] == 1:
        return mean, np.zeros_like(mean)
    half = 1.96 * stacked.std(axis=0, ddof=1) / np.sqrt(stacked.shape[0])
    return mean, half


def detrend(values) -> np.ndarray:
    """Consecutive differences, one element shorter than the input."""
    series = np.asarray(values, dtype=np.float64)
    if series.ndim != 1 or series.shape[0] < 2:
        raise ValueError("detrend needs a flat series of at least two values")
    return np.diff(series)


def cvar(samples, level: float = 0.95) -> float:
    """Mean of the tail at or beyond the nearest-rank quantile.

    Rank = ceil(level * n) (1-based, with a tiny nudge against floating
    point rounding the product up); the result averages every sample
    greater than or equal to the sorted value at that rank.
    """
    if not 0 < level < 1:
        raise ValueError(f"level must lie in (0, 1), got {level}")
    data = np.asarray(samples, dtype=np.float64)
    if data.ndim != 1 or data.size == 0:
        raise ValueError("cvar needs a non-empty flat sample")
    rank = int(math.ceil(level * data.size - 1e-12))
    rank = min(max(rank, 1), data.size)
    threshold = np.sort(data)[rank - 1]
    return float(data[data >= threshold].mean())
