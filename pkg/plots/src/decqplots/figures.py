"""Figure construction from experiment CSV logs.

Each function takes a FigureSpec, reads the listed CSVs, and writes one
image to ``spec.out``; the output format follows the file extension.
Inputs sharing a legend label (same directory, or same file stem) are
treated as seeds of one run and aggregated.
"""

from __future__ import annotations

import csv

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .io import FigureSpec, group_label, read_columns
from .stats import aggregate_curves, cvar, detrend, smooth

__all__ = ["plot_curves", "plot_cvar", "plot_credit", "plot_theory_table"]

CREDIT_PREFIX = "tabular_credit_"


def _grouped(spec: FigureSpec) -> dict[str, list[str]]:
    groups: dict[str, list[str]] = {}
    for path in spec.inputs:
        groups.setdefault(group_label(path, spec.group_by), []).append(path)
    return groups


def plot_curves(spec: FigureSpec, value_column: str = "eval_return") -> str:
    """Mean learning curve per group with a 95% confidence band.

    Every file contributes one seed: its value column is smoothed with a
    trailing window, then seeds are averaged per update index.  Seeds of
    unequal length are truncated to the shortest before aggregation.
    """
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    for label, paths in sorted(_grouped(spec).items()):
        seeds = []
        steps = None
        for path in paths:
            cols = read_columns(path, ("update_idx", value_column))
            seeds.append(smooth(cols[value_column], spec.smooth_window))
            if steps is None or len(cols["update_idx"]) < len(steps):
                steps = cols["update_idx"]
        horizon = min(len(s) for s in seeds)
        mean, half = aggregate_curves([s[:horizon] for s in seeds])
        (line,) = ax.plot(steps[:horizon], mean, label=label)
        ax.fill_between(
            steps[:horizon], mean - half, mean + half,
            alpha=0.2, color=line.get_color(), linewidth=0.0,
        )
    ax.set_xlabel("update")
    ax.set_ylabel(value_column)
    ax.legend()
    fig.tight_layout()
    fig.savefig(spec.out)
    plt.close(fig)
    return spec.out


def plot_cvar(spec: FigureSpec, level: float = 0.95, column: str = "grad_norm") -> str:
    """Tail-risk bar chart of per-update changes in a logged quantity.

    Each seed's column is detrended (first differences) and reduced to
    its CVaR at ``level``; bars show the group mean with standard-error
    whiskers, zero when a group has a single seed.
    """
    labels, heights, errors = [], [], []
    for label, paths in sorted(_grouped(spec).items()):
        scores = np.array(
            [cvar(detrend(read_columns(path, (column,))[column]), level) for path in paths]
        )
        labels.append(label)
        heights.append(float(scores.mean()))
        if len(scores) > 1:
            errors.append(float(scores.std(ddof=1) / np.sqrt(len(scores))))
        else:
            errors.append(0.0)
    fig, ax = plt.subplots(figsize=(1.5 + 1.2 * len(labels), 4.0))
    ax.bar(labels, heights, yerr=errors, capsize=4.0, color="tab:blue", alpha=0.85)
    ax.set_ylabel(f"CVaR@{level:g} of d({column})")
    fig.tight_layout()
    fig.savefig(spec.out)
    plt.close(fig)
    return spec.out


def plot_credit(spec: FigureSpec) -> str:
    """Optimal-sub-action frequency curves with their stored CI bands."""
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    for path in spec.inputs:
        cols = read_columns(path, ("update_idx", "frequency", "ci_halfwidth"))
        label = group_label(path, "file")
        if label.startswith(CREDIT_PREFIX):
            label = label[len(CREDIT_PREFIX):]
        freq = smooth(cols["frequency"], spec.smooth_window)
        ci = smooth(cols["ci_halfwidth"], spec.smooth_window)
        (line,) = ax.plot(cols["update_idx"], freq, label=label)
        ax.fill_between(
            cols["update_idx"], freq - ci, freq + ci,
            alpha=0.2, color=line.get_color(), linewidth=0.0,
        )
    ax.set_xlabel("update")
    ax.set_ylabel("optimal sub-action frequency")
    ax.set_ylim(0.0, 1.0)
    ax.legend()
    fig.tight_layout()
    fig.savefig(spec.out)
    plt.close(fig)
    return spec.out

THEORY_COLUMNS = (
    "mode", "N", "sizes", "b", "gamma", "K",
    "mean_cf", "var_cf", "mean_mc", "var_mc", "se", "pass",
)


def _cell(value: str) -> str:
    try:
        return f"{float(value):.5g}"
    except ValueError:
        return value


def plot_theory_table(spec: FigureSpec) -> str:
    """Render the closed-form vs Monte Carlo table as a figure.

    Only the first input file is used; numeric cells are shortened to
    five significant digits, text cells pass through untouched.
    """
    path = spec.inputs[0]
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for column in THEORY_COLUMNS:
            if column not in header:
                raise ValueError(f"{path}: missing column '{column}'")
        rows = [[_cell(r[c]) for c in THEORY_COLUMNS] for r in reader]
    if not rows:
        raise ValueError(f"{path}: no data rows")
    fig, ax = plt.subplots(figsize=(10.0, 0.5 + 0.3 * len(rows)))
    ax.axis("off")
    table = ax.table(cellText=rows, colLabels=list(THEORY_COLUMNS), loc="center")
    table.auto_set_font_size(False)
    table.set_fontsize(8)
    fig.tight_layout()
    fig.savefig(spec.out)
    plt.close(fig)
    return spec.out
