"""Plotting companion for the experiment CSV logs.

Reads the runner's CSV outputs (learning curves, gradient norms, credit
frequency curves, the moment-verification table) and renders figures.
Talks to the experiment package only through those files.
"""

from .figures import plot_credit, plot_curves, plot_cvar, plot_theory_table
from .io import FigureSpec, read_columns
from .stats import aggregate_curves, cvar, detrend, smooth

__all__ = [
    "FigureSpec",
    "read_columns",
    "aggregate_curves",
    "cvar",
    "detrend",
    "smooth",
    "plot_curves",
    "plot_cvar",
    "plot_credit",
    "plot_theory_table",
]
