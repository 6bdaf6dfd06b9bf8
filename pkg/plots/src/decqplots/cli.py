"""Console entry points, one per figure.

All four share the flag surface ``--input GLOB --out PATH --group-by
{dir,file}``; input problems (no matches, missing columns, unreadable
files) print ``error: ...`` on stderr and exit with status 2.
"""

from __future__ import annotations

import argparse
import sys
from collections.abc import Callable, Sequence

from .figures import plot_credit, plot_curves, plot_cvar, plot_theory_table
from .io import GROUP_MODES, FigureSpec

__all__ = ["main_curves", "main_cvar", "main_credit", "main_theory"]


def _parser(description: str, default_group: str) -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description=description)
    parser.add_argument("--input", required=True, help="glob over input CSV files")
    parser.add_argument("--out", required=True, help="output image path")
    parser.add_argument(
        "--group-by", choices=GROUP_MODES, default=default_group,
        help="legend label source: parent directory or file stem",
    )
    parser.add_argument(
        "--smooth", type=int, default=1, help="trailing moving-average window"
    )
    return parser


def _run(build: Callable[[argparse.Namespace], str], args: argparse.Namespace) -> int:
    try:
        out = build(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(out)
    return 0


def _spec(args: argparse.Namespace) -> FigureSpec:
    return FigureSpec.from_glob(args.input, args.out, args.group_by, args.smooth)


def main_curves(argv: Sequence[str] | None = None) -> int:
    parser = _parser("Across-seed learning curves with confidence bands.", "dir")
    parser.add_argument(
        "--value-column", default="eval_return", help="CSV column to plot"
    )
    args = parser.parse_args(argv)
    return _run(lambda a: plot_curves(_spec(a), a.value_column), args)


def main_cvar(argv: Sequence[str] | None = None) -> int:
    parser = _parser("Tail risk of per-update changes in a logged column.", "dir")
    parser.add_argument("--level", type=float, default=0.95, help="CVaR level in (0, 1]")
    parser.add_argument("--column", default="grad_norm", help="CSV column to reduce")
    args = parser.parse_args(argv)
    return _run(lambda a: plot_cvar(_spec(a), a.level, a.column), args)


def main_credit(argv: Sequence[str] | None = None) -> int:
    parser = _parser("Optimal-sub-action frequency curves.", "file")
    args = parser.parse_args(argv)
    return _run(lambda a: plot_credit(_spec(a)), args)


def main_theory(argv: Sequence[str] | None = None) -> int:
    parser = _parser("Closed-form vs Monte Carlo moment table.", "file")
    args = parser.parse_args(argv)
    return _run(lambda a: plot_theory_table(_spec(a)), args)
