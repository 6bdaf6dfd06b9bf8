"""CSV input handling shared by all figure scripts.

Inputs are the experiment runner's log files; each reader validates the
header against the columns a figure needs and fails naming the file and
the first missing column.  Files are only ever opened for reading.
"""

from __future__ import annotations

import csv
import glob as globlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = ["FigureSpec", "read_columns", "group_label"]

GROUP_MODES = ("dir", "file")


@dataclass(frozen=True)
class FigureSpec:
    """Where a figure's data comes from and where the image goes.

    ``inputs`` is the resolved, sorted file list; construction fails when
    the glob matched nothing or the smoothing window is degenerate.
    """

    inputs: tuple[str, ...]
    out: str
    group_by: str = "dir"
    smooth_window: int = 1

    def __post_init__(self) -> None:
        if len(self.inputs) < 1:
            raise ValueError("figure needs at least one input CSV")
        if self.group_by not in GROUP_MODES:
            raise ValueError(f"group_by must be one of {GROUP_MODES}, got {self.group_by!r}")
        if self.smooth_window < 1:
            raise ValueError(f"smoothing window must be >= 1, got {self.smooth_window}")

    @classmethod
    def from_glob(
        cls, pattern: str, out: str, group_by: str = "dir", smooth_window: int = 1
    ) -> "FigureSpec":
        matches = sorted(globlib.glob(pattern, recursive=True))
        if not matches:
            raise ValueError(f"input pattern {pattern!r} matched no files")
        return cls(tuple(matches), out, group_by, smooth_window)


def read_columns(path, required: tuple[str, ...]) -> dict[str, np.ndarray]:
    """Load the required columns of one CSV as float arrays."""
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for column in required:
            if column not in header:
                raise ValueError(f"{path}: missing column '{column}'")
        rows = list(reader)
    if not rows:
        raise ValueError(f"{path}: no data rows")
    return {c: np.array([float(r[c]) for r in rows]) for c in required}


def group_label(path, mode: str) -> str:
    """Legend label for one input file: its directory or its file stem."""
    p = Path(path)
    return p.parent.name if mode == "dir" else p.stem
