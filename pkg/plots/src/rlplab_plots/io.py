"""Schema-checked CSV loading.

The plotting side deliberately has no dependency on the engine package: it
consumes the documented CSV schemas and nothing else, so every number in a
figure comes from a checked-in artifact.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

TRAJECTORY_COLUMNS = (
    "alpha",
    "t",
    "R",
    "Q",
    "rho",
    "eps_g",
    "expected_reward",
    "empirical_reward",
)

# columns that stay as strings
_LABEL_COLUMNS = {"label", "stability", "outcome", "metric", "family"}


class SchemaError(ValueError):
    def __init__(self, path: Path, column: str, message: str):
        super().__init__(f"{path}: column {column!r}: {message}")
        self.column = column


class EmptyDataError(ValueError):
    def __init__(self, path: Path):
        super().__init__(f"{path}: no data rows")


def load_table(path: Path, required: tuple[str, ...]) -> dict:
    if not path.exists():
        raise FileNotFoundError(f"missing input {path}")
    lines = path.read_text(encoding="utf-8").strip().splitlines()
    if not lines:
        raise EmptyDataError(path)
    header = lines[0].split(",")
    for column in required:
        if column not in header:
            raise SchemaError(path, column, "missing from header")
    if len(lines) == 1:
        raise EmptyDataError(path)
    raw = {name: [] for name in header}
    for line in lines[1:]:
        for name, cell in zip(header, line.split(",")):
            raw[name].append(cell)
    out = {}
    for name, cells in raw.items():
        if name in _LABEL_COLUMNS:
            out[name] = cells
        else:
            try:
                out[name] = np.array(
                    [float(c) if c != "" else math.nan for c in cells], dtype=float
                )
            except ValueError as exc:
                raise SchemaError(path, name, f"non-numeric cell ({exc})") from exc
    return out


def load_trajectory(path: Path) -> dict:
    return load_table(path, TRAJECTORY_COLUMNS)
