"""CSV/JSON artifact IO.

All floats are printed with 17 significant digits so a written trajectory
round-trips losslessly; NaN cells are written empty.  Artifact writing is
deterministic for deterministic inputs, which makes byte-identical re-runs a
testable contract; the manifest records a sha256 per artifact.
"""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import Trajectory
from .errors import ConfigError

SCHEMA_COLUMNS = Trajectory.COLUMNS


def format_float(x: float) -> str:
    if isinstance(x, float) and math.isnan(x):
        return ""
    return f"{float(x):.17g}"


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    lines = [",".join(header)]
    for row in rows:
        cells = [cell if isinstance(cell, str) else format_float(cell) for cell in row]
        lines.append(",".join(cells))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_trajectory(path: Path, traj: Trajectory) -> None:
    columns = [traj.column(name) for name in SCHEMA_COLUMNS]
    write_csv(path, SCHEMA_COLUMNS, zip(*columns))


def read_trajectory(path: Path) -> Trajectory:
    text = path.read_text(encoding="utf-8").strip().splitlines()
    if not text:
        raise ConfigError(str(path), "empty trajectory file")
    header = text[0].split(",")
    if tuple(header) != SCHEMA_COLUMNS:
        raise ConfigError(str(path), f"unexpected columns {header}, want {list(SCHEMA_COLUMNS)}")
    data = {name: [] for name in SCHEMA_COLUMNS}
    for line in text[1:]:
        cells = line.split(",")
        for name, cell in zip(SCHEMA_COLUMNS, cells):
            data[name].append(float(cell) if cell != "" else math.nan)
    return Trajectory(**{name: np.asarray(vals) for name, vals in data.items()})


def mean_trajectory(trajectories: Sequence[Trajectory]) -> Trajectory:
    """Column-wise mean across seeds; requires identical episode grids."""
    base = trajectories[0]
    for other in trajectories[1:]:
        if not np.array_equal(base.t, other.t):
            raise ConfigError("trajectories", "seed trajectories disagree on the episode grid")
    stacked = {
        name: np.mean([traj.column(name) for traj in trajectories], axis=0)
        for name in SCHEMA_COLUMNS
    }
    return Trajectory(**stacked, meta={"engine": "sim-mean", "n_seeds": len(trajectories)})


def sha256_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(
    out_dir: Path, config: dict, artifacts: Sequence[Path], wall_clock_s: float, version: str
) -> Path:
    manifest = {
        "config": config,
        "artifacts": {
            str(p.relative_to(out_dir)): sha256_file(p) for p in sorted(artifacts)
        },
        "wall_clock_s": wall_clock_s,
        "version": version,
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path
