"""Trajectory dataset files.

One CSV per trajectory.  Two comment lines carry the dimensions and a
JSON metadata blob (tier, seed, scenario), then a header row and the
data: time, full state, input, ground-truth disturbance on the velocity
rows.  Floats are written with %.17g so identical runs produce identical
bytes.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

DATASET_FORMAT = "metadob.dataset/v1"


@dataclass
class TrajectoryData:
    t: np.ndarray               # (T,)
    x: np.ndarray               # (T, n)
    u: np.ndarray               # (T, m)
    d: np.ndarray               # (T, n_d) disturbance on the velocity rows
    dt: float
    meta: dict = field(default_factory=dict)

    @property
    def velocity(self) -> np.ndarray:
        return self.x[:, -self.d.shape[1]:]


def save_trajectory(path, data: TrajectoryData) -> None:
    n, m, nd = data.x.shape[1], data.u.shape[1], data.d.shape[1]
    cols = (["t"]
            + [f"x{i}" for i in range(n)]
            + [f"u{i}" for i in range(m)]
            + [f"d{i}" for i in range(nd)])
    table = np.column_stack([data.t, data.x, data.u, data.d])
    buf = io.StringIO()
    buf.write(f"# {DATASET_FORMAT} n={n} m={m} dt={data.dt:.17g}\n")
    buf.write(f"# meta: {json.dumps(data.meta, sort_keys=True)}\n")
    buf.write(",".join(cols) + "\n")
    np.savetxt(buf, table, delimiter=",", fmt="%.17g")
    Path(path).write_text(buf.getvalue())


def load_trajectory(path) -> TrajectoryData:
    text = Path(path).read_text()
    lines = text.splitlines()
    head = lines[0].lstrip("# ").split()
    if head[0] != DATASET_FORMAT:
        raise ValueError(f"unknown dataset format in {path}: {head[0]!r}")
    fields = dict(kv.split("=") for kv in head[1:])
    n, m = int(fields["n"]), int(fields["m"])
    dt = float(fields["dt"])
    meta = json.loads(lines[1].split("meta:", 1)[1]) if "meta:" in lines[1] else {}
    table = np.loadtxt(io.StringIO("\n".join(lines[3:])), delimiter=",", ndmin=2)
    return TrajectoryData(
        t=table[:, 0],
        x=table[:, 1:1 + n],
        u=table[:, 1 + n:1 + n + m],
        d=table[:, 1 + n + m:],
        dt=dt,
        meta=meta,
    )


def load_dataset(directory) -> list:
    """All trajectory files in a directory, sorted by name."""
    paths = sorted(Path(directory).glob("traj_*.csv"))
    return [load_trajectory(p) for p in paths]
