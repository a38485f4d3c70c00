"""Readers for the benchmark CSV files.

Every loader validates the header against the documented schema and
raises SchemaMismatch naming the offending column, so a renderer never
works on silently misaligned data.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np


class SchemaMismatch(Exception):
    """Input file does not match the documented CSV schema."""


ROLLOUT_COLUMNS = (
    ["t"]
    + [f"x{i}" for i in range(6)]
    + [f"u{i}" for i in range(3)]
    + [f"d{i}" for i in range(3)]
    + [f"dhat{i}" for i in range(3)]
    + [f"xd{i}" for i in range(6)]
)
ABLATION_COLUMNS = ["tier", "M", "N", "mode", "loss"]
STATS_COLUMNS = ["trajectory", "max_abs", "max_rate", "rms"]


def _check_header(path, expected):
    header = Path(path).read_text().splitlines()[0].split(",")
    if header != expected:
        for got, want in zip(header, expected):
            if got != want:
                raise SchemaMismatch(
                    f"{path}: expected column {want!r}, found {got!r}")
        raise SchemaMismatch(
            f"{path}: expected {len(expected)} columns, found {len(header)}")


def method_label(path) -> str:
    """rollout_<task>_<method>.csv -> method; otherwise the file stem."""
    stem = Path(path).stem
    if stem.startswith("rollout_"):
        return stem.split("_", 2)[-1]
    return stem


def load_rollout(path) -> dict:
    """One closed-loop log: time, state, input, injected and estimated
    disturbance, reference."""
    _check_header(path, ROLLOUT_COLUMNS)
    table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if table.shape[1] != len(ROLLOUT_COLUMNS):
        raise SchemaMismatch(f"{path}: ragged rollout table")
    return {
        "method": method_label(path),
        "t": table[:, 0],
        "pos": table[:, 1:4],
        "d": table[:, 10:13],
        "d_hat": table[:, 13:16],
        "ref_pos": table[:, 16:19],
    }


def load_ablation(path) -> list:
    _check_header(path, ABLATION_COLUMNS)
    rows = []
    for line in Path(path).read_text().splitlines()[1:]:
        if not line.strip():
            continue
        tier, m, n, mode, loss = line.split(",")
        rows.append((tier, int(m), int(n), mode, float(loss)))
    if not rows:
        raise SchemaMismatch(f"{path}: ablation table is empty")
    return rows


def load_stats(path) -> dict:
    _check_header(path, STATS_COLUMNS)
    max_abs, max_rate = [], []
    for line in Path(path).read_text().splitlines()[1:]:
        if not line.strip():
            continue
        _, a, r, _ = line.split(",")
        max_abs.append(float(a))
        max_rate.append(float(r))
    if not max_abs:
        raise SchemaMismatch(f"{path}: stats table is empty")
    # stats.csv sits in a per-tier directory; ad-hoc files carry their
    # tier in the file name instead
    stem = Path(path).stem
    label = Path(path).parent.name if stem == "stats" else stem
    return {
        "label": label or stem,
        "max_abs": np.asarray(max_abs),
        "max_rate": np.asarray(max_rate),
    }
