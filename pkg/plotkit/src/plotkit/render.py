"""The four figure kinds rendered from benchmark CSVs.

render() never touches the inputs beyond reading them, and returns the
statistics drawn on the figure so callers (and tests) can verify them
against an independent recomputation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .schema import SchemaMismatch, load_ablation, load_rollout, load_stats

KINDS = ("tracking", "boxplot", "ablation", "distribution")


@dataclass
class PlotSpec:
    kind: str
    inputs: list
    out: str
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SchemaMismatch(f"unknown plot kind {self.kind!r}")
        if not self.inputs:
            raise SchemaMismatch("no input files given")


def box_stats(values: np.ndarray) -> dict:
    """Median/quartile/whisker summary with the 1.5 IQR convention."""
    q1, med, q3 = np.percentile(values, [25.0, 50.0, 75.0])
    iqr = q3 - q1
    lo = values[values >= q1 - 1.5 * iqr].min()
    hi = values[values <= q3 + 1.5 * iqr].max()
    return {"med": float(med), "q1": float(q1), "q3": float(q3),
            "whislo": float(lo), "whishi": float(hi)}


def _render_tracking(spec, ax):
    stats = {}
    for path in spec.inputs:
        log = load_rollout(path)
        err = np.linalg.norm(log["pos"] - log["ref_pos"], axis=1)
        sc = ax.scatter(log["pos"][:, 0], log["pos"][:, 1], c=err, s=4,
                        cmap="viridis")
        stats[log["method"]] = {"mean_err": float(err.mean()),
                                "max_err": float(err.max())}
    ref = load_rollout(spec.inputs[0])["ref_pos"]
    ax.plot(ref[:, 0], ref[:, 1], "k--", lw=1, label="reference")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_aspect("equal")
    ax.legend(loc="upper right", fontsize=8)
    plt.colorbar(sc, ax=ax, label="position error [m]")
    ax.set_title("tracking")
    return stats


def _render_boxplot(spec, ax):
    metric = spec.options.get("metric", "estimation")
    stats = {}
    boxes = []
    for path in spec.inputs:
        log = load_rollout(path)
        if metric == "estimation":
            err = np.linalg.norm(log["d_hat"] - log["d"], axis=1)
        else:
            err = np.linalg.norm(log["pos"] - log["ref_pos"], axis=1)
        s = box_stats(err)
        stats[log["method"]] = s
        boxes.append({"label": log["method"], **s, "fliers": []})
    ax.bxp(boxes, showfliers=False)
    ax.set_ylabel(f"{metric} error "
                  + ("[m/s$^2$]" if metric == "estimation" else "[m]"))
    ax.tick_params(axis="x", rotation=30)
    ax.set_title(f"per-step {metric} error")
    return stats


def _render_ablation(spec, fig):
    rows = []
    for path in spec.inputs:
        rows.extend(load_ablation(path))
    tiers = sorted({r[0] for r in rows})
    axes = fig.subplots(1, len(tiers), squeeze=False)[0]
    stats = {}
    for ax, tier in zip(axes, tiers):
        for mode in ("ridge", "online"):
            for m in sorted({r[1] for r in rows}):
                pts = sorted((r[2], r[4]) for r in rows
                             if r[0] == tier and r[1] == m and r[3] == mode)
                if not pts:
                    continue
                ns, losses = zip(*pts)
                ax.plot(ns, losses, marker="o",
                        ls="-" if mode == "ridge" else "--",
                        label=f"M={m} {mode}")
                stats[(tier, m, mode)] = dict(zip(ns, losses))
        ax.set_title(tier)
        ax.set_xlabel("regression length N")
        ax.set_yscale("log")
        ax.legend(fontsize=7)
    axes[0].set_ylabel("prediction MSE")
    return stats


def _render_distribution(spec, ax):
    stats = {}
    for path in spec.inputs:
        data = load_stats(path)
        ax.scatter(data["max_abs"], data["max_rate"], s=14, alpha=0.7,
                   label=data["label"])
        stats[data["label"]] = {
            "max_abs": float(data["max_abs"].max()),
            "max_rate": float(data["max_rate"].max()),
        }
    ax.set_xlabel("max |d| [m/s$^2$]")
    ax.set_ylabel("max |d'| [m/s$^3$]")
    ax.legend(fontsize=8)
    ax.set_title("disturbance distribution")
    return stats


def render(spec: PlotSpec) -> dict:
    """Render one figure; returns the statistics annotated on it."""
    if spec.kind == "ablation":
        fig = plt.figure(figsize=(8, 3.2))
        stats = _render_ablation(spec, fig)
    else:
        fig, ax = plt.subplots(figsize=(5.5, 4.2))
        stats = {
            "tracking": _render_tracking,
            "boxplot": _render_boxplot,
            "distribution": _render_distribution,
        }[spec.kind](spec, ax)
    fig.tight_layout()
    out = Path(spec.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, dpi=120)
    plt.close(fig)
    return stats
