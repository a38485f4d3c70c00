import numpy as np
import pytest

ROLLOUT_HEADER = (
    "t," + ",".join(f"x{i}" for i in range(6)) + ","
    + ",".join(f"u{i}" for i in range(3)) + ","
    + ",".join(f"d{i}" for i in range(3)) + ","
    + ",".join(f"dhat{i}" for i in range(3)) + ","
    + ",".join(f"xd{i}" for i in range(6))
)


def write_rollout(path, seed, steps=160):
    """Deterministic synthetic rollout file in the documented schema."""
    rng = np.random.default_rng(seed)
    t = np.arange(steps) * 0.01
    ref = np.column_stack([np.cos(t), 0.5 * np.sin(2 * t), np.ones_like(t)])
    pos = ref + rng.normal(0, 0.02, size=(steps, 3))
    vel = np.gradient(pos, 0.01, axis=0)
    u = rng.normal(0, 1, size=(steps, 3))
    d = np.column_stack([np.sin(0.7 * t), 0.3 * np.cos(t), 0.1 + 0 * t])
    d_hat = d + rng.normal(0, 0.05, size=(steps, 3))
    ref_vel = np.gradient(ref, 0.01, axis=0)
    table = np.column_stack([t, pos, vel, u, d, d_hat, ref, ref_vel])
    lines = [ROLLOUT_HEADER]
    lines += [",".join(f"{v:.17g}" for v in row) for row in table]
    path.write_text("\n".join(lines) + "\n")
    return path


def write_ablation(path):
    rows = ["tier,M,N,mode,loss"]
    for tier in ("meta-learn", "shifted"):
        base = 0.002 if tier == "meta-learn" else 0.02
        for m in (1, 3):
            for n in (5, 10, 20):
                rows.append(f"{tier},{m},{n},ridge,{base * (1.3 if m == 1 else 1.0) / n:.6g}")
                rows.append(f"{tier},{m},{n},online,{base * 40 * (1.0 + 5.0 / n):.6g}")
    path.write_text("\n".join(rows) + "\n")
    return path


def write_stats(path, seed, scale=1.0):
    rng = np.random.default_rng(seed)
    rows = ["trajectory,max_abs,max_rate,rms"]
    for i in range(12):
        a = scale * rng.uniform(0.5, 3.0)
        rows.append(f"traj_{i:04d}.csv,{a:.6g},{a * rng.uniform(0.3, 2.0):.6g},"
                    f"{a * 0.6:.6g}")
    path.write_text("\n".join(rows) + "\n")
    return path


@pytest.fixture
def golden(tmp_path):
    files = {
        "rollouts": [
            write_rollout(tmp_path / f"rollout_estimation_{m}.csv", seed=i)
            for i, m in enumerate(["FirstOrder", "MetaAdaptFC", "MetaLSFC"])
        ],
        "ablation": write_ablation(tmp_path / "ablation.csv"),
        "stats": [
            write_stats(tmp_path / "stats_learn.csv", 1, scale=1.0),
            write_stats(tmp_path / "stats_shifted.csv", 2, scale=2.0),
        ],
        "dir": tmp_path,
    }
    return files
