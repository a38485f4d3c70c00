#!/usr/bin/env python3
"""The full six-method benchmark at demo scale.

Trains a small representation, then runs the estimator bank through the
paired-seed benchmark (estimation task without feedforward, control task
with it) on the drag + mass-offset + sine composite.  Expect the
headline ordering: the least-squares and feedback-calibrated meta
methods in front, the lag-limited classics behind.  Runs in roughly a
minute; pass an output directory to also get the CSV artifacts.
"""

import sys

from metadob.harness import (
    ExperimentConfig,
    export,
    run_benchmark,
    simulate_trajectories,
)
from metadob.metalearn import MetaConfig, train

cfg = ExperimentConfig(seed=0)
cfg.meta = MetaConfig(support_len=10, query_len=10, m_delays=3, k=12,
                      epochs=120, patience=25, seed=0)
cfg.benchmark.n_seeds = 2

print("collecting training data...")
data = simulate_trajectories(36, cfg.collect.ranges(), cfg, seed=1234,
                             duration=10.0)
print("training the representation...")
result = train(data, cfg.meta)
print(f"  {len(result.history)} epochs, best val "
      f"{min(h['val_loss'] for h in result.history):.4f}")

print("running the benchmark (2 paired seeds, 2 tasks, 6 methods + baseline)...")
out_dir = sys.argv[1] if len(sys.argv) > 1 else None
report = run_benchmark(cfg, result.params, out_dir=out_dir)

print(f"\n{'method':12s} {'estimation rmse':>16s} {'tracking rmse':>14s}")
for name, row in report.methods.items():
    print(f"{name:12s} {row['estimation_rmse']:16.4f} {row['tracking_rmse']:14.4f}")

if out_dir:
    paths = export(report, out_dir, cfg)
    print("\nwrote", *paths.values())
