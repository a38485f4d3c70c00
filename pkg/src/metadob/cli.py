"""Command line entry point.

    python -m metadob {collect,train,eval,ablate} --config cfg.json
                      [--seed N] [--out DIR]

Exit code 0 on success; on failure a single machine-readable JSON error
line goes to stderr and the exit code is nonzero.
"""

from __future__ import annotations

import argparse
import json
import sys

from .errors import MetadobError
from .harness import (
    ExperimentConfig,
    ablate_task,
    collect_task,
    config_hash,
    eval_task,
    load_config,
    train_task,
)

_TASKS = {
    "collect": collect_task,
    "train": train_task,
    "eval": eval_task,
    "ablate": ablate_task,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="metadob")
    sub = parser.add_subparsers(dest="task", required=True)
    for name in _TASKS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=False, help="JSON config file")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument("--out", default=None, help="override output directory")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else ExperimentConfig()
        cfg.task = args.task
        if args.seed is not None:
            cfg.seed = args.seed
        if args.out is not None:
            cfg.out_dir = args.out
        result = _TASKS[args.task](cfg)
        result["task"] = args.task
        result["config_hash"] = config_hash(cfg)
        print(json.dumps(result, sort_keys=True))
        return 0
    except (MetadobError, OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
