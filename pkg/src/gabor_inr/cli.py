"""Command-line entry point: ``gabor-inr <task> --config run.json [--set k=v ...]``."""
from __future__ import annotations

import argparse
import sys

from ._alloc import tune_allocator
from .config import TASKS, ConfigError, load_config
from .model import CheckpointError
from .ntk import KernelSizeError
from .signals import FormatError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gabor-inr",
                                     description="Fit coordinate networks with Gabor wavelet activations.")
    sub = parser.add_subparsers(dest="task", required=True, metavar="TASK")
    for task in TASKS:
        p = sub.add_parser(task, help=f"run the {task} task")
        p.add_argument("--config", help="JSON config file; the task field may be omitted")
        p.add_argument("--seed", type=int, help="override train.seed")
        p.add_argument("--out", help="override io.out (output directory)")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", dest="overrides",
                       help="override one field by dotted path, value parsed as JSON; repeatable")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, [f"task={args.task}"] + args.overrides, args.seed, args.out,
                          base={"task": args.task})
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"error: cannot read config: {e}", file=sys.stderr)
        return 2
    from .experiments import run  # heavy imports only after the config is known good

    tune_allocator()
    try:
        report = run(cfg)
    except (ConfigError, CheckpointError, FormatError, KernelSizeError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    quality = report.get("quality", {})
    summary = ", ".join(f"{k}={v:.4f}" for k, v in quality.items() if isinstance(v, float))
    print(f"{cfg.task}: wrote {cfg.io.out}" + (f" ({summary})" if summary else ""))
    return 0


if __name__ == "__main__":
    sys.exit(main())
