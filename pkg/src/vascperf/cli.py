"""Command-line interface.

    vascperf condition-table|iteration-sweep|perfusion|scalar-model \
        [--config file.json] [--out dir] [--dimension D] [--resolutions ...]

Flags override the corresponding config-file fields.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

from .experiments import ExperimentConfig, run_experiment

EXPERIMENTS = ["condition-table", "iteration-sweep", "perfusion", "scalar-model"]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vascperf",
        description="Coupled 3D-1D diffusion experiments: condition tables, "
                    "MinRes parameter sweep, perfusion on a synthetic vascular tree.",
    )
    parser.add_argument("experiment", choices=EXPERIMENTS)
    parser.add_argument("--config", type=Path, help="JSON configuration file")
    parser.add_argument("--out", type=Path, help="output directory")
    parser.add_argument("--dimension", type=int, choices=(2, 3))
    parser.add_argument("--resolutions", type=int, nargs="+", metavar="N")
    parser.add_argument("--s", type=float, help="fractional exponent override")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--steps", type=int, help="number of time steps (perfusion)")
    parser.add_argument("--print-config", action="store_true",
                        help="show the resolved configuration and exit")
    return parser


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    data: dict = {}
    if args.config is not None:
        data = json.loads(Path(args.config).read_text())
    data["experiment"] = args.experiment
    if args.out is not None:
        data["out_dir"] = str(args.out)
    if args.dimension is not None:
        data["dimension"] = args.dimension
    if args.resolutions is not None:
        data["resolutions"] = args.resolutions
    if args.s is not None:
        data["s"] = args.s
    if args.seed is not None:
        data["seed"] = args.seed
    if args.steps is not None:
        data["n_steps"] = args.steps
    return ExperimentConfig.from_dict(data)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = resolve_config(args)
    except (ValueError, TypeError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.print_config:
        print(json.dumps(asdict(config), indent=2, sort_keys=True))
        return 0
    path = run_experiment(config)
    print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
