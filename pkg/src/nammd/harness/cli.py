"""Command-line entry point: ``nammd --experiment KIND [options]``.

Exit codes: 0 success, 1 configuration error, 2 runtime error (including
experiments that produced error rows).
"""

from __future__ import annotations

import argparse
import json
import sys

from nammd.errors import ConfigError, CSVParseError
from nammd.harness.config import FORMATS, KINDS, ExperimentConfig
from nammd.harness.experiments import run_experiment
from nammd.harness.io import render_results


def build_parser():
    p = argparse.ArgumentParser(prog="nammd", description="NAMMD closeness and two-sample test experiments")
    p.add_argument("--experiment", choices=KINDS, help="experiment kind (overrides the config's kind)")
    p.add_argument("--config", help="JSON configuration file")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--out", help="output path (default: stdout)")
    p.add_argument("--format", choices=FORMATS, help="output format")
    p.add_argument("--threads", type=int, help="worker threads for repetitions")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config field; VALUE parses as JSON (repeatable)")
    return p


def make_config(args):
    if args.config:
        cfg = ExperimentConfig.from_json(args.config)
        if args.experiment and args.experiment != cfg.kind:
            raise ConfigError(f"--experiment {args.experiment} conflicts with the config's kind {cfg.kind}")
    elif args.experiment:
        cfg = ExperimentConfig.for_kind(args.experiment)
    else:
        raise ConfigError("give --experiment or --config")
    overrides = list(args.set)
    for key in ("seed", "out", "format", "threads"):
        val = getattr(args, key)
        if val is not None:
            name = "master_seed" if key == "seed" else key
            overrides.append(f"{name}={json.dumps(val)}")
    return cfg.with_overrides(overrides)


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = make_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    try:
        rows = run_experiment(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (CSVParseError, OSError, ValueError, ArithmeticError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2
    if not cfg.out:
        sys.stdout.write(render_results(rows, cfg.format))
    failed = [r for r in rows if r.error]
    for r in failed:
        print(f"cell {r.cell} ({r.setting}, {r.method}) failed: {r.error}", file=sys.stderr)
    return 2 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
