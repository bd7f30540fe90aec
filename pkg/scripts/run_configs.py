"""Run every JSON config in configs/ (or the ones named) and write results/.

    python3 scripts/run_configs.py                      # all configs
    python3 scripts/run_configs.py configs/type1_dct.json --reps 50
"""

import argparse
import sys
import time
from pathlib import Path

from nammd.harness.config import ExperimentConfig
from nammd.harness.experiments import run_experiment

ROOT = Path(__file__).resolve().parents[1]


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("configs", nargs="*", help="config files (default: configs/*.json)")
    p.add_argument("--reps", type=int, help="override the repetition count for a quick pass")
    p.add_argument("--threads", type=int, default=1)
    args = p.parse_args(argv)
    paths = [Path(c) for c in args.configs] or sorted((ROOT / "configs").glob("*.json"))
    failed = 0
    for path in paths:
        cfg = ExperimentConfig.from_json(path)
        overrides = [f"threads={args.threads}", f"out={ROOT / (cfg.out or f'results/{path.stem}.csv')}"]
        if args.reps:
            overrides += [f"repetitions={args.reps}", "outer_repeats=1"]
        cfg = cfg.with_overrides(overrides)
        t0 = time.perf_counter()
        rows = run_experiment(cfg)
        errors = sum(r.error is not None for r in rows)
        failed += errors > 0
        print(f"{path.name}: {len(rows)} rows, {errors} error rows, {time.perf_counter() - t0:.1f}s -> {cfg.out}")
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
