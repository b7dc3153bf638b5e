"""Command-line experiment runner.

    cinn list
    cinn run <experiment> [--config path] [--reps N] [--seed S] [--out dir]
             [--solver cinn|pinn|nn] [--iterations N] [--velocity V ...]
             [--noise S ...] [--reduced] [--workers N] [--log-every N]

Config files are plain `key = value` lines (# comments allowed) with the
same keys as the long flags; explicit flags override file values. The exit
code is nonzero iff any replication aborted.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .harness import EXPERIMENT_NAMES, build_experiment, run_experiment_group

_CONFIG_KEYS = {
    "experiment": str,
    "reps": int,
    "seed": int,
    "out": str,
    "solver": str,
    "iterations": int,
    "velocities": str,
    "noises": str,
    "reduced": str,
    "workers": int,
    "log_every": int,
}


def load_config(path) -> dict:
    """Parse a key = value config file into override values."""
    values: dict = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if key not in _CONFIG_KEYS:
            raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
        values[key] = _CONFIG_KEYS[key](value.strip())
    if "velocities" in values:
        values["velocities"] = [float(v) for v in values["velocities"].split(",")]
    if "noises" in values:
        values["noises"] = [float(v) for v in values["noises"].split(",")]
    if "reduced" in values:
        values["reduced"] = values["reduced"].lower() in ("1", "true", "yes", "on")
    return values


def _format_row(row) -> str:
    parts = [f"{row['label']:<18} reps={row['replications']:<4} iters={row['iterations']:<6}"]
    for name, stat in row["metrics"].items():
        parts.append(f"{name}={stat['mean']:.5f}±{stat['std']:.5f}")
    timing = row.get("timing_seconds")
    if timing:
        parts.append(f"train_s={timing['mean']:.2f}±{timing['std']:.2f}")
    if row["aborted"]:
        parts.append(f"aborted={row['aborted']}")
    return "  ".join(parts)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="cinn", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("list", help="list built-in experiments")

    run = sub.add_parser("run", help="run a built-in experiment")
    run.add_argument("experiment", choices=EXPERIMENT_NAMES)
    run.add_argument("--config", help="key = value config file; flags override it")
    run.add_argument("--reps", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--out", help="output directory for summary.json and CSVs")
    run.add_argument("--solver", choices=("cinn", "pinn", "nn"))
    run.add_argument("--iterations", type=int)
    run.add_argument("--velocity", type=float, action="append", dest="velocities",
                     help="periodic-advection velocity; repeatable")
    run.add_argument("--noise", type=float, action="append", dest="noises",
                     help="inverse-advection noise level; repeatable")
    run.add_argument("--reduced", action="store_true", default=None,
                     help="periodic-advection PINN at 5k collocation / 10k iterations")
    run.add_argument("--workers", type=int)
    run.add_argument("--log-every", type=int, dest="log_every")

    args = parser.parse_args(argv)
    if args.command == "list":
        for name in EXPERIMENT_NAMES:
            print(name)
        return 0

    overrides = load_config(args.config) if args.config else {}
    for key in ("reps", "seed", "solver", "iterations", "velocities", "noises",
                "reduced", "workers", "log_every", "out"):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    out = overrides.pop("out", None)
    overrides.pop("experiment", None)
    overrides.setdefault("seed", 0)
    overrides.setdefault("workers", 0)
    overrides.setdefault("reduced", False)
    overrides.setdefault("log_every", 100)

    try:
        configs = build_experiment(args.experiment, **overrides)
        for config in configs:
            config.validate()
    except ValueError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return 2

    summary, results = run_experiment_group(configs, output_dir=out)
    print(f"# {args.experiment} (seed {overrides['seed']})")
    for row in summary.rows:
        print(_format_row(row))
    if out:
        print(f"outputs written to {out}")
    aborted = any(r.aborted for runs in results.values() for r in runs)
    return 1 if aborted else 0


if __name__ == "__main__":
    raise SystemExit(main())
