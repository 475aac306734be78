"""Command-line entry point.

Subcommands:

* ``run --config <file> [--out <csv>] [--set key=value ...]``
* ``sweep --config <file> --grid <key=v1,v2,...> --seeds <n> [--jobs <n>] [--out <csv>]``
* ``preset --name <p> --config <file>`` — print the resolved configuration

Flags given with ``--set`` override file values.  The grid accepts either an
explicit comma list or ``logspace:<lo>,<hi>,<n>``.  Verbosity is controlled
by the ``FEDBANDIT_LOG`` environment variable only.

Exits 0 on success, nonzero with a diagnostic on stderr otherwise.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from .harness import (
    config_from_mapping,
    config_to_mapping,
    load_config,
    preset,
    run_simulation,
    run_sweep,
    write_sweep_csv,
    write_trace_csv,
)
from .linalg import ContractViolation

log = logging.getLogger("fedbandit")


def _setup_logging() -> None:
    level = os.environ.get("FEDBANDIT_LOG", "warning").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _apply_overrides(mapping: dict, overrides) -> dict:
    merged = dict(mapping)
    for item in overrides or []:
        if "=" not in item:
            raise ContractViolation(f"--set expects key=value, got {item!r}")
        key, _, value = item.partition("=")
        merged[key.strip()] = value.strip()
    return merged


def _parse_grid(spec: str) -> tuple[str, list[str]]:
    if "=" not in spec:
        raise ContractViolation(f"--grid expects key=values, got {spec!r}")
    key, _, raw = spec.partition("=")
    raw = raw.strip()
    if raw.startswith("logspace:"):
        lo, hi, n = raw.split(":", 1)[1].split(",")
        values = np.geomspace(float(lo), float(hi), int(n))
        return key.strip(), [repr(float(v)) for v in values]
    values = [tok.strip() for tok in raw.split(",") if tok.strip()]
    if not values:
        raise ContractViolation(f"--grid has no values: {spec!r}")
    return key.strip(), values


def _cmd_run(args) -> int:
    mapping = _apply_overrides(load_config(args.config), args.set)
    cfg = config_from_mapping(mapping)
    trace = run_simulation(cfg)
    label = "reward" if trace.scores_reward else "regret"
    print(
        f"algorithm={cfg.algorithm} T={len(trace.cum_regret)} "
        f"{label}={trace.r_total:.4f} comm={trace.c_total} wall_ms={trace.wall_ms:.1f}"
    )
    if args.out:
        write_trace_csv(trace, args.out)
        log.info("trace written to %s", args.out)
        if cfg.trace_ledger:
            trace.ledger.write_csv(args.out + ".ledger.csv")
            log.info("ledger written to %s.ledger.csv", args.out)
    return 0


def _cmd_sweep(args) -> int:
    mapping = _apply_overrides(load_config(args.config), args.set)
    key, values = _parse_grid(args.grid)
    result = run_sweep(mapping, key, values, args.seeds, n_jobs=args.jobs)
    for value, seed, msg in result.errors:
        print(f"cell {key}={value} seed={seed} failed: {msg}", file=sys.stderr)
    for agg in result.aggregate():
        print(
            f"{key}={agg['param_value']:g} "
            f"R_T={agg['mean_r']:.2f}±{agg['std_r']:.2f} "
            f"C_T={agg['mean_c']:.1f}±{agg['std_c']:.1f} (n={agg['n']})"
        )
    if args.out:
        write_sweep_csv(result.rows, args.out)
        log.info("sweep written to %s", args.out)
    return 0


def _cmd_preset(args) -> int:
    mapping = load_config(args.config)
    fragment = preset(args.name, mapping)
    resolved = dict(mapping)
    resolved.update(fragment)
    cfg = config_from_mapping(resolved)
    for key, value in config_to_mapping(cfg).items():
        print(f"{key} = {value}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedbandit",
        description="Simulate federated linear bandits with event-triggered communication.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a single configured run")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", help="trace CSV path")
    p_run.add_argument("--set", action="append", metavar="KEY=VALUE")
    p_run.set_defaults(func=_cmd_run)

    p_sweep = sub.add_parser("sweep", help="run a parameter grid across seeds")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--grid", required=True, metavar="KEY=V1,V2,...")
    p_sweep.add_argument("--seeds", type=int, default=1)
    p_sweep.add_argument("--jobs", type=int, default=1)
    p_sweep.add_argument("--out", help="sweep CSV path")
    p_sweep.add_argument("--set", action="append", metavar="KEY=VALUE")
    p_sweep.set_defaults(func=_cmd_sweep)

    p_preset = sub.add_parser("preset", help="print a resolved preset configuration")
    p_preset.add_argument("--name", required=True)
    p_preset.add_argument("--config", required=True)
    p_preset.set_defaults(func=_cmd_preset)

    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ContractViolation, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
