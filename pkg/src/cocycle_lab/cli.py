"""Command-line scenario runner.

    cocycle-lab <scenario> [--config PATH] [--seed N] [--serial] [--out DIR]

Writes ``<scenario>_<check>.csv`` tables and updates ``manifest.csv`` in the
output directory.  Exit status: 0 when every check passes, 1 when a check
fails, 2 for configuration errors, 3 when the computation itself raises.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

from .config import SCENARIOS, load_config, read_config
from .errors import CocycleLabError, ConfigError
from .reports import write_csv
from .scenarios import run_scenario

MANIFEST_HEADER = ("scenario", "seed", "config_hash", "verdict")


def update_manifest(out: Path, scenario: str, seed: int, digest: str, verdict: str) -> None:
    """Replace this scenario's row in manifest.csv, keeping rows sorted by scenario."""
    path = out / "manifest.csv"
    rows = {}
    if path.exists():
        with open(path, newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                rows[row["scenario"]] = tuple(row[k] for k in MANIFEST_HEADER)
    rows[scenario] = (scenario, str(seed), digest, verdict)
    write_csv(path, MANIFEST_HEADER, [rows[k] for k in sorted(rows)])


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cocycle-lab",
                                description="Run a cocycle experiment and write CSV reports.")
    p.add_argument("scenario", choices=SCENARIOS)
    p.add_argument("--config", type=Path, default=None,
                   help="JSON config; keys not given take the scenario defaults")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--serial", action="store_true",
                   help="serial execution, the reference for byte-identical output")
    p.add_argument("--out", type=Path, default=None, help="output directory")
    p.add_argument("--print-config", action="store_true",
                   help="print the resolved config as JSON and exit")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        data = read_config(args.config) if args.config is not None else None
        cfg = load_config(args.scenario, data, seed=args.seed,
                          output=None if args.out is None else str(args.out))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if args.print_config:
        print(json.dumps(cfg.raw, indent=2, sort_keys=True))
        return 0

    # every step already runs serially; --serial is accepted so scripts can
    # request the reference mode explicitly
    out = Path(cfg.output)
    os.makedirs(out, exist_ok=True)
    try:
        result = run_scenario(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except CocycleLabError as exc:
        update_manifest(out, cfg.scenario, cfg.seed, cfg.hash(), "error")
        print(f"{cfg.scenario}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3

    for name, table in result.tables.items():
        path = out / f"{cfg.scenario}_{name}.csv"
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write(table.csv())
    update_manifest(out, cfg.scenario, cfg.seed, cfg.hash(), result.verdict)
    if result.failures:
        print(f"{cfg.scenario}: failed checks: {', '.join(result.failures)}", file=sys.stderr)
        return 1
    print(f"{cfg.scenario}: pass ({len(result.tables)} tables in {out})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
