"""Command line entry point.

    plaplace run --config cfg.json [--tier smoke|full] [--out DIR]
    plaplace list-scenarios
    plaplace validate --config cfg.json

Exit codes: 0 all criteria pass, 1 some criterion failed (report still
written), 2 invalid configuration, 3 solver failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .scenarios import DEFAULTS, ConfigError, ScenarioResult, _jsonable, materialize, run_scenario, scenario_names
from .solver import SolverError

log = logging.getLogger("plaplace")

EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3


def load_config(path) -> dict:
    """Read a JSON config; a relative ``measure.density_csv`` is resolved against the file."""
    path = Path(path)
    try:
        cfg = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    m = cfg.get("measure")
    if isinstance(m, dict) and m.get("density_csv") and not Path(m["density_csv"]).is_absolute():
        m["density_csv"] = str((path.parent / m["density_csv"]).resolve())
    return cfg


def write_table(path: Path, columns, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([repr(float(x)) if isinstance(x, float) or hasattr(x, "dtype") else x for x in row])


def build_report(cfg: dict, result: ScenarioResult | None, status: str, message: str = "", timestamp=None) -> dict:
    """Everything except ``timestamp`` is a function of the config alone."""
    report = {
        "scenario": cfg["scenario"],
        "tier": cfg["tier"],
        "status": status,
        "passed": bool(result is not None and status == "completed" and result.passed),
        "seed": cfg["seed"],
        "version": __version__,
        "config": cfg,
        "criteria": [c.to_dict() for c in result.criteria] if result else [],
        "summary": result.summary if result else {},
        "tables": {name: f"{name}.csv" for name in result.tables} if result else {},
        "message": message,
        "timestamp": timestamp or {},
    }
    return _jsonable(report)


def write_report(out: Path, report: dict):
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")


def cmd_run(args) -> int:
    try:
        raw = load_config(args.config)
        cfg = materialize(raw, args.tier)
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out or raw.get("output_dir") or f"runs/{cfg['scenario']}")
    started = datetime.now(timezone.utc)
    stamp = {"started": started.isoformat()}
    try:
        result = run_scenario(cfg)
    except SolverError as exc:
        stamp["finished"] = datetime.now(timezone.utc).isoformat()
        write_report(out, build_report(cfg, None, "solver_error", str(exc), stamp))
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (ConfigError, ValueError) as exc:
        # scenario-level setup rejected the parameters (e.g. grid too coarse to mollify)
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    stamp["finished"] = datetime.now(timezone.utc).isoformat()
    stamp["timings_s"] = _jsonable(result.timings)
    out.mkdir(parents=True, exist_ok=True)
    for name, (cols, rows) in result.tables.items():
        write_table(out / f"{name}.csv", cols, rows)
    write_report(out, build_report(cfg, result, "completed", "", stamp))
    for c in result.criteria:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name}")
    print(f"report: {out / 'report.json'}")
    return EXIT_OK if result.passed else EXIT_FAILED


def cmd_list(args) -> int:
    for name in scenario_names():
        print(f"{name:24s} {DEFAULTS[name]['anchor']}")
    return EXIT_OK


def cmd_validate(args) -> int:
    try:
        cfg = materialize(load_config(args.config), args.tier)
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(json.dumps(_jsonable(cfg), indent=2, sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="plaplace", description="Radial fast p-Laplacian experiments.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a scenario and write report.json plus CSV tables")
    run.add_argument("--config", required=True)
    run.add_argument("--tier", choices=("smoke", "full"), default=None)
    run.add_argument("--out", default=None)
    run.set_defaults(func=cmd_run)
    ls = sub.add_parser("list-scenarios", help="print the scenario registry")
    ls.set_defaults(func=cmd_list)
    val = sub.add_parser("validate", help="materialise and check a config without running it")
    val.add_argument("--config", required=True)
    val.add_argument("--tier", choices=("smoke", "full"), default=None)
    val.set_defaults(func=cmd_validate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
