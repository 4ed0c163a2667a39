"""Command line front-end: ``hetorus --config run.json --out report.json``.

Exit codes: 0 when every check passes, 1 when any check fails, 2 on
configuration or I/O errors.
"""
from __future__ import annotations

import argparse
import sys
from concurrent.futures import ProcessPoolExecutor

from .errors import ConfigError
from .report import RunConfig, VerificationReport, config_echo, emit_report, load_config
from .scenarios import REGISTRY, Setup, run_one

REGISTERED = tuple(REGISTRY)


def _run_entry(args):
    cfg, tol_scale, entry, timings = args
    return run_one(Setup(cfg, tol_scale), entry, timings)


def run_scenarios(cfg: RunConfig, tol_scale: float = 1.0, only: str | None = None,
                  workers: int = 1, record_timings: bool = False) -> VerificationReport:
    """Run the configured scenarios (optionally just one) and assemble a report."""
    cfg.validate(REGISTERED)
    entries = [e for e in cfg.scenarios if only is None or e["name"] == only]
    if only is not None and not entries:
        if only not in REGISTERED:
            raise ConfigError("--scenario", f"unknown scenario {only!r}; registered: {', '.join(REGISTERED)}")
        entries = [{"name": only}]
    setup = Setup(cfg, tol_scale)
    _ = setup.bundles  # surface bundle config errors before running anything
    _ = setup.ctx
    if workers > 1 and len(entries) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_entry, [(cfg, tol_scale, e, record_timings) for e in entries]))
    else:
        results = [run_one(setup, e, record_timings) for e in entries]
    checks, rows = [], []
    for recs, sweep in results:
        checks.extend(recs)
        rows.extend(sweep)
    echo = config_echo(cfg)
    echo["tol_scale"] = tol_scale
    return VerificationReport(checks, echo, rows)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hetorus", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="JSON run configuration (defaults are used when omitted)")
    p.add_argument("--scenario", help="run only this scenario")
    p.add_argument("--grid", type=int, help="points per axis (overrides the config)")
    p.add_argument("--seed", type=int, help="RNG seed (overrides the config)")
    p.add_argument("--out", help="path of the JSON report")
    p.add_argument("--csv-dir", help="directory for convergence CSV files")
    p.add_argument("--tol-scale", type=float, default=1.0, help="multiply every tolerance by FACTOR")
    p.add_argument("--workers", type=int, default=1, help="scenario worker processes")
    p.add_argument("--record-timings", action="store_true",
                   help="store wall-clock runtimes (reports are then not byte-stable)")
    p.add_argument("--list", action="store_true", help="list registered scenarios and exit")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.list:
        print("\n".join(REGISTERED))
        return 0
    try:
        cfg = load_config(args.config, REGISTERED) if args.config else RunConfig()
        if args.grid is not None:
            cfg.points_per_axis = args.grid
        if args.seed is not None:
            cfg.seed = args.seed
        if args.tol_scale <= 0:
            raise ConfigError("--tol-scale", "must be positive")
        if args.workers < 1:
            raise ConfigError("--workers", "must be at least 1")
        cfg.validate(REGISTERED)
        report = run_scenarios(cfg, args.tol_scale, args.scenario, args.workers, args.record_timings)
        out = args.out or cfg.out
        csv_dir = args.csv_dir or cfg.csv_dir
        emit_report(report, out, csv_dir)
    except ConfigError as exc:
        print(f"config error at {exc.path}: {exc.reason}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 2
    for c in report.ordered_checks():
        print(f"{c.status.upper():4s} {c.name}  residual={c.residual:.3e} tol={c.tolerance:.1e}"
              + (f"  [{c.note}]" if c.note and c.status != "pass" else ""))
    s = report.summary
    print(f"{s['passed']}/{s['total']} checks passed")
    return 0 if report.all_passed else 1


if __name__ == "__main__":
    sys.exit(main())
