#!/usr/bin/env python3
"""
imlab - Main Entry Point

This module provides the CLI entry point for the incomplete-meter laboratory.
It loads a scenario configuration, runs it, and writes the report, audit log
and metrics into the output directory.

Exit codes: 0 all checks pass, 1 a check failed, 2 config/input/I-O or
unexpected error.
"""

import argparse
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

from . import __version__
from .audit_logger import AuditLogger
from .config_loader import SCENARIO_KINDS, ConfigError, apply_overrides, load_config
from .metrics_exporter import MetricsExporter
from .report import emit_report
from .scenarios import ScenarioError, run_scenario
from .separation import PreparationViolation
from .utils import split_thread_budget, thread_cap


EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_ERROR = 2

AUDIT_FILE = "audit.jsonl"
METRICS_FILE = "metrics.prom"
CONFIG_SUFFIXES = (".json", ".yaml", ".yml")


def setup_logging(verbose: bool = False) -> None:
    """Configure logging."""
    level = logging.DEBUG if verbose else logging.INFO
    logging.basicConfig(
        level=level,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=[logging.StreamHandler(sys.stderr)],
        force=True,
    )


def run_one(
    kind: Optional[str],
    config_path: str,
    out_dir: str,
    seed: Optional[int] = None,
    shots: Optional[int] = None,
    tol: Optional[float] = None,
    metrics: Optional[MetricsExporter] = None,
    threads: Optional[int] = None,
) -> int:
    """Load, run and emit one scenario; returns the process exit code."""
    out = Path(out_dir)
    audit: Optional[AuditLogger] = None
    own_metrics = metrics is None
    metrics = metrics or MetricsExporter()
    try:
        config = load_config(config_path)
        if kind is not None and config.kind != kind:
            raise ConfigError([f"config kind {config.kind!r} does not match command {kind!r}"], config_path)
        config = apply_overrides(config, seed=seed, shots=shots, tol=tol)
        out.mkdir(parents=True, exist_ok=True)
        audit = AuditLogger(log_file=str(out / AUDIT_FILE))
        report = run_scenario(config, audit=audit, metrics=metrics, threads=threads)
        emit_report(report, out)
        if own_metrics:
            metrics.write(out / METRICS_FILE)
    except (ConfigError, FileNotFoundError) as e:
        logging.error(f"Configuration error: {e}")
        return EXIT_ERROR
    except PreparationViolation as e:
        logging.error(f"Preparation rejected: {e}")
        if audit:
            audit.log_system_event("preparation_rejected", str(e), "ERROR")
        return EXIT_ERROR
    except ScenarioError as e:
        logging.error(f"Scenario failed to run: {e}")
        return EXIT_ERROR
    except OSError as e:
        logging.error(f"Cannot write output to {out}: {e}")
        return EXIT_ERROR
    except Exception as e:
        logging.exception(f"Unexpected error while running {config_path}: {e}")
        if audit:
            audit.log_system_event("unexpected_error", f"{type(e).__name__}: {e}", "ERROR")
        return EXIT_ERROR
    finally:
        if audit:
            audit.close()

    if report.all_passed:
        logging.info(f"{config.kind} {config.name!r}: all {len(report.checks)} checks passed")
        return EXIT_PASS
    logging.error(f"{config.kind} {config.name!r}: failed checks: {', '.join(report.failed())}")
    return EXIT_FAIL


def validate_only(config_path: str) -> int:
    try:
        config = load_config(config_path)
    except (ConfigError, FileNotFoundError) as e:
        logging.error(f"Configuration error: {e}")
        return EXIT_ERROR
    logging.info(f"{config_path}: valid {config.kind} scenario (hash {config.config_hash[:12]})")
    return EXIT_PASS


def discover_configs(directory: str) -> List[Path]:
    root = Path(directory)
    if not root.is_dir():
        raise FileNotFoundError(f"Scenario directory not found: {root}")
    return sorted(p for p in root.iterdir() if p.suffix in CONFIG_SUFFIXES)


def run_suite(directory: str, out_dir: str) -> int:
    """
    Run every scenario file in ``directory`` into ``<out>/<file stem>``.
    The suite exit code is the worst of the individual codes.
    """
    try:
        paths = discover_configs(directory)
    except FileNotFoundError as e:
        logging.error(str(e))
        return EXIT_ERROR
    if not paths:
        logging.error(f"No scenario files in {directory}")
        return EXIT_ERROR

    out = Path(out_dir)
    metrics = MetricsExporter()

    outer, inner = split_thread_budget(thread_cap(), len(paths))

    def _one(path: Path) -> Tuple[Path, int]:
        return path, run_one(None, str(path), str(out / path.stem), metrics=metrics, threads=inner)

    with ThreadPoolExecutor(max_workers=outer) as pool:
        results = list(pool.map(_one, paths))

    try:
        out.mkdir(parents=True, exist_ok=True)
        metrics.write(out / METRICS_FILE)
        audit = AuditLogger(log_file=str(out / AUDIT_FILE))
        try:
            summary = {path.stem: code for path, code in results}
            audit.log_system_event("suite_finished", f"{len(results)} scenarios", metadata=summary)
        finally:
            audit.close()
    except OSError as e:
        logging.error(f"Cannot write suite output to {out}: {e}")
        return EXIT_ERROR

    for path, code in results:
        logging.info(f"{path.name}: exit {code}")
    summary = metrics.get_metrics_summary()
    logging.info(
        f"Suite finished: {summary['checks']['pass']:.0f} checks passed, "
        f"{summary['checks']['fail']:.0f} failed, {summary['shots']:.0f} shots drawn"
    )
    return max(code for _, code in results)


def parse_args(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    """Parse command line arguments."""
    parser = argparse.ArgumentParser(
        prog="imlab",
        description="Incomplete-meter laboratory",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  %(prog)s two_lab --config config/scenarios/two_lab.json --out out/two_lab
  %(prog)s equivalence --config config/scenarios/equivalence_sweep.json --seed 7
  %(prog)s validate --config config/scenarios/dynamics.json
  %(prog)s suite --dir config/scenarios --out out/suite
        """,
    )
    parser.add_argument('--version', action='version', version=f'imlab {__version__}')
    sub = parser.add_subparsers(dest="command", required=True)

    for kind in SCENARIO_KINDS:
        p = sub.add_parser(kind, help=f"run a {kind} scenario")
        p.add_argument('--config', '-c', required=True, help='Path to scenario file (JSON or YAML)')
        p.add_argument('--seed', type=int, help='Override the scenario seed')
        p.add_argument('--shots', type=int, help='Override the number of sampled registrations')
        p.add_argument('--tol', type=float, help='Override every numerical tolerance')
        p.add_argument('--out', '-o', default='out', help='Output directory (default: out)')
        p.add_argument('--verbose', '-v', action='store_true', help='Enable verbose logging')

    p = sub.add_parser("validate", help="validate a scenario file without running it")
    p.add_argument('--config', '-c', required=True, help='Path to scenario file')
    p.add_argument('--verbose', '-v', action='store_true', help='Enable verbose logging')

    p = sub.add_parser("suite", help="run every scenario file in a directory")
    p.add_argument('--dir', '-d', required=True, help='Directory of scenario files')
    p.add_argument('--out', '-o', default='out', help='Output directory (default: out)')
    p.add_argument('--verbose', '-v', action='store_true', help='Enable verbose logging')

    return parser.parse_args(argv)


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main entry point."""
    args = parse_args(argv)
    setup_logging(args.verbose)

    if args.command == "validate":
        return validate_only(args.config)
    if args.command == "suite":
        return run_suite(args.dir, args.out)
    return run_one(args.command, args.config, args.out, args.seed, args.shots, args.tol)


if __name__ == "__main__":
    sys.exit(main())
