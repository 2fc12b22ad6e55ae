"""Command-line entry point: ``loggamma-lab <experiment> --config <path> ...``."""

from __future__ import annotations

import argparse
import json
import sys

from .errors import ConfigError, LabError
from .harness import EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC, EXPERIMENTS, ExperimentConfig, exit_code, run_experiment


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(raw: dict, item: str) -> None:
    """Set a dotted key, e.g. ``params.sizes=[32,64]`` or ``quad.panel_order=12``."""
    key, sep, value = item.partition("=")
    if not sep or not key:
        raise ConfigError(f"override must look like key=value, got {item!r}")
    parts = key.split(".")
    node = raw
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(f"cannot override inside non-object {p!r}")
    node[parts[-1]] = _parse_value(value)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="loggamma-lab", description="Run a log-gamma polymer experiment.")
    ap.add_argument("experiment", choices=EXPERIMENTS)
    ap.add_argument("--config", help="JSON config file (defaults are used when omitted)")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--samples", type=int)
    ap.add_argument("--out", help="output directory")
    ap.add_argument("--threads", type=int, help="worker threads (falls back to LOGGAMMA_THREADS)")
    ap.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
    return ap


def load_config(args) -> ExperimentConfig:
    raw = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            try:
                raw = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
    if raw.get("experiment", args.experiment) != args.experiment:
        raise ConfigError(f"config is for {raw['experiment']!r}, not {args.experiment!r}")
    raw["experiment"] = args.experiment
    for name, key in (("seed", "seed"), ("samples", "samples"), ("out", "output_path"), ("threads", "threads")):
        val = getattr(args, name)
        if val is not None:
            raw[key] = val
    for item in args.override:
        apply_override(raw, item)
    return ExperimentConfig.from_dict(raw)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        report = run_experiment(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except LabError as exc:
        print(f"numeric failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    for m in report.metrics:
        print(f"{'PASS' if m.passed else 'FAIL'}  {m.name}: {m.value:.6g} ({m.tolerance})")
    print(f"{'all metrics passed' if report.passed else 'metric failure'}; outputs in {cfg.output_path}")
    return exit_code(report)


if __name__ == "__main__":
    sys.exit(main())
