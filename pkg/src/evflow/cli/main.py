"""Command-line entry point: ``evflow <experiment> [--config FILE] [--key value ...]``."""
import argparse
import json
import os
import sys
import time
from pathlib import Path

from .. import __version__
from ..errors import ContractError, EnumerationCapError, NumericError, StatisticsError
from . import config as cfg
from .experiments import RUNNERS

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERIC, EXIT_CAP = 0, 2, 3, 4
OUTPUT_ENV = "EVFLOW_OUTPUT_DIR"


class ConfigError(Exception):
    def __init__(self, diagnostics):
        super().__init__("; ".join(diagnostics))
        self.diagnostics = diagnostics


def load_config(path=None, overrides=None, experiment=None):
    """Merge defaults, the config file and overrides; raise ConfigError on diagnostics."""
    values, diags = {}, []
    if path is not None:
        text = Path(path).read_text(encoding="utf-8")
        values, diags = cfg.parse_text(text)
    over, more = cfg.coerce_overrides(overrides or {})
    diags += more
    values.update(over)
    if experiment is not None:
        values["experiment"] = experiment
    config = cfg.resolve(values)
    diags += cfg.validate(config)
    if diags:
        raise ConfigError(diags)
    return config


def output_dir(config):
    base = config["output_dir"] or os.environ.get(OUTPUT_ENV) or "evflow-out"
    out = Path(base)
    if not config["output_dir"]:
        out = out / config["experiment"]
    return out


def run(config, *, threads=None):
    """Run one validated experiment; writes CSVs and ``manifest.json`` and returns the manifest."""
    diags = cfg.validate(config)
    if diags:
        raise ConfigError(diags)
    config = cfg.resolve(config)
    out = output_dir(config)
    out.mkdir(parents=True, exist_ok=True)
    threads = threads or config["threads"] or os.cpu_count() or 1
    start = time.perf_counter()
    artifacts, triggers, summary = RUNNERS[config["experiment"]](config, out, threads)
    manifest = {
        "experiment": config["experiment"],
        "config_hash": cfg.config_hash(config),
        "config": {k: list(v) if isinstance(v, tuple) else v for k, v in config.items()},
        "seed": config["seed"],
        "artifacts": sorted(Path(a).name for a in artifacts),
        "wall_clock_s": time.perf_counter() - start,
        "guard_triggers": int(triggers),
        "tainted": bool(triggers > 0),
        "summary": summary,
        "version": __version__,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True, default=float) + "\n")
    return manifest


def _add_config_flags(parser):
    parser.add_argument("--config", help="config file (key = value lines)")
    for key, spec in cfg.SCHEMA.items():
        if key == "experiment":
            continue
        parser.add_argument(f"--{key}", dest=f"opt_{key}", metavar=spec.type.upper(), help=spec.help)


def build_parser():
    parser = argparse.ArgumentParser(prog="evflow", description="Dyson eigenvector flow and moment flow laboratory.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in cfg.EXPERIMENTS:
        _add_config_flags(sub.add_parser(name, help=f"run the {name} experiment"))
    val = sub.add_parser("validate", help="check a config and echo the resolved values")
    _add_config_flags(val)
    return parser


def _overrides(args):
    return {k[4:]: v for k, v in vars(args).items() if k.startswith("opt_") and v is not None}


def main(argv=None):
    args = build_parser().parse_args(argv)
    overrides = _overrides(args)
    if args.command == "validate":
        values, diags = {}, []
        if args.config:
            values, diags = cfg.parse_text(Path(args.config).read_text(encoding="utf-8"))
        over, more = cfg.coerce_overrides(overrides)
        values.update(over)
        config = cfg.resolve(values)
        diags += more + cfg.validate(config)
        for key in cfg.SCHEMA:
            value = config[key]
            print(f"{key} = {', '.join(map(str, value)) if isinstance(value, tuple) else value}")
        for d in diags:
            print(f"diagnostic: {d}", file=sys.stderr)
        return EXIT_VALIDATION if diags else EXIT_OK
    try:
        config = load_config(args.config, overrides, args.command)
        manifest = run(config)
    except ConfigError as exc:
        for d in exc.diagnostics:
            print(f"error: {d}", file=sys.stderr)
        return EXIT_VALIDATION
    except EnumerationCapError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAP
    except (ContractError, StatisticsError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    print(json.dumps({k: manifest[k] for k in ("experiment", "artifacts", "guard_triggers", "tainted", "summary")}, default=float))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
