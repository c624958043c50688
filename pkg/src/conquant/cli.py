"""Command-line entry point: simulate, backtest and report subcommands.

Configs are JSON (schema_version 1); --set key=value overrides win over file
values. Exit codes: 0 success, 1 config/validation error, 2 data error,
3 internal error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .artifacts import (
    atomic_write_text,
    consolidate_runs,
    write_backtest_csvs,
    write_experiment_csvs,
)
from .errors import (
    ConfigError,
    ConquantError,
    MissingArtifacts,
    NonMonotoneDates,
    SchemaMismatch,
    TooShort,
)
from .experiments import ExperimentConfig, run_experiment
from .gar import BacktestConfig, load_macro_csv, run_backtest
from .quantile_models import QrfConfig

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DATA = 2
EXIT_INTERNAL = 3

_DATA_ERRORS = (SchemaMismatch, NonMonotoneDates, TooShort, FileNotFoundError)


def _load_config(path, overrides):
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except FileNotFoundError:
        raise
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError("config", f"cannot parse {path}: {exc}")
    if not isinstance(cfg, dict):
        raise ConfigError("config", "top level must be an object")
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError("--set", f"expected key=value, got {item!r}")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = cfg
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(key, "override path crosses a non-object value")
        node[parts[-1]] = value
    return cfg


def _pop(cfg: dict, key, default=None):
    return cfg.pop(key, default)


def _build_qrf(raw) -> QrfConfig:
    raw = dict(raw or {})
    try:
        return QrfConfig(**raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError("qrf", str(exc))


def _build_experiment_config(cfg: dict, seed_override) -> ExperimentConfig:
    cfg = dict(cfg)
    version = _pop(cfg, "schema_version", 1)
    if version != 1:
        raise ConfigError("schema_version", f"unsupported version {version}")
    dgp = dict(_pop(cfg, "dgp", {}) or {})
    kwargs = {}
    for key, target in (
        ("kind", "dgp_kind"),
        ("noise", "noise"),
        ("phi", "phi"),
        ("p", "p"),
    ):
        if key in dgp:
            kwargs[target] = dgp[key]
    for key in ("n_train", "n_test", "iterations", "n_lags", "master_seed"):
        if key in cfg:
            kwargs[key] = _pop(cfg, key)
    if "levels" in cfg:
        kwargs["levels"] = tuple(_pop(cfg, "levels"))
    if "models" in cfg:
        kwargs["models"] = tuple(_pop(cfg, "models"))
    if "qrf" in cfg:
        kwargs["qrf"] = _build_qrf(_pop(cfg, "qrf"))
    if seed_override is not None:
        kwargs["master_seed"] = seed_override
    if cfg:
        raise ConfigError(sorted(cfg)[0], "unknown key")
    try:
        return ExperimentConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        message = str(exc)
        key = "levels" if "levels" in message else "experiment"
        raise ConfigError(key, message)


def _build_backtest_config(cfg: dict, seed_override):
    cfg = dict(cfg)
    version = _pop(cfg, "schema_version", 1)
    if version != 1:
        raise ConfigError("schema_version", f"unsupported version {version}")
    data = dict(_pop(cfg, "data", {}) or {})
    if "path" not in data:
        raise ConfigError("data.path", "required")
    kwargs = {}
    for key in (
        "horizon",
        "predictor_mode",
        "pca_variance",
        "min_train",
        "seed",
    ):
        if key in cfg:
            kwargs[key] = _pop(cfg, key)
    if "quantile_grid" in cfg:
        kwargs["quantile_grid"] = tuple(_pop(cfg, "quantile_grid"))
    if "reporting_levels" in cfg:
        kwargs["reporting_levels"] = tuple(_pop(cfg, "reporting_levels"))
    if "models" in cfg:
        kwargs["models"] = tuple(_pop(cfg, "models"))
    if "qrf" in cfg:
        kwargs["qrf"] = _build_qrf(_pop(cfg, "qrf"))
    if seed_override is not None:
        kwargs["seed"] = seed_override
    if cfg:
        raise ConfigError(sorted(cfg)[0], "unknown key")
    try:
        bt = BacktestConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        message = str(exc)
        key = "horizon" if "horizon" in message else "backtest"
        raise ConfigError(key, message)
    return bt, data


def _default_outdir(args) -> Path:
    if args.out:
        return Path(args.out)
    env = os.environ.get("CONQUANT_OUT")
    if env:
        return Path(env)
    raise ConfigError("--out", "no output directory given and CONQUANT_OUT unset")


def cmd_simulate(args) -> int:
    cfg = _build_experiment_config(_load_config(args.config, args.set), args.seed)
    outdir = _default_outdir(args)
    result = run_experiment(cfg)
    files = write_experiment_csvs(result, outdir)
    if args.verbose:
        for path in files:
            print(path)
    if result.partial:
        print(
            "warning: some cells errored and were written as NA", file=sys.stderr
        )
    return EXIT_OK


def cmd_backtest(args) -> int:
    bt_cfg, data = _build_backtest_config(_load_config(args.config, args.set), args.seed)
    outdir = _default_outdir(args)
    component_cols = data.get("component_cols")
    ds = load_macro_csv(
        data["path"],
        date_col=data.get("date_col", "date"),
        gdp_col=data.get("gdp_col", "gdp_growth"),
        nfci_col=data.get("nfci_col", "nfci"),
        component_cols=component_cols,
        require_components=bt_cfg.predictor_mode == "components_pca_plus_lag",
    )
    result = run_backtest(ds, bt_cfg)
    files = write_backtest_csvs(result, outdir)
    if args.verbose:
        for path in files:
            print(path)
    return EXIT_OK


def cmd_report(args) -> int:
    outdir = _default_outdir(args)
    csv_text, table_text = consolidate_runs(outdir)
    atomic_write_text(outdir / "report.csv", csv_text)
    atomic_write_text(outdir / "report.txt", table_text)
    print(table_text, end="")
    return EXIT_OK


def _add_common(parser):
    parser.add_argument("--out", help="output directory (default: $CONQUANT_OUT)")
    parser.add_argument("--seed", type=int, help="override the configured seed")
    parser.add_argument(
        "--set",
        action="append",
        metavar="KEY=VALUE",
        help="override a config value; dotted keys reach nested objects",
    )
    parser.add_argument(
        "--threads", type=int, default=1, help="reserved; runs are single-process"
    )
    parser.add_argument("--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="conquant",
        description="Conformalised quantile estimation: simulations and GaR backtests",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)
    sim = sub.add_parser("simulate", help="run a simulation study from a JSON config")
    sim.add_argument("--config", required=True)
    _add_common(sim)
    sim.set_defaults(func=cmd_simulate)
    back = sub.add_parser("backtest", help="run a GaR backtest from a JSON config")
    back.add_argument("--config", required=True)
    _add_common(back)
    back.set_defaults(func=cmd_backtest)
    rep = sub.add_parser("report", help="consolidate run artifacts into one table")
    _add_common(rep)
    rep.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except _DATA_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except MissingArtifacts as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ConquantError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
