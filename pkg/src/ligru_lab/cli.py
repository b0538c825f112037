"""Command-line interface.

Subcommands:
    run      one experiment, from a JSON config file and/or a preset
    matrix   all five stabilization strategies with a shared seed
    bench    naive-vs-fused forward benchmark grid
    check    run the full property/acceptance test suite (source checkout)

A training explosion is a recorded experimental outcome and exits 0; only
invalid configs (exit 2) and I/O failures are errors.
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional

from .cells import VariantConfig
from .fused import benchmark
from .runner import (ExperimentConfig, MATRIX_VARIANTS, PRESETS, preset_config,
                     run_experiment, run_matrix)
from .stabilizers import StabilizerConfig


class ConfigError(Exception):
    pass


_TOP_FIELDS = {"variant", "stabilizers", "T", "hidden", "batch", "epochs",
               "lr", "seed", "metrics_path"}
_VARIANT_FIELDS = {"activation", "recurrent_norm", "feedforward_norm"}
_STABILIZER_FIELDS = {"sor_lambda", "weight_decay", "clip_threshold"}


def _require(data: dict, key: str, origin: str):
    if key not in data:
        raise ConfigError(f"{origin}: missing required field {key!r}")
    return data[key]


def config_from_dict(data: dict, origin: str = "<config>") -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError(f"{origin}: top level must be a JSON object")
    unknown = set(data) - _TOP_FIELDS
    if unknown:
        raise ConfigError(f"{origin}: unknown fields {sorted(unknown)}")

    vdata = _require(data, "variant", origin)
    if not isinstance(vdata, dict) or set(vdata) - _VARIANT_FIELDS:
        raise ConfigError(f"{origin}: 'variant' must be an object with fields "
                          f"{sorted(_VARIANT_FIELDS)}")
    sdata = data.get("stabilizers", {})
    if not isinstance(sdata, dict) or set(sdata) - _STABILIZER_FIELDS:
        raise ConfigError(f"{origin}: 'stabilizers' must be an object with fields "
                          f"{sorted(_STABILIZER_FIELDS)}")
    try:
        variant = VariantConfig(
            activation=_require(vdata, "activation", origin + ".variant"),
            recurrent_norm=_require(vdata, "recurrent_norm", origin + ".variant"),
            feedforward_norm=_require(vdata, "feedforward_norm", origin + ".variant"),
        )
        stabilizers = StabilizerConfig(
            sor_lambda=float(sdata.get("sor_lambda", 0.0)),
            weight_decay=float(sdata.get("weight_decay", 0.0)),
            clip_threshold=(None if sdata.get("clip_threshold") is None
                            else float(sdata["clip_threshold"])),
        )
        return ExperimentConfig(
            variant=variant,
            stabilizers=stabilizers,
            T=int(_require(data, "T", origin)),
            hidden=int(_require(data, "hidden", origin)),
            batch=int(_require(data, "batch", origin)),
            epochs=int(_require(data, "epochs", origin)),
            lr=float(_require(data, "lr", origin)),
            seed=int(_require(data, "seed", origin)),
            metrics_path=str(_require(data, "metrics_path", origin)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{origin}: {exc}") from exc


def load_config_file(path: str) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    return config_from_dict(data, origin=path)


def _variant_label(cfg: ExperimentConfig) -> str:
    for name, (variant, stabilizers) in MATRIX_VARIANTS.items():
        if variant == cfg.variant and stabilizers == cfg.stabilizers:
            return name
    return f"{cfg.variant.activation}-{cfg.variant.recurrent_norm}"


def _build_run_config(args) -> ExperimentConfig:
    if args.config is None and args.preset is None:
        raise ConfigError("run needs --config and/or --preset")
    cfg: Optional[ExperimentConfig] = None
    if args.config is not None:
        cfg = load_config_file(args.config)
    if args.preset is not None:
        overrides = {}
        if cfg is not None:
            overrides = dict(variant=cfg.variant, stabilizers=cfg.stabilizers,
                             seed=cfg.seed, metrics_path=cfg.metrics_path)
        cfg = preset_config(args.preset, **overrides)
    if args.variant is not None:
        variant, stabilizers = MATRIX_VARIANTS[args.variant]
        cfg = replace(cfg, variant=variant, stabilizers=stabilizers)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    out = args.out
    if out is not None or (args.config is None and cfg.metrics_path == "metrics.csv"):
        out = out or "runs"
        name = f"{_variant_label(cfg)}_T{cfg.T}_h{cfg.hidden}_seed{cfg.seed}.csv"
        base = os.path.basename(cfg.metrics_path)
        cfg = replace(cfg, metrics_path=os.path.join(
            out, base if args.config is not None else name))
    return cfg


def _cmd_run(args) -> int:
    cfg = _build_run_config(args)
    report = run_experiment(cfg)
    label = _variant_label(cfg)
    if report.exploded_at is not None:
        epoch, timestep = report.exploded_at
        where = f"epoch {epoch}" + ("" if timestep is None else f", timestep {timestep}")
        print(f"{label}: gradients exploded at {where} (recorded outcome)")
    else:
        print(f"{label}: finished epoch {report.epoch} "
              f"mse={report.mse:.6g} eta={report.eta:.6g}")
    print(f"metrics written to {cfg.metrics_path}")
    return 0


def _cmd_matrix(args) -> int:
    base = preset_config(args.preset or "desk", seed=args.seed if args.seed is not None else 1)
    out = args.out or "runs"
    reports = run_matrix(base, out)
    for name, report in reports.items():
        if report.exploded_at is not None:
            print(f"{name}: exploded at epoch {report.exploded_at[0]}")
        else:
            print(f"{name}: mse={report.mse:.6g} eta={report.eta:.6g}")
    print(f"metrics written to {out}/<variant>.csv")
    return 0


DEFAULT_BENCH_GRID = [(100, 8, 64), (200, 8, 64), (400, 8, 64),
                      (800, 8, 64), (1600, 8, 64)]


def _cmd_bench(args) -> int:
    out = args.out or "runs"
    os.makedirs(out, exist_ok=True)
    path = os.path.join(out, "benchmark.csv")
    result = benchmark(DEFAULT_BENCH_GRID, csv_path=path)
    print(f"{'T':>6} {'batch':>6} {'hidden':>6} {'naive_ms':>10} {'fused_ms':>10} {'speedup':>8}")
    for row in result.rows:
        print(f"{row.T:>6} {row.batch:>6} {row.hidden:>6} "
              f"{row.naive_ms:>10.3f} {row.fused_ms:>10.3f} {row.speedup:>8.2f}")
    for impl, r2 in result.r2.items():
        print(f"time-vs-T linear fit R^2 ({impl}): {r2:.4f}")
    print(f"benchmark table written to {path}")
    return 0


def _find_tests_dir() -> Optional[Path]:
    candidates = [Path.cwd()] + list(Path.cwd().parents)
    candidates.append(Path(__file__).resolve().parents[2])
    for root in candidates:
        tests = root / "tests"
        if (tests / "test_acceptance.py").exists():
            return tests
    return None


def _cmd_check(args) -> int:
    tests = _find_tests_dir()
    if tests is None:
        print("check: could not locate the tests/ directory "
              "(run from a source checkout)", file=sys.stderr)
        return 2
    proc = subprocess.run([sys.executable, "-m", "pytest", str(tests), "-v"])
    return proc.returncode


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ligru-lab",
        description="Stability laboratory for light-GRU variants on the adding task.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one experiment")
    run_p.add_argument("--config", help="JSON experiment config")
    run_p.add_argument("--preset", choices=sorted(PRESETS), help="hyperparameter preset")
    run_p.add_argument("--variant", choices=sorted(MATRIX_VARIANTS),
                       help="stabilization strategy (overrides config)")
    run_p.add_argument("--seed", type=int)
    run_p.add_argument("--out", help="output directory for metrics")
    run_p.set_defaults(fn=_cmd_run)

    matrix_p = sub.add_parser("matrix", help="run all five variants, shared seed")
    matrix_p.add_argument("--preset", choices=sorted(PRESETS))
    matrix_p.add_argument("--seed", type=int)
    matrix_p.add_argument("--out")
    matrix_p.set_defaults(fn=_cmd_matrix)

    bench_p = sub.add_parser("bench", help="naive vs fused forward benchmark")
    bench_p.add_argument("--out")
    bench_p.set_defaults(fn=_cmd_bench)

    check_p = sub.add_parser("check", help="run the full test suite")
    check_p.set_defaults(fn=_cmd_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


cli_main = main

if __name__ == "__main__":
    sys.exit(main())
