"""Command line interface: gp, run, ablate, and inspect subcommands."""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import harness
from .conditioning import STAGES, ConditioningCascade
from .datasets import DatasetError
from .harness import (
    ABLATIONS,
    DATASET_KEYS,
    VALID_SHOTS,
    Calibration,
    DEFAULT_CALIBRATION,
    ProtocolConfig,
)
from .network import EplNetwork

DATA_DIR_ENV = "EPLFF_DATA_DIR"

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2


class UsageError(Exception):
    """Invalid flags or unusable inputs; maps to exit code 2."""


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="eplff",
        description="Signal conditioning and few-shot online spiking classification benchmarks.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def add_common(p, *, needs_data=True):
        if needs_data:
            p.add_argument("--dataset", choices=DATASET_KEYS, default=None,
                           help="which dataset to run")
            p.add_argument("--data", default=None,
                           help=f"dataset directory (default: ${DATA_DIR_ENV})")
        p.add_argument("--seed", type=int, default=None, help="base seed (default 0)")
        p.add_argument("--out", default=None, help="report output path")
        p.add_argument("--format", choices=("json", "csv"), default=None,
                       help="report format (default json)")
        p.add_argument("--config", default=None,
                       help="key=value file merged under explicit flags")
        p.add_argument("--check", action="store_true",
                       help="exit 1 if acceptance thresholds are not met")
        p.add_argument("--wbar", type=float, default=None,
                       help="override the calibrated weight-cap scale")
        p.add_argument("--rejection-fraction", type=float, default=None,
                       help="override the rejection threshold fraction")
        p.add_argument("--calibrate", action="store_true",
                       help="calibrate on gas batch-1 validation data from --data")

    p_gp = sub.add_parser("gp", help="per-preprocessor-stage recruitment uniformity table")
    add_common(p_gp)

    p_run = sub.add_parser("run", help="online few-shot protocol")
    add_common(p_run)
    p_run.add_argument("--shots", type=int, default=None, help="shots per group (1, 2, 5 or 10)")
    p_run.add_argument("--ablation", choices=ABLATIONS, default=None)
    p_run.add_argument("--repeats", type=int, default=None)
    p_run.add_argument("--levels", default=None,
                       help="comma-separated label levels to score (anuran)")
    p_run.add_argument("--save-state", default=None,
                       help="directory for conditioning/network snapshots of the run")

    p_ab = sub.add_parser("ablate", help="matched raw / no-heterogeneity / full comparison")
    add_common(p_ab)
    p_ab.add_argument("--shots", type=int, default=None)
    p_ab.add_argument("--repeats", type=int, default=None)

    p_ins = sub.add_parser("inspect", help="print snapshot metadata")
    p_ins.add_argument("--snapshot", required=True, help="conditioning .json or network .npz")
    return parser


_CONFIG_KEYS = {
    "dataset": str, "data": str, "seed": int, "out": str, "format": str,
    "shots": int, "ablation": str, "repeats": int, "levels": str,
    "wbar": float, "rejection_fraction": float,
}


def _merge_config_file(args: argparse.Namespace) -> argparse.Namespace:
    if not getattr(args, "config", None):
        return args
    path = Path(args.config)
    if not path.is_file():
        raise UsageError(f"config file not found: {path}")
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key = key.strip().replace("-", "_")
        if key not in _CONFIG_KEYS:
            raise UsageError(f"{path}:{lineno}: unknown config key {key!r}")
        if getattr(args, key, None) is None and hasattr(args, key):
            try:
                setattr(args, key, _CONFIG_KEYS[key](value.strip()))
            except ValueError as exc:
                raise UsageError(f"{path}:{lineno}: bad value for {key}") from exc
    return args


def _resolve_data_dir(args) -> Path:
    data = args.data or os.environ.get(DATA_DIR_ENV)
    if not data:
        raise UsageError(f"no dataset directory: pass --data or set ${DATA_DIR_ENV}")
    path = Path(data)
    if not path.exists():
        raise UsageError(f"dataset directory does not exist: {path}")
    return path


def _resolve_calibration(args, data_dir: Path) -> Calibration:
    cal = DEFAULT_CALIBRATION
    if args.calibrate:
        try:
            gas = harness.load_dataset("gas-b1", data_dir, seed=args.seed or 0)
        except DatasetError as exc:
            raise UsageError(f"--calibrate needs gas batch-1 files under {data_dir}: {exc}") from exc
        cal = harness.calibrate(gas, seed=args.seed or 0)
    if args.wbar is not None:
        if args.wbar <= 0:
            raise UsageError("--wbar must be > 0")
        cal = replace(cal, wbar=args.wbar)
    if args.rejection_fraction is not None:
        if not 0 < args.rejection_fraction < 1:
            raise UsageError("--rejection-fraction must lie in (0, 1)")
        cal = replace(cal, rejection_fraction=args.rejection_fraction)
    return cal


def _gp_gates(dataset: str, table: dict[str, float]) -> list[str]:
    failures = []
    values = [table[s] for s in STAGES]
    if any(b < a for a, b in zip(values, values[1:])):
        failures.append(f"stage sequence not non-decreasing: {values}")
    if table["duplicated"] < 0.90:
        failures.append(f"duplicated-stage uniformity {table['duplicated']:.3f} < 0.90")
    if dataset.startswith("gas"):
        if table["raw"] != 0.0:
            failures.append(f"raw-stage uniformity {table['raw']:.3f} != 0 on gas data")
        if table["scaled"] != 0.0:
            failures.append(f"scaled-stage uniformity {table['scaled']:.3f} != 0 on gas data")
    elif table["scaled"] < 0.8:
        failures.append(f"scaled-stage uniformity {table['scaled']:.3f} < 0.8")
    return failures


def _cmd_gp(args) -> int:
    if args.dataset is None:
        raise UsageError("gp requires --dataset")
    data_dir = _resolve_data_dir(args)
    seed = args.seed if args.seed is not None else 0
    cal = _resolve_calibration(args, data_dir)
    table = harness.run_gp_table(args.dataset, data_dir, seed=seed, calibration=cal)
    for stage in STAGES:
        print(f"{stage:>11}: {table[stage]:.4f}")
    if args.out:
        harness.emit_gp_table(table, args.out, format=args.format or "json")
    if args.check:
        failures = _gp_gates(args.dataset, table)
        for f in failures:
            print(f"CHECK FAIL: {f}", file=sys.stderr)
        return EXIT_CHECK_FAILED if failures else EXIT_OK
    return EXIT_OK


def _cmd_run(args) -> int:
    if args.dataset is None:
        raise UsageError("run requires --dataset")
    if args.shots is None:
        raise UsageError("run requires --shots")
    if args.shots not in VALID_SHOTS:
        raise UsageError(f"--shots must be one of {VALID_SHOTS}, got {args.shots}")
    data_dir = _resolve_data_dir(args)
    seed = args.seed if args.seed is not None else 0
    levels = tuple(s.strip() for s in args.levels.split(",") if s.strip()) if args.levels else ()
    cal = _resolve_calibration(args, data_dir)
    try:
        cfg = ProtocolConfig(
            dataset=args.dataset, shots=args.shots,
            ablation=args.ablation or "full",
            repeats=args.repeats if args.repeats is not None else 5,
            eval_levels=levels, seed=seed,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    ds = harness.load_dataset(cfg.dataset, data_dir, cfg.validation_fraction, cfg.seed)
    report = harness.run_protocol_on(ds, cfg, cal)
    print(f"{cfg.dataset} {cfg.shots}-shot [{cfg.ablation}] "
          f"average accuracy {100 * report.average_accuracy:.2f}% "
          f"(+/- {100 * report.stddev_across_repeats:.2f} across {cfg.repeats} repeats)")
    for level, value in sorted(report.level_averages.items()):
        print(f"  {level}: {100 * value:.2f}%")
    if args.out:
        harness.emit_report(report, args.out, format=args.format or "json")
    if args.save_state:
        _save_state(args.save_state, ds, cfg, cal, report)
    if args.check:
        failures = []
        if report.pretraining.average_accuracy != 1.0:
            failures.append("untrained network accepted samples before any training")
        for f in failures:
            print(f"CHECK FAIL: {f}", file=sys.stderr)
        return EXIT_CHECK_FAILED if failures else EXIT_OK
    return EXIT_OK


def _save_state(out_dir, ds, cfg: ProtocolConfig, cal: Calibration, report) -> None:
    meta = harness.dataset_meta(cfg.dataset)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cond_seed, net_seed, shot_seed = harness.spawn_seeds(cfg.seed * 100003, 3)
    cascade = harness._fit_cascade(ds, meta, cond_seed,
                                   heterogeneous=cfg.ablation != "no_heterogeneity",
                                   stage="raw" if cfg.ablation == "raw" else "duplicated")
    cascade.save(out / "conditioning.json")
    net = harness._probe_network(cascade.output_dim(), ds.dimension, meta, cal, net_seed,
                                 heterogeneity=cfg.ablation != "no_heterogeneity")
    net.save(out / "network.npz")
    meta_payload = {
        "schema": "eplff-state-meta/1",
        "dataset": cfg.dataset,
        "seed": cfg.seed,
        "n_inputs": net.config.n_inputs,
        "n_gcs": net.config.n_gcs,
        "gp_by_stage": {k: float(v) for k, v in report.gp_by_stage.items()},
    }
    (out / "meta.json").write_text(json.dumps(meta_payload, sort_keys=True, indent=2) + "\n",
                                   encoding="utf-8")


def _cmd_ablate(args) -> int:
    if args.dataset is None:
        raise UsageError("ablate requires --dataset")
    shots = args.shots if args.shots is not None else 1
    if shots not in VALID_SHOTS:
        raise UsageError(f"--shots must be one of {VALID_SHOTS}, got {shots}")
    data_dir = _resolve_data_dir(args)
    seed = args.seed if args.seed is not None else 0
    cal = _resolve_calibration(args, data_dir)
    reports = harness.run_ablation_suite(
        args.dataset, shots, seed, data_root=data_dir,
        repeats=args.repeats if args.repeats is not None else 5, calibration=cal)
    for arm in ABLATIONS:
        print(f"{arm:>17}: {100 * reports[arm].average_accuracy:.2f}%")
    if args.out:
        payload = {
            "schema": "eplff-report/1",
            "kind": "ablation_suite",
            "arms": {arm: reports[arm].to_dict() for arm in ABLATIONS},
        }
        if (args.format or "json") != "json":
            raise UsageError("ablate reports support json only")
        Path(args.out).write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n",
                                  encoding="utf-8")
    if args.check:
        full = reports["full"].average_accuracy
        nohet = reports["no_heterogeneity"].average_accuracy
        raw = reports["raw"].average_accuracy
        failures = []
        if not full > nohet > raw:
            failures.append(f"expected full > no_heterogeneity > raw, got "
                            f"{full:.3f} / {nohet:.3f} / {raw:.3f}")
        if full - raw < 0.25:
            failures.append(f"full-raw gap {100 * (full - raw):.1f} < 25 points")
        for f in failures:
            print(f"CHECK FAIL: {f}", file=sys.stderr)
        return EXIT_CHECK_FAILED if failures else EXIT_OK
    return EXIT_OK


def _cmd_inspect(args) -> int:
    path = Path(args.snapshot)
    if not path.is_file():
        raise UsageError(f"snapshot not found: {path}")
    if path.suffix == ".npz":
        net = EplNetwork.load(path)
        print(f"network snapshot: {path}")
        print(f"  seed: {net.config.seed}")
        print(f"  inputs (MCs): {net.config.n_inputs}")
        print(f"  interneurons (GCs): {net.config.n_gcs}")
        print(f"  trained classes: {net.trained_order_ or 'none'}")
        print(f"  heterogeneity: {net.config.heterogeneity}")
    else:
        payload = json.loads(path.read_text(encoding="utf-8"))
        schema = payload.get("schema", "")
        if schema == "eplff-conditioning/1":
            cascade = ConditioningCascade.from_dict(payload)
            print(f"conditioning snapshot: {path}")
            print(f"  seed: {cascade.seed}")
            print(f"  sensors: {cascade.n_features_in_}")
            print(f"  output dim (duplicated): {cascade.output_dim('duplicated')}")
            print(f"  stage: {cascade.stage}")
        elif schema == "eplff-state-meta/1":
            print(f"state metadata: {path}")
            print(f"  dataset: {payload['dataset']}")
            print(f"  seed: {payload['seed']}")
            print(f"  inputs (MCs): {payload['n_inputs']}")
            print(f"  interneurons (GCs): {payload['n_gcs']}")
            for stage, value in payload.get("gp_by_stage", {}).items():
                print(f"  gp[{stage}]: {value:.4f}")
        else:
            raise UsageError(f"unrecognized snapshot schema in {path}")
    return EXIT_OK


_COMMANDS = {"gp": _cmd_gp, "run": _cmd_run, "ablate": _cmd_ablate, "inspect": _cmd_inspect}


def parse_args(argv=None) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    return _merge_config_file(args)


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        if getattr(args, "check", False) and getattr(args, "seed", None) is None:
            raise UsageError("--check requires an explicit --seed for reproducibility")
        return _COMMANDS[args.subcommand](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DatasetError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
