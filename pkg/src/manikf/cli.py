"""Command-line front end: simulate, montecarlo, compare.

Exit codes: 0 success, 2 configuration/usage error, 3 numerical failure
inside a filter run.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from .errors import ContractViolationError
from .harness import (
    run_monte_carlo,
    run_trial,
    summarize,
    write_summary_json,
    write_trial_csv,
)
from .trajectory import SCENARIOS, ScenarioConfig

SUMMARY_KEYS = ("mean_nees", "containment_rate", "final_drift_m", "iterations_mean")

_CONFIG_FIELDS = {
    "scenario": str,
    "seed": int,
    "duration": float,
    "dt": float,
    "peak_rate": float,
    "n_planes": int,
    "points_per_update": int,
    "sigma_a": float,
    "sigma_w": float,
    "sigma_ba": float,
    "sigma_bw": float,
    "sigma_feature": float,
    "nmax": int,
    "filter": str,
    "baseline_mode": str,
}


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scenario", choices=SCENARIOS)
    p.add_argument("--seed", type=int)
    p.add_argument("--duration", type=float, metavar="S")
    p.add_argument("--dt", type=float, metavar="S")
    p.add_argument("--trials", type=int)
    p.add_argument("--nmax", type=int)
    p.add_argument("--filter", choices=("ikfom", "quat"))
    p.add_argument("--out", type=Path, default=Path("."))
    p.add_argument("--config", type=Path, help="JSON file with the same keys as the flags")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="manikf", description="Manifold Kalman filter simulation harness"
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("simulate", "run one trial and write its CSV trace"),
        ("montecarlo", "run repeated trials and write the summary JSON"),
        ("compare", "paired drift comparison of both filters"),
    ):
        _add_common(sub.add_parser(name, help=help_text))
    return parser


def _load_config(args) -> tuple:
    """Merge config file and flags (flags win) into a ScenarioConfig."""
    values = {}
    trials = None
    if args.config is not None:
        try:
            raw = json.loads(args.config.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ContractViolationError(f"cannot read config file: {exc}")
        if not isinstance(raw, dict):
            raise ContractViolationError("config file must hold a JSON object")
        for key, val in raw.items():
            if key == "trials":
                trials = int(val)
            elif key in _CONFIG_FIELDS:
                values[key] = _CONFIG_FIELDS[key](val)
            else:
                raise ContractViolationError(f"unknown config key {key!r}")
    for key in ("scenario", "seed", "duration", "dt", "nmax", "filter"):
        flag = getattr(args, key)
        if flag is not None:
            values[key] = flag
    if args.trials is not None:
        trials = args.trials
    cfg = ScenarioConfig(**values)
    cfg.validate()
    return cfg, (1 if trials is None else trials)


def _cmd_simulate(cfg: ScenarioConfig, trials: int, out: Path) -> int:
    record = run_trial(cfg, trial=0, keep_estimates=True)
    out.mkdir(parents=True, exist_ok=True)
    write_trial_csv(record, out / "trial.csv")
    summary = {k: v for k, v in summarize([record]).items() if k in SUMMARY_KEYS}
    write_summary_json(summary, out / "summary.json")
    if record.failed:
        print(f"trial failed: {record.failure}", file=sys.stderr)
        return 3
    return 0


def _cmd_montecarlo(cfg: ScenarioConfig, trials: int, out: Path) -> int:
    result = run_monte_carlo(cfg, trials)
    out.mkdir(parents=True, exist_ok=True)
    summary = {k: v for k, v in result["summary"].items() if k in SUMMARY_KEYS}
    write_summary_json(summary, out / "summary.json")
    failures = result["summary"]["failures"]
    if failures:
        print(f"{failures}/{trials} trials failed", file=sys.stderr)
    return 3 if failures == trials else 0


def _cmd_compare(cfg: ScenarioConfig, trials: int, out: Path) -> int:
    out.mkdir(parents=True, exist_ok=True)
    rows = ["trial,drift_ikfom_m,drift_quat_m,ratio"]
    ratios, wins, failures = [], 0, 0
    for i in range(trials):
        rec_i = run_trial(dataclasses.replace(cfg, filter="ikfom"), trial=i)
        rec_q = run_trial(dataclasses.replace(cfg, filter="quat"), trial=i)
        if rec_i.failed or rec_q.failed:
            failures += 1
            rows.append("%d,nan,nan,nan" % i)
            continue
        ratio = rec_q.final_drift / max(rec_i.final_drift, 1e-12)
        ratios.append(ratio)
        wins += int(rec_i.final_drift <= rec_q.final_drift)
        rows.append(
            "%d,%.17g,%.17g,%.17g" % (i, rec_i.final_drift, rec_q.final_drift, ratio)
        )
    (out / "compare.csv").write_text("\n".join(rows) + "\n")
    summary = {
        "trials": trials,
        "failures": failures,
        "win_rate": (wins / len(ratios)) if ratios else float("nan"),
        "median_drift_ratio": float(np.median(ratios)) if ratios else float("nan"),
    }
    write_summary_json(summary, out / "compare.json")
    return 3 if failures == trials else 0


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        cfg, trials = _load_config(args)
    except (ContractViolationError, TypeError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    command = {
        "simulate": _cmd_simulate,
        "montecarlo": _cmd_montecarlo,
        "compare": _cmd_compare,
    }[args.command]
    return command(cfg, trials, args.out)


if __name__ == "__main__":
    sys.exit(main())
