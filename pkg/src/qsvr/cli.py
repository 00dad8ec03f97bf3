"""Command-line front end for the experiment grids.

Every subcommand reads an optional config file and applies flag overrides
on top of it.  The process exits with 0 only when every grid point
completed; failed points are reported and give exit code 1.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import experiments as ex
from .data import save_csv, toy_generate
from .svr import SvrConfig

log = logging.getLogger("qsvr")

DENSIFY_POINTS = 10


def _floats(text: str) -> tuple:
    return tuple(float(v) for v in text.split(",") if v.strip())


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="key = value config file")
    p.add_argument("--dataset", action="append",
                   help="CSV path or 'toy' (repeatable; overrides the config)")
    p.add_argument("--label-column")
    p.add_argument("--class-rule")
    p.add_argument("--split", choices=("simulation", "hardware"))
    p.add_argument("--seed", type=int)
    p.add_argument("--output-dir", "-o")
    p.add_argument("--gram-cache", help="directory for reusable training Gram matrices")
    p.add_argument("--jobs", type=int, help="worker processes for grid points")
    p.add_argument("--angle-scale", help="feature-map angle scale, e.g. pi or 0.5pi")
    p.add_argument("--C", type=float, dest="C")
    p.add_argument("--tube-epsilon", type=float)
    p.add_argument("-v", "--verbose", action="store_true")


def _noise_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--channels", help="comma-separated incoherent channels")
    p.add_argument("--strengths", type=_floats, help="comma-separated noise strengths")
    p.add_argument("--miscalibration-steps", type=int)
    p.add_argument("--densify", action="store_true",
                   help=f"add {DENSIFY_POINTS} overrotations in [0.9 pi, 1.1 pi]")


def _attack_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--epsilons", type=_floats, help="comma-separated l-inf budgets")
    p.add_argument("--iterations", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qsvr", description="Quantum-kernel SVR anomaly detection experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bench", help="noiseless quantum kernel vs RBF baseline")
    _common(p)

    p = sub.add_parser("noise-sweep", help="one detector per noise grid point")
    _common(p)
    _noise_flags(p)

    p = sub.add_parser("attack", help="PGD attacks against the noiseless detector")
    _common(p)
    _attack_flags(p)
    _noise_flags(p)
    p.add_argument("--noisy", action="store_true", help="also score attacks with every noisy detector")
    p.add_argument("--retrain", action="store_true", help="include adversarial retraining")

    p = sub.add_parser("retrain", help="adversarial retraining on the noiseless detector")
    _common(p)
    _attack_flags(p)

    p = sub.add_parser("diagnostics", help="feature-wise KS p-values and variances")
    _common(p)

    p = sub.add_parser("toy-gen", help="write the synthetic Toy data set as CSV")
    p.add_argument("output", type=Path)
    p.add_argument("--normal", type=int, default=500)
    p.add_argument("--anomaly", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    return parser


def config_from_args(args: argparse.Namespace) -> ex.ExperimentConfig:
    cfg = ex.load_config(args.config) if getattr(args, "config", None) else ex.ExperimentConfig()
    over = {}
    simple = {"label_column": "label_column", "class_rule": "class_rule", "split": "split_policy",
              "seed": "seed", "output_dir": "output_dir", "gram_cache": "gram_cache", "jobs": "n_jobs",
              "strengths": "noise_strengths", "miscalibration_steps": "miscalibration_steps",
              "epsilons": "epsilons", "iterations": "attack_iterations"}
    for flag, attr in simple.items():
        value = getattr(args, flag, None)
        if value is not None:
            over[attr] = value
    if getattr(args, "dataset", None):
        over["datasets"] = tuple(args.dataset)
    if getattr(args, "channels", None):
        over["noise_kinds"] = tuple(c.strip() for c in args.channels.split(",") if c.strip())
    if getattr(args, "angle_scale", None):
        over["angle_scale"] = ex.eval_angle(args.angle_scale)
    if getattr(args, "densify", False):
        over["densify_pi"] = DENSIFY_POINTS
    if getattr(args, "noisy", False):
        over["attack_noisy"] = True
    if getattr(args, "retrain", False):
        over["retrain"] = True
    svr = {}
    if getattr(args, "C", None) is not None:
        svr["C"] = args.C
    if getattr(args, "tube_epsilon", None) is not None:
        svr["tube_epsilon"] = args.tube_epsilon
    if svr:
        base = cfg.svr
        over["svr"] = SvrConfig(svr.get("C", base.C), svr.get("tube_epsilon", base.tube_epsilon),
                                base.kkt_tolerance, base.max_iterations)
    return replace(cfg, **over)


def _summary(records) -> None:
    for r in sorted(records, key=lambda r: r.sort_key):
        print(f"{r.key:60s} auc={r.auc:.4f} normal={r.normal_ratio:.3f} "
              f"anomaly={r.anomaly_ratio:.3f} evals={r.evaluations} t={r.wall_time:.2f}s")


RUNNERS = {"bench": ex.run_benchmark, "noise-sweep": ex.run_noise_sweep,
           "attack": ex.run_attack_sweep, "retrain": ex.run_retrain}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "toy-gen":
        save_csv(toy_generate(args.normal, args.anomaly, args.seed), args.output)
        print(f"wrote {args.output}")
        return 0
    try:
        cfg = config_from_args(args)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.command == "diagnostics":
        diag = ex.run_diagnostics(cfg)
        for name, d in sorted(diag.items()):
            print(f"{name}: min KS p-value {d.min_ks_pvalue:.3g}, max variance {d.max_variance:.3g}")
        ex.emit_reports([], cfg.output_dir, diag)
        return 0
    status = 0
    try:
        records = RUNNERS[args.command](cfg)
    except ex.SweepIncomplete as exc:
        print(f"error: {exc}", file=sys.stderr)
        records, status = exc.records, 1
    if records:
        ex.emit_reports(records, cfg.output_dir)
        _summary(records)
        print(f"reports written to {cfg.output_dir}")
    return status


if __name__ == "__main__":
    sys.exit(main())
