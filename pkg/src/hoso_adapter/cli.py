"""Command-line entry point for reproducible experiments.

Subcommands: ``run``, ``sweep``, ``validate-bank``, ``synth``, ``plot``.
Configuration comes from an optional JSON file plus flag overrides (flags
win). Output root defaults to ``out``, overridden by the ``HOSO_OUT``
environment variable and the ``--out`` flag, in that order. Run artifacts
land in ``<out>/<dataset>/<method>/<K>shot/seed<i>/``.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .errors import HosoError
from .evaluation import SyntheticSpec, add_synthetic_views, evaluate, make_synthetic_bank, write_csv
from .featurebank import load_bank, write_bank
from .model import zero_shot_classifier
from .trainers import METHODS, TrainConfig, run_method

SWEEP_AXES = ("alpha", "cache", "shots", "ratio_lr")


def _out_root(args) -> str:
    if args.out:
        return args.out
    return os.environ.get("HOSO_OUT", "out")


def _load_config(args) -> dict:
    cfg = {}
    if getattr(args, "config", None):
        with open(args.config, encoding="utf-8") as fh:
            cfg.update(json.load(fh))
    field_names = {f.name for f in dataclasses.fields(TrainConfig)}
    for name in field_names:
        value = getattr(args, name, None)
        if value is not None:
            cfg[name] = value
    unknown = set(cfg) - field_names
    if unknown:
        raise HosoError(f"unknown config keys: {sorted(unknown)}")
    return cfg


def _get_bank(args):
    if bool(args.bank) == bool(args.synthetic):
        raise HosoError("provide exactly one data source: --bank DIR or --synthetic SPEC.json")
    if args.bank:
        return load_bank(args.bank)
    with open(args.synthetic, encoding="utf-8") as fh:
        spec = SyntheticSpec(**json.load(fh))
    return make_synthetic_bank(spec)


def _seed_list(raw: str) -> list[int]:
    return [int(s) for s in raw.split(",") if s.strip()]


def _run_one(bank, cfg_dict: dict):
    config = TrainConfig(**cfg_dict)
    _, report = run_method(bank, config)
    return report


def _execute(bank, cfg_dicts: list[dict], workers: int):
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_run_one, [bank] * len(cfg_dicts), cfg_dicts))
    return [_run_one(bank, c) for c in cfg_dicts]


def _run_dir(root: str, bank, config: TrainConfig, seed: int) -> str:
    return os.path.join(root, bank.dataset, config.method,
                        f"{config.shots}shot", f"seed{seed}")


def cmd_run(args) -> int:
    bank = _get_bank(args)
    base = _load_config(args)
    seeds = _seed_list(args.seeds)
    cfgs = [dict(base, seed=s) for s in seeds]
    reports = _execute(bank, cfgs, args.workers)
    root = _out_root(args)
    accs = []
    for seed, report in zip(seeds, reports):
        run_dir = _run_dir(root, bank, TrainConfig(**dict(base, seed=seed)), seed)
        report.save(run_dir)
        accs.append(report.final_test_accuracy)
        print(f"seed {seed}: test accuracy "
              f"{report.final_test_accuracy if report.final_test_accuracy is not None else 'n/a'}")
    summary = {
        "method": reports[0].method,
        "dataset": bank.dataset,
        "shots": reports[0].config["shots"],
        "seeds": seeds,
        "accuracies": accs,
        "mean_accuracy": float(np.mean(accs)) if None not in accs else None,
        "stddev_accuracy": float(np.std(accs)) if None not in accs else None,
        "config": reports[0].config,
    }
    summary_dir = os.path.join(root, bank.dataset, reports[0].method,
                               f"{reports[0].config['shots']}shot")
    os.makedirs(summary_dir, exist_ok=True)
    with open(os.path.join(summary_dir, "summary.json"), "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2)
    print(f"mean accuracy over {len(seeds)} seeds: {summary['mean_accuracy']}")
    return 0


def _axis_config(base: dict, axis: str, value: float) -> dict:
    if axis == "alpha":
        return dict(base, method="fixed", fixed_alpha=float(value))
    if axis == "cache":
        return dict(base, method="hoso", cache_per_class=int(value))
    if axis == "shots":
        return dict(base, shots=int(value))
    if axis == "ratio_lr":
        return dict(base, method="hoso", ratio_lr=float(value))
    raise HosoError(f"unknown sweep axis {axis!r}; choose from {SWEEP_AXES}")


def cmd_sweep(args) -> int:
    bank = _get_bank(args)
    base = _load_config(args)
    seeds = _seed_list(args.seeds)
    values = [float(v) for v in args.values.split(",") if v.strip()]
    if not values:
        raise HosoError("sweep axis values list is empty")
    jobs, keys = [], []
    for v in values:
        for s in seeds:
            jobs.append(dict(_axis_config(base, args.axis, v), seed=s))
            keys.append((v, s))
    reports = _execute(bank, jobs, args.workers)
    root = _out_root(args)
    sweep_dir = os.path.join(root, bank.dataset, f"sweep_{args.axis}")
    rows = [(v, s, r.final_test_accuracy) for (v, s), r in zip(keys, reports)]
    write_csv(os.path.join(sweep_dir, "sweep.csv"),
              [args.axis, "seed", "test_accuracy"], rows)
    summary_rows = []
    for v in values:
        accs = [r for (vv, _), r in zip(keys, (rep.final_test_accuracy for rep in reports))
                if vv == v]
        summary_rows.append((v, float(np.mean(accs)), float(np.std(accs))))
    write_csv(os.path.join(sweep_dir, "sweep_summary.csv"),
              [args.axis, "mean_accuracy", "stddev_accuracy"], summary_rows)
    for v, mean, std in summary_rows:
        print(f"{args.axis}={v}: {mean:.4f} +/- {std:.4f}")
    print(f"wrote {sweep_dir}/sweep.csv")
    return 0


def cmd_validate_bank(args) -> int:
    bank = load_bank(args.path)
    print(f"OK: {bank.dataset} ({bank.backbone}), dim={bank.embedding_dim}, "
          f"classes={bank.num_classes}")
    print(f"  train items: {len(bank.train_labels)}, test items: {len(bank.test_labels)}, "
          f"augmented: {bank.has_augmented}")
    norms = np.linalg.norm(bank.text_prototypes, axis=1)
    print(f"  prototype norms: [{norms.min():.6f}, {norms.max():.6f}]")
    if len(bank.test_labels):
        result = evaluate(bank, zero_shot_classifier(bank))
        print(f"  zero-shot test accuracy: {result.accuracy:.4f}")
    else:
        print("  warning: bank has no test split (training-only bank)")
    return 0


def cmd_synth(args) -> int:
    if args.spec:
        with open(args.spec, encoding="utf-8") as fh:
            spec = SyntheticSpec(**json.load(fh))
    else:
        spec = SyntheticSpec(
            num_classes=args.classes, dim=args.dim,
            prototype_angle_spread=args.spread, within_class_noise=args.noise,
            domain_gap=args.gap, train_per_class=args.train_per_class,
            test_per_class=args.test_per_class, logit_scale=args.logit_scale,
            seed=args.seed,
        )
    bank = make_synthetic_bank(spec)
    if args.views:
        add_synthetic_views(bank, seed=spec.seed)
    write_bank(bank, args.dest)
    print(f"wrote synthetic bank to {args.dest} "
          f"(C={bank.num_classes}, dim={bank.embedding_dim})")
    return 0


def cmd_plot(args) -> int:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    data = np.genfromtxt(args.csv, delimiter=",", names=True)
    names = list(data.dtype.names)
    x_col = args.x or names[0]
    y_cols = args.y.split(",") if args.y else [n for n in names if n != x_col]
    fig, ax = plt.subplots(figsize=(6, 4))
    for col in y_cols:
        ax.plot(data[x_col], data[col], label=col)
    ax.set_xlabel(x_col)
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(args.dest, format="svg")
    print(f"wrote {args.dest}")
    return 0


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with TrainConfig fields (flags override)")
    p.add_argument("--method", choices=METHODS)
    p.add_argument("--shots", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--adapter-lr", dest="adapter_lr", type=float)
    p.add_argument("--ratio-lr", dest="ratio_lr", type=float)
    p.add_argument("--fixed-alpha", dest="fixed_alpha", type=float)
    p.add_argument("--cache-per-class", dest="cache_per_class", type=int)
    p.add_argument("--blend-mode", dest="blend_mode", choices=("feature", "logit"))
    p.add_argument("--eval-epoch-test", dest="eval_epoch_test",
                   action="store_const", const=True)


def _add_data_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--bank", help="feature-bank directory")
    p.add_argument("--synthetic", help="SyntheticSpec JSON file")
    p.add_argument("--seeds", default="1,2,3", help="comma-separated seed list")
    p.add_argument("--out", help="output root (default: $HOSO_OUT or ./out)")
    p.add_argument("--workers", type=int, default=1, help="parallel run pool size")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hoso", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="train/evaluate one method over all seeds")
    _add_data_flags(p)
    _add_config_flags(p)
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("sweep", help="sweep one axis (alpha | cache | shots | ratio_lr)")
    p.add_argument("--axis", required=True, choices=SWEEP_AXES)
    p.add_argument("--values", required=True, help="comma-separated axis values")
    _add_data_flags(p)
    _add_config_flags(p)
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("validate-bank", help="check a bank directory's invariants")
    p.add_argument("path")
    p.set_defaults(fn=cmd_validate_bank)

    p = sub.add_parser("synth", help="emit a synthetic fixture bank")
    p.add_argument("dest", help="output bank directory")
    p.add_argument("--spec", help="SyntheticSpec JSON file")
    p.add_argument("--classes", type=int, default=10)
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--spread", type=float, default=1.0)
    p.add_argument("--noise", type=float, default=0.3)
    p.add_argument("--gap", type=float, default=0.0)
    p.add_argument("--train-per-class", type=int, default=64)
    p.add_argument("--test-per-class", type=int, default=64)
    p.add_argument("--logit-scale", type=float, default=10.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--views", action="store_true", help="add synthetic weak/strong views")
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("plot", help="render a CSV to an SVG line chart")
    p.add_argument("csv")
    p.add_argument("dest", help="output .svg path")
    p.add_argument("--x", help="x column name (default: first column)")
    p.add_argument("--y", help="comma-separated y columns (default: all others)")
    p.set_defaults(fn=cmd_plot)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except HosoError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
