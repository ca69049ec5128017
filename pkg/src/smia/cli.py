"""Command-line harness.

Subcommands: train, attack, sweep, diagnose, report. Common flags
(--config, --seed, --out, --jobs) may also be supplied via environment
variables with the SMIA_ prefix (SMIA_CONFIG, SMIA_SEED, SMIA_OUT,
SMIA_JOBS); explicit flags win. Exit codes: 0 success, 1 usage error,
2 runtime failure.
"""

from __future__ import annotations

import argparse
import os
import sys

from . import harness
from .config import ConfigError, RunConfig, load_config

ENV_PREFIX = "SMIA_"


def _env_default(name, fallback=None):
    return os.environ.get(ENV_PREFIX + name.upper(), fallback)


def _add_common(p):
    p.add_argument("--config", default=_env_default("config"),
                   help="campaign config file (flat key = value format)")
    p.add_argument("--seed", type=int,
                   default=int(_env_default("seed", "0")),
                   help="global seed (default 0)")
    p.add_argument("--out", default=_env_default("out", "out"),
                   help="output directory")
    p.add_argument("--jobs", type=int,
                   default=int(_env_default("jobs", "1")),
                   help="parallel attack workers (default 1)")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="smia",
        description="Adversarial attack campaigns with smoothing "
                    "stabilization, plus Fisher/KL diagnostics.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in [("train", "train the victim model only"),
                       ("attack", "run the configured attack campaign"),
                       ("sweep", "run the configured hyper-parameter sweep"),
                       ("diagnose", "emit Fisher/KL diagnostic artifacts"),
                       ("report", "consolidate a campaign into a report")]:
        p = sub.add_parser(name, help=text)
        _add_common(p)
    return parser


def _load(args) -> RunConfig:
    if args.config:
        return load_config(args.config, seed=args.seed)
    return RunConfig(seed=args.seed).validate()


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code not in (0, None) else 0
    try:
        cfg = _load(args) if args.command != "diagnose" else None
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        if args.command == "train":
            os.makedirs(args.out, exist_ok=True)
            full = harness.build_dataset(cfg, args.out)
            from .datasets import split_normalize
            train_ds, test_ds = split_normalize(
                full, cfg.values["train_fraction"], seed=cfg.seed)
            model = harness.prepare_victim(cfg, train_ds, args.out)
            acc = harness.accuracy(model, test_ds.images, test_ds.labels)
            print(f"victim trained; held-out accuracy {acc:.4f}")
            print(f"checkpoint: {os.path.join(args.out, 'victim.ckpt')}")
        elif args.command == "attack":
            rows = harness.run_config(cfg, args.out, jobs=args.jobs)
            for row in rows:
                print(f"{row['method']}: clean {row['clean_acc']:.4f} "
                      f"adv {row['adv_acc']:.4f} drop {row['drop']:.4f}")
            print(f"campaign CSV: {os.path.join(args.out, 'campaign.csv')}")
        elif args.command == "sweep":
            rows = harness.sweep(cfg, args.out, jobs=args.jobs)
            print(f"sweep finished: {len(rows)} rows -> "
                  f"{os.path.join(args.out, 'sweep.csv')}")
        elif args.command == "diagnose":
            harness.run_diagnostics(args.out, seed=args.seed)
            print(f"diagnostics written to {args.out}")
        elif args.command == "report":
            out_path = os.path.join(args.out, "report.txt")
            harness.emit_report(os.path.join(args.out, "campaign.csv"),
                                args.out, out_path)
            print(f"report: {out_path}")
    except (ConfigError, harness.HarnessError, ValueError,
            FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
