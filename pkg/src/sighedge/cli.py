"""Command line front end.

Subcommands: simulate, hedge {fourier,linear-reg,linear-bcs,deep},
calibrate sigvol, evaluate, report.  Experiments are described by a flat
key=value config file (see harness.load_config); outputs are written to
--out-dir.  Exit code 0 only when everything requested completed.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import harness
from . import models
from . import sigvolreg

HEDGE_FAMILIES = {
    "fourier": ("fourier", "fourier_reg"),
    "linear-reg": ("linear_reg",),
    "linear-bcs": ("linear_bcs",),
    "deep": ("vnn", "snn", "rnn", "logsnn"),
}


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="sighedge",
        description="signature-based quadratic hedging experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_required=True):
        p.add_argument("--config", required=True,
                       help="flat key=value experiment config")
        p.add_argument("--out-dir", required=out_required,
                       help="directory for result files")
        p.add_argument("--seed", type=int, default=None,
                       help="override seeds.train (seeds.oos becomes "
                            "seed+1)")
        p.add_argument("--deterministic", action="store_true",
                       help="record and require bit-reproducible outputs")
        p.add_argument("--dry-run", action="store_true",
                       help="validate the config without computing")

    common(sub.add_parser("simulate", help="simulate and store the "
                          "training market"))
    hedge = sub.add_parser("hedge", help="run one family of hedging "
                           "methods")
    hedge.add_argument("family", choices=sorted(HEDGE_FAMILIES))
    common(hedge)
    calib = sub.add_parser("calibrate", help="fit model components")
    calib.add_argument("target", choices=["sigvol"])
    common(calib)
    common(sub.add_parser("evaluate", help="run every method in the "
                          "config"))
    report = sub.add_parser("report", help="recompute the summary from "
                            "pnl.csv and verify it")
    report.add_argument("--out-dir", required=True)
    return parser


def _load(args):
    cfg = harness.load_config(args.config)
    if args.seed is not None:
        cfg["seeds.train"] = args.seed
        cfg["seeds.oos"] = args.seed + 1
    return cfg


def _cmd_simulate(args):
    cfg = harness.validate_config(_load(args))
    if args.dry_run:
        print("config ok")
        return 0
    spec = cfg["_payoff"]
    model = models.preset(cfg["model.name"])
    batch = models.simulate(model, cfg["paths.train"], cfg["grid.steps"],
                            spec.maturity, seed=cfg["seeds.train"],
                            purpose="train")
    os.makedirs(args.out_dir, exist_ok=True)
    path = os.path.join(args.out_dir, "paths.npz")
    with open(path + ".tmp", "wb") as fh:
        np.savez(fh, times=batch.times, S=batch.S, Sigma=batch.Sigma)
    os.replace(path + ".tmp", path)
    harness._atomic_text(
        os.path.join(args.out_dir, "manifest.json"),
        json.dumps({"record": batch.seed_record,
                    "config_hash": harness.config_hash(_load(args)),
                    "deterministic": args.deterministic},
                   indent=2, sort_keys=True) + "\n")
    print(f"wrote {path}: S {batch.S.shape}")
    return 0


def _cmd_calibrate(args):
    raw = _load(args)
    cfg = harness.validate_config(raw)
    for key in ("calibrate.order", "calibrate.target_order"):
        harness._req(raw, key, int, lambda v: v >= 1, "must be >= 1")
    if args.dry_run:
        print("config ok")
        return 0
    spec = cfg["_payoff"]
    model = models.preset(cfg["model.name"])
    batch = models.simulate(model, cfg["paths.train"], cfg["grid.steps"],
                            spec.maturity, seed=cfg["seeds.train"],
                            purpose="train")
    ccfg = sigvolreg.CalibConfig(
        batch.times, order=raw["calibrate.order"],
        target_order=raw["calibrate.target_order"],
        n_starts=raw.get("calibrate.starts", 10),
        iters=raw.get("calibrate.iters", 2000),
        lr=raw.get("calibrate.lr", 1e-2), seed=cfg["seeds.train"])
    targets = sigvolreg.target_expected_sig(batch.times, batch.Sigma,
                                            ccfg.target_order)
    rep, report = sigvolreg.calibrate(ccfg, targets, batch.Sigma)
    os.makedirs(args.out_dir, exist_ok=True)
    out = {"order": rep.order,
           "coeffs": rep.at(0.0).coeffs.tolist(),
           "report": {k: (v.tolist() if hasattr(v, "tolist") else v)
                      for k, v in report.items() if k != "loss"},
           "config_hash": harness.config_hash(raw)}
    harness._atomic_text(os.path.join(args.out_dir, "sigmahat.json"),
                         json.dumps(out, indent=2, sort_keys=True) + "\n")
    print(f"calibrated sigma-hat order {rep.order}: loss "
          f"{report['loss']:.3e}")
    return 0


def _run(args, methods=None):
    summary = harness.run_experiment(_load(args), args.out_dir,
                                     deterministic=args.deterministic,
                                     dry_run=args.dry_run, methods=methods)
    if args.dry_run:
        print("config ok; methods: " + ", ".join(summary["methods"]))
        return 0
    for m, row in sorted(summary["methods"].items()):
        print(f"{m:12s} mean {row['mean']: .4e}  msq {row['msq']:.4e}  "
              f"n {row['count']}")
    for m, err in summary.get("failures", {}).items():
        print(f"{m:12s} FAILED: {err}", file=sys.stderr)
    return 1 if summary.get("failures") else 0


def _cmd_report(args):
    fresh, match = harness.recompute_summary(args.out_dir)
    for m, row in sorted(fresh.items()):
        print(f"{m:12s} mean {row['mean']: .4e}  msq {row['msq']:.4e}  "
              f"n {row['count']}")
    print("summary.json matches pnl.csv" if match
          else "MISMATCH between summary.json and pnl.csv")
    return 0 if match else 2


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "simulate":
            return _cmd_simulate(args)
        if args.command == "hedge":
            return _run(args, methods=HEDGE_FAMILIES[args.family])
        if args.command == "calibrate":
            return _cmd_calibrate(args)
        if args.command == "evaluate":
            return _run(args)
        return _cmd_report(args)
    except harness.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
