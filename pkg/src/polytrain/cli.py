"""Command-line entry point: ``polytrain <subcommand> ...``.

Results go to stdout as tab-separated ``key<TAB>value`` lines (or a TSV
table for ablations); files and figures go to the ``--out`` location.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .ablation import ARMS, ablate, parse_seeds, write_ablation
from .circuit import depth, fuse_batchnorm, load_circuit, lower, save_circuit
from .data import load_csv
from .errors import PolytrainError
from .layers import load_checkpoint
from .polyfit import fit_activation
from .stats import parse_proportion, two_proportion_ztest
from .training import TrainingConfig, train, write_run


def _emit(pairs):
    for k, v in pairs:
        print(f"{k}\t{v}")


def cmd_fit_activation(args):
    poly = fit_activation(args.target, args.degree, args.bound, args.alpha, args.samples)
    payload = json.dumps(poly.to_dict(), indent=2)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(payload + "\n")
    else:
        print(payload)
    if args.plot:
        from .plotting import plot_activation_fit

        plot_activation_fit(poly, args.plot)


def cmd_train(args):
    config = TrainingConfig.load(args.config)
    report, model = train(config)
    write_run(report, model, args.out, figures=not args.no_figures)
    _emit([
        ("diverged", int(report.diverged)),
        ("divergence_epoch", report.divergence_epoch if report.diverged else ""),
        ("epochs", len(report.epochs)),
        ("final_val_accuracy", "" if report.final_val_accuracy is None else f"{report.final_val_accuracy:.4f}"),
        ("test_accuracy", "" if report.test_accuracy is None else f"{report.test_accuracy:.4f}"),
        ("report_dir", args.out),
    ])


def cmd_ablate(args):
    config = TrainingConfig.load(args.config)
    result = ablate(config, parse_seeds(args.seeds), threads=args.threads)
    write_ablation(result, args.out, figures=not args.no_figures)
    n = len(result.seeds)
    tests = result.ztests()
    print("arm\tsuccesses\truns\tz_vs_proposed\tp_vs_proposed")
    for arm in ARMS:
        t = tests.get(arm)
        z = "" if t is None else f"{t['z']:.6f}"
        p = "" if t is None else f"{t['p']:.3g}"
        print(f"{arm}\t{result.success_count(arm)}\t{n}\t{z}\t{p}")


def cmd_eval(args):
    model = load_checkpoint(args.checkpoint)
    ds = load_csv(args.data, args.label_column)
    logits, _ = model.forward(ds.x, "eval")
    acc = float(np.mean(np.argmax(logits, axis=1) == ds.y))
    _emit([("samples", len(ds)), ("accuracy", f"{acc:.6f}")])


def cmd_lower(args):
    model = load_checkpoint(args.checkpoint)
    circuit = lower(fuse_batchnorm(model))
    report = depth(circuit)
    save_circuit(circuit, args.out, report)
    _emit(list(report.to_dict().items()) + [("circuit", args.out)])


def cmd_depth_report(args):
    if args.circuit:
        circuit = load_circuit(args.circuit)
    else:
        circuit = lower(fuse_batchnorm(load_checkpoint(args.checkpoint)))
    _emit(depth(circuit).to_dict().items())


def cmd_ztest(args):
    k1, n1 = parse_proportion(args.a)
    k2, n2 = parse_proportion(args.b)
    z, p = two_proportion_ztest(k1, n1, k2, n2)
    _emit([("z", f"{z:.6f}"), ("p", f"{p:.6g}")])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="polytrain", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit-activation", help="least-squares polynomial fit of an activation")
    p.add_argument("--target", choices=["relu", "silu", "identity"], default="relu")
    p.add_argument("--degree", type=int, required=True)
    p.add_argument("--bound", type=float, required=True, help="fit interval half-width B")
    p.add_argument("--samples", type=int, default=200, help="number of uniform sample points")
    p.add_argument("--alpha", type=float, default=1.0, help="boundary threshold fraction")
    p.add_argument("--out", help="write coefficients JSON here instead of stdout")
    p.add_argument("--plot", help="also render the fit to this image file")
    p.set_defaults(func=cmd_fit_activation)

    p = sub.add_parser("train", help="train one model from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="report directory")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("ablate", help="four-arm ablation over several seeds")
    p.add_argument("--config", required=True)
    p.add_argument("--seeds", default="0..9", help="'0..9' or '0,1,2'")
    p.add_argument("--out", required=True)
    p.add_argument("--threads", type=int, default=None, help="worker processes (default: $POLYTRAIN_THREADS or 1)")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("eval", help="accuracy of a checkpoint on a labelled CSV")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--label-column", default="label")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("lower", help="fuse batchnorm and lower a checkpoint to an arithmetic circuit")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_lower)

    p = sub.add_parser("depth-report", help="multiplicative depth of a circuit or checkpoint")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--circuit")
    g.add_argument("--checkpoint")
    p.set_defaults(func=cmd_depth_report)

    p = sub.add_parser("ztest", help="pooled two-proportion z-test")
    p.add_argument("--a", required=True, help="successes/runs, e.g. 8/10")
    p.add_argument("--b", required=True)
    p.set_defaults(func=cmd_ztest)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (PolytrainError, OSError) as exc:
        print(f"polytrain: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
