"""Command-line interface.

    unlearnkit train   --config cfg [--seed N] [--out DIR]
    unlearnkit unlearn --config cfg --method NAME [--epsilon E] [--out DIR]
    unlearnkit eval    --config cfg [--out DIR]
    unlearnkit run     --config cfg [--seed N] [--forget-class K] [--out DIR]
    unlearnkit report  [--out DIR]

`run` executes the full pipeline (train, every unlearning method, evaluation,
artifact emission). `report` re-emits the CSV tables from a completed run
directory without recomputing anything.
"""

import argparse
import sys
from dataclasses import replace

from .checkpoint import CheckpointFormatError
from .experiment import (
    StageError,
    evaluate_run,
    load_config,
    report_run,
    run_experiment,
    train_to_dir,
    unlearn_to_dir,
)
from .metrics import accuracy
from .unlearn import METHODS

__all__ = ["main", "build_parser"]

_DEFAULT_OUT = "run_out"


def build_parser():
    parser = argparse.ArgumentParser(
        prog="unlearnkit",
        description="Train, unlearn a class, and evaluate dense classifiers.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, config_required=True):
        p.add_argument("--config", required=config_required,
                       help="path to a flat key = value config file")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
        p.add_argument("--forget-class", type=int, default=None,
                       help="override the class to forget")
        p.add_argument("--epsilon", type=float, default=None,
                       help="override the boundary-shift step size")
        p.add_argument("--out", default=_DEFAULT_OUT,
                       help=f"run directory (default: {_DEFAULT_OUT})")

    add_common(sub.add_parser("train", help="train the original model"))
    p_unlearn = sub.add_parser("unlearn", help="run one unlearning method")
    add_common(p_unlearn)
    p_unlearn.add_argument("--method", required=True, choices=METHODS,
                           help="unlearning method to run")
    add_common(sub.add_parser("eval", help="recompute metrics from checkpoints"))
    add_common(sub.add_parser("run", help="full train/unlearn/eval pipeline"))
    p_report = sub.add_parser("report", help="re-emit tables from a finished run")
    p_report.add_argument("--out", default=_DEFAULT_OUT,
                          help=f"run directory (default: {_DEFAULT_OUT})")
    return parser


def _load_with_overrides(args):
    cfg = load_config(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.forget_class is not None:
        overrides["forget_class"] = args.forget_class
    if args.epsilon is not None:
        overrides["epsilon"] = args.epsilon
    return replace(cfg, **overrides) if overrides else cfg


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except (ValueError, OSError, StageError, CheckpointFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def _dispatch(args):
    if args.command == "report":
        report_run(args.out)
        print(f"tables re-emitted in {args.out}")
        return 0

    cfg = _load_with_overrides(args)

    if args.command == "train":
        result, split = train_to_dir(cfg, args.out)
        acc_r = accuracy(result.model, split.X_retain, split.y_retain)
        acc_f = accuracy(result.model, split.X_forget, split.y_forget)
        print(f"trained original in {result.wall_clock_seconds:.2f}s "
              f"(retain acc {acc_r:.4f}, forget acc {acc_f:.4f})")
        print(f"checkpoint: {args.out}/checkpoints/original.ckpt")
        return 0

    if args.command == "unlearn":
        result = unlearn_to_dir(cfg, args.out, args.method)
        print(f"{args.method}: {result.wall_clock_seconds:.2f}s")
        print(f"checkpoint: {args.out}/checkpoints/{args.method}.ckpt")
        return 0

    if args.command == "eval":
        output = evaluate_run(cfg, args.out)
        _print_summary(output)
        return 0

    output = run_experiment(cfg, args.out)
    _print_summary(output)
    return 0


def _print_summary(output):
    print(f"artifacts in {output.out_dir}")
    for report in output.reports:
        print(f"  {report.method:>18s}: retain {report.acc_retain:.4f} "
              f"forget {report.acc_forget:.4f} asr {report.asr:.4f} "
              f"wall {output.wall_clocks.get(report.method, 0.0):.2f}s")


if __name__ == "__main__":
    sys.exit(main())
