# In DynamicEmulation/cli.py
"""
The `dynemu` command line: run experiments, generate simulator datasets, and
score prediction files.
"""
import argparse
import json
import sys
from pathlib import Path
from typing import List, Optional

from loguru import logger

from .config import load_config, resolve_workers
from .driver import ExperimentConfig, prepare_data, run_experiment
from .exceptions import EmulatorError
from .metrics import score_predictions
from .report import dump_matrix, read_matrix, write_reports
from .simulators import SIMULATORS, save_dataset


def _configure_logging(verbose: bool):
    logger.remove()
    logger.add(sys.stderr, level="DEBUG" if verbose else "WARNING")


def _fmt(value) -> str:
    return "n/a" if value is None else f"{value:.4g}"


def cmd_run(args) -> int:
    config = load_config(args.config)
    config.workers = resolve_workers(args.workers if args.workers is not None else config.workers)
    output = Path(args.output or config.output or "dynemu_report.json")

    print(f"🚀 Running {config.method} ({config.repetitions} replication(s), {config.workers} worker(s))...")
    reports = run_experiment(config)
    path = write_reports(reports, output)

    if config.dump_predictions:
        for report in reports:
            stem = output.with_suffix("")
            dump_matrix(report.means, f"{stem}_rep{report.replication}_means.csv")
            dump_matrix(report.variances, f"{stem}_rep{report.replication}_variances.csv")
        print(f"💾 Saved prediction matrices next to {output}")

    for report in reports:
        score = report.score.to_dict()
        print(f"   replication {report.replication}: mean NMSPE {_fmt(score['mean_nmspe'])}, "
              f"log mean NMSPE {_fmt(score['log_mean_nmspe'])}, score {_fmt(score['mean_score'])}")
        if report.failed:
            print(f"⚠️  {len(report.failed)} test point(s) failed in replication {report.replication}.")
    print(f"✅ Report written to {path}")
    return 0


def cmd_gen(args) -> int:
    config = ExperimentConfig(simulator=args.sim, n_train=args.n, n_test=args.m, seed=args.seed,
                              length=args.length, method="svdgp")
    config.validate()
    print(f"🚀 Generating {args.sim} data: N={args.n}, M={args.m}, seed={args.seed}...")
    data = prepare_data(config)
    out = Path(args.out)
    save_dataset(data.X, data.Y, out / "train_design.csv", out / "train_response.csv")
    save_dataset(data.X_test, data.Y_test, out / "test_design.csv", out / "test_response.csv")
    print(f"✅ Wrote train and test CSVs to {out}")
    return 0


def cmd_score(args) -> int:
    means = read_matrix(args.pred, allow_nan=True)
    truth = read_matrix(args.truth)
    variances = read_matrix(args.var, allow_nan=True) if args.var else None
    report = score_predictions(truth, means, variances)
    print(json.dumps(report.to_dict(), indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dynemu", description="Emulators for time-series output simulators.")
    parser.add_argument("--verbose", action="store_true", help="Show debug logging.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Run an experiment from a KEY=value config file.")
    run.add_argument("--config", required=True, help="Experiment config file.")
    run.add_argument("--workers", type=int, default=None, help="Parallel workers (overrides the config).")
    run.add_argument("--output", default=None, help="JSON report path.")
    run.set_defaults(func=cmd_run)

    gen = sub.add_parser("gen", help="Generate train/test datasets from a built-in simulator.")
    gen.add_argument("--sim", required=True, choices=sorted(SIMULATORS))
    gen.add_argument("--n", type=int, required=True, help="Training design size.")
    gen.add_argument("--m", type=int, required=True, help="Test design size.")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True, help="Output directory.")
    gen.add_argument("--length", type=int, default=None, help="Time grid length.")
    gen.set_defaults(func=cmd_gen)

    score = sub.add_parser("score", help="Score a prediction CSV against the truth.")
    score.add_argument("--pred", required=True, help="L x M predicted means.")
    score.add_argument("--truth", required=True, help="L x M true responses.")
    score.add_argument("--var", default=None, help="L x M predictive variances.")
    score.set_defaults(func=cmd_score)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    _configure_logging(args.verbose)
    try:
        return args.func(args)
    except KeyboardInterrupt:
        print("\n🛑 Interrupted.")
        return 130
    except FileNotFoundError as e:
        print(f"❌ Error: File not found: {e.filename or e}", file=sys.stderr)
        return 1
    except EmulatorError as e:
        print(f"❌ {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
