#!/usr/bin/env python3
"""
CLEANER Command-Line Interface
Training, evaluation, offline purification, similarity, reports and the
A/B protocol
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from dotenv import load_dotenv

from .common_utils import save_json, setup_logging
from .config import create_sample_config_file, load_config_from_file
from .errors import CleanerError, UsageError
from .harness import (
    ab_protocol_config, compare_saar_inference, evaluate, report, run_ab, train,
)
from .policy import ToyPolicy, load_params
from .rollout import RolloutLimits
from .saar import OfflineSummary, SaarConfig, purify_offline
from .similarity import ratio
from .tasks import TASK_FAMILIES, TaskGenerator
from .trajectory import iter_trajectory_lines, write_trajectory_lines
from .validate_run import RunValidator

logger = logging.getLogger(__name__)


def emit_error(kind: str, message: str):
    """The one machine-parsable failure line"""
    print(f"error={kind} message={json.dumps(message)}", file=sys.stderr)


def train_command(args):
    """Handle the train command"""
    config = load_config_from_file(args.config, {
        "mode": args.mode, "seed": args.seed, "total_steps": args.steps,
        "run_name": args.run_name, "workers": args.workers,
    })
    print(f"🚀 Training {config.mode} run (seed {config.seed}, {config.total_steps} steps)...")
    result = train(config)
    print(f"✅ Training finished: {result.run_dir}")
    if result.metrics:
        last = result.metrics[-1]
        print(f"📊 Final step {last.step}: train success {last.train_success_rate:.3f}, "
              f"tool errors/traj {last.mean_tool_errors_per_traj:.3f}")
    return True


def eval_command(args):
    """Handle the eval command"""
    params = load_params(args.params)
    tasks = TaskGenerator.load_task_set(args.tasks)
    samples = args.samples if args.samples is not None else max(args.k, 16)
    limits = RolloutLimits(args.max_turns)
    if args.saar:
        print(f"🔍 Evaluating {len(tasks)} tasks with {samples} samples each, "
              f"SAAR off and on...")
        comparison = compare_saar_inference(params, tasks, samples, args.k, args.seed,
                                            ToyPolicy(), limits,
                                            SaarConfig(args.retry_limit, args.gamma))
        print(comparison.frame().to_string(index=False))
        if args.out:
            save_json(comparison.to_dict(), args.out)
            print(f"📁 Saved to: {args.out}")
        return True
    print(f"🔍 Evaluating {len(tasks)} tasks with {samples} samples each...")
    result = evaluate(params, tasks, samples, args.k, args.seed, ToyPolicy(), limits)
    print(f"📊 pass@1 = {result.pass_at_1:.4f}")
    print(f"📊 pass@{result.k} = {result.pass_at_k:.4f}")
    if args.out:
        save_json(result.to_dict(), args.out)
        print(f"📁 Saved to: {args.out}")
    return True


def purify_command(args):
    """Handle the purify command"""
    summary = OfflineSummary()

    def purified():
        for raw in iter_trajectory_lines(args.input):
            cleaned = purify_offline(raw, args.gamma)
            summary.add(raw, cleaned)
            yield cleaned

    written = write_trajectory_lines(args.output, purified())
    print(f"✅ Purified {written} trajectories -> {args.output}")
    print(f"📊 runs collapsed: {summary.runs_collapsed} "
          f"(shallow {summary.shallow}, deep {summary.deep})")
    print(f"📊 tool errors: {summary.errors_before} -> {summary.errors_after} "
          f"(reduction {summary.error_reduction})")
    return True


def simdiff_command(args):
    """Handle the simdiff command"""
    if args.strings:
        a, b = args.a, args.b
    else:
        a = Path(args.a).read_text(encoding="utf-8")
        b = Path(args.b).read_text(encoding="utf-8")
    print(f"{ratio(a, b):.12f}")
    return True


def report_command(args):
    """Handle the report command"""
    result = report(args.run, args.out, plot=args.plot)
    print(result.text())
    for path in result.csv_paths:
        print(f"📁 {path}")
    if result.plot_path:
        print(f"📈 {result.plot_path}")
    return True


def tasks_command(args):
    """Handle the tasks command"""
    families = [f.strip() for f in args.families.split(",") if f.strip()]
    print(f"🎲 Generating {args.count} tasks ({', '.join(families)})...")
    tasks = TaskGenerator.generate_tasks(families, args.count, args.seed)
    TaskGenerator.save_task_set(tasks, args.out)
    print(f"✅ Generated {len(tasks)} tasks!")
    print(f"📁 Saved to: {args.out}")
    return True


def ab_command(args):
    """Handle the ab command"""
    overrides = {
        "similarity_threshold": args.gamma, "retry_limit": args.retry_limit,
        "mix_probability": args.mix, "total_steps": args.steps, "seed": args.seed,
        "workers": args.workers,
    }
    if args.protocol and args.config:
        raise UsageError("ab: --protocol and --config are mutually exclusive")
    if args.protocol:
        config = ab_protocol_config(**overrides)
    else:
        config = load_config_from_file(args.config, overrides)
    print(f"⚖️  Running {args.seeds} paired baseline/SAAR seeds...")
    result = run_ab(config, args.seeds, args.root)
    print(result.table.to_string(index=False))
    print(f"📊 SAAR faster on {result.wins}/{result.trials} untied seeds, "
          f"one-sided sign test p = {result.p_value:.4g}")
    print(f"📊 tool errors ratio (SAAR / baseline, step >= 20): {result.error_ratio:.3f}")
    status = "✅" if result.significant else "⚠️ "
    print(f"{status} summary: {result.summary_path}")
    return True


def config_command(args):
    """Handle the config command"""
    create_sample_config_file(args.out)
    return True


def validate_command(args):
    """Handle the validate command"""
    print(f"🔍 Validating run directory {args.run}...")
    validator = RunValidator(args.run)
    if validator.run_all_validations():
        print("✅ All validation checks passed!")
        return True
    failed = [r.name for r in validator.results if not r.passed]
    print(f"❌ {len(failed)} validation check(s) failed!")
    emit_error("RunValidationError", f"failed checks: {', '.join(failed)}")
    return False


class CleanerArgumentParser(argparse.ArgumentParser):
    """Argument parser that raises UsageError instead of exiting"""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = CleanerArgumentParser(
        prog="cleaner",
        description="CLEANER: similarity-aware trajectory purification for agentic RL",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  %(prog)s config --out config/experiment.env
  %(prog)s train --config config/experiment.env --mode saar --seed 3
  %(prog)s tasks --families division --count 64 --seed 1 --out data/tasks.json
  %(prog)s eval --params runs/saar-seed3/params/final.txt --tasks data/tasks.json --k 4
  %(prog)s purify --gamma 0.5 --in raw.jsonl --out purified.jsonl
  %(prog)s simdiff a.prog b.prog
  %(prog)s simdiff --strings "x = 1; y * 2" "x = 1; x * 2"
  %(prog)s report --run runs/baseline-seed3 --run runs/saar-seed3 --plot
  %(prog)s ab --config config/experiment.env --seeds 10
        """
    )
    subparsers = parser.add_subparsers(dest="command", help="Available commands")

    train_parser = subparsers.add_parser("train", help="Run one training run")
    train_parser.add_argument("--config", help="Flat key = value config file")
    train_parser.add_argument("--mode", choices=["baseline", "saar"])
    train_parser.add_argument("--seed", type=int)
    train_parser.add_argument("--steps", type=int, help="Override total_steps")
    train_parser.add_argument("--run-name")
    train_parser.add_argument("--workers", type=int)
    train_parser.set_defaults(func=train_command)

    eval_parser = subparsers.add_parser("eval", help="pass@1 / pass@k of saved parameters")
    eval_parser.add_argument("--params", required=True)
    eval_parser.add_argument("--tasks", required=True, help="Task set JSON")
    eval_parser.add_argument("--k", type=int, required=True)
    eval_parser.add_argument("--samples", type=int, help="Samples per task (default max(k, 16))")
    eval_parser.add_argument("--seed", type=int, default=0)
    eval_parser.add_argument("--max-turns", type=int, default=8)
    eval_parser.add_argument("--out", help="Write the estimates as JSON")
    eval_parser.add_argument("--saar", action="store_true",
                             help="Also evaluate with SAAR active at inference and compare")
    eval_parser.add_argument("--gamma", type=float, default=0.5, help="SAAR similarity threshold")
    eval_parser.add_argument("--retry-limit", type=int, default=3, help="SAAR lookahead attempts")
    eval_parser.set_defaults(func=eval_command)

    purify_parser = subparsers.add_parser("purify", help="Offline purification of trajectory lines")
    purify_parser.add_argument("--gamma", type=float, default=0.5)
    purify_parser.add_argument("--in", dest="input", required=True)
    purify_parser.add_argument("--out", dest="output", required=True)
    purify_parser.set_defaults(func=purify_command)

    simdiff_parser = subparsers.add_parser("simdiff", help="Gestalt similarity of two files")
    simdiff_parser.add_argument("a", help="First file")
    simdiff_parser.add_argument("b", help="Second file")
    simdiff_parser.add_argument("--strings", action="store_true",
                                help="Compare the arguments themselves instead of file contents")
    simdiff_parser.set_defaults(func=simdiff_command)

    report_parser = subparsers.add_parser("report", help="Summarize one run or an A/B pair")
    report_parser.add_argument("--run", action="append", required=True,
                               help="Run directory (repeat for an A/B pair)")
    report_parser.add_argument("--out", help="Output directory (default: first run)")
    report_parser.add_argument("--plot", action="store_true", help="Also render a PNG")
    report_parser.set_defaults(func=report_command)

    tasks_parser = subparsers.add_parser("tasks", help="Generate a task set")
    tasks_parser.add_argument("--families", default=",".join(TASK_FAMILIES))
    tasks_parser.add_argument("--count", type=int, default=64)
    tasks_parser.add_argument("--seed", type=int, default=0)
    tasks_parser.add_argument("--out", default="data/tasks.json")
    tasks_parser.set_defaults(func=tasks_command)

    ab_parser = subparsers.add_parser("ab", help="Paired baseline vs SAAR runs with a sign test")
    ab_parser.add_argument("--config")
    ab_parser.add_argument("--protocol", action="store_true",
                           help="Desk-scale preset: division family, 150 steps, no dumps")
    ab_parser.add_argument("--seeds", type=int, default=10)
    ab_parser.add_argument("--seed", type=int, help="First seed")
    ab_parser.add_argument("--steps", type=int)
    ab_parser.add_argument("--gamma", type=float)
    ab_parser.add_argument("--retry-limit", type=int)
    ab_parser.add_argument("--mix", type=float, help="Override mix_probability")
    ab_parser.add_argument("--workers", type=int)
    ab_parser.add_argument("--root", help="Directory for the paired runs")
    ab_parser.set_defaults(func=ab_command)

    config_parser = subparsers.add_parser("config", help="Write a sample config file")
    config_parser.add_argument("--out", default="config/experiment.env")
    config_parser.set_defaults(func=config_command)

    validate_parser = subparsers.add_parser("validate", help="Check a run directory")
    validate_parser.add_argument("--run", required=True)
    validate_parser.set_defaults(func=validate_command)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Main CLI function"""
    load_dotenv()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        emit_error(type(e).__name__, str(e))
        return 1

    if not args.command:
        parser.print_help()
        return 1

    setup_logging()
    try:
        success = args.func(args)
        return 0 if success else 1
    except KeyboardInterrupt:
        print("\n⚠️  Operation cancelled by user")
        emit_error("KeyboardInterrupt", "operation cancelled by user")
        return 1
    except (CleanerError, OSError, ValueError, KeyError) as e:
        print(f"❌ {args.command} failed: {e}")
        emit_error(type(e).__name__, str(e))
        return 1
    except Exception as e:
        logger.debug("Unexpected failure in %s", args.command, exc_info=True)
        print(f"❌ {args.command} failed unexpectedly: {e}")
        emit_error(type(e).__name__, str(e))
        return 1


if __name__ == "__main__":
    sys.exit(main())
