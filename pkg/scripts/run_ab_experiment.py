#!/usr/bin/env python3
"""
A/B Experiment Script
Paired baseline/SAAR runs over several seeds, then the report with plots
for the first pair
"""

import sys
import os
from pathlib import Path

sys.path.append(os.path.join(os.path.dirname(__file__), '..'))

from cleaner.common_utils import setup_logging
from cleaner.config import load_config_from_file
from cleaner.harness import ab_protocol_config, report, run_ab


def run_experiment(config_file=None, seeds=10):
    """Run the paired protocol and summarize it"""
    print("⚖️  CLEANER baseline vs SAAR experiment")
    print("=" * 60)

    config = load_config_from_file(config_file) if config_file else ab_protocol_config()
    root = config.run_directory().parent / "ab"
    print(f"📋 Seeds {config.seed}..{config.seed + seeds - 1}, {config.total_steps} steps each")
    print(f"📁 Runs under: {root}")
    print()

    result = run_ab(config, seeds, root)
    print(result.table.to_string(index=False))
    print()
    print(f"📊 SAAR faster on {result.wins}/{result.trials} untied seeds "
          f"(one-sided sign test p = {result.p_value:.4g})")
    print(f"📊 Tool errors ratio (SAAR / baseline): {result.error_ratio:.3f}")

    first = config.seed
    pair = [root / f"baseline-seed{first}", root / f"saar-seed{first}"]
    summary = report(pair, Path(root) / "report", plot=True)
    print()
    print(summary.text())
    if summary.plot_path:
        print(f"📈 Dynamics plot: {summary.plot_path}")
    return result.significant


def main():
    """Main function"""
    config_file = sys.argv[1] if len(sys.argv) > 1 else None
    seeds = int(sys.argv[2]) if len(sys.argv) > 2 else 10
    setup_logging()
    try:
        significant = run_experiment(config_file, seeds)
        print("✅ SAAR significantly faster" if significant else "⚠️  Difference not significant")
        sys.exit(0)
    except KeyboardInterrupt:
        print("\n⏹️  Experiment stopped")
        sys.exit(1)
    except Exception as e:
        print(f"❌ Experiment failed: {str(e)}")
        sys.exit(1)


if __name__ == "__main__":
    main()
