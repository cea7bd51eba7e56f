"""
Harness tests: training runs, evaluation, run directories, reports and
the A/B protocol on tiny configurations
"""

import math

import numpy as np
import pandas as pd
import pytest

from cleaner.config import ExperimentConfig
from cleaner.errors import RunValidationError, TrainingAborted
from cleaner.harness import (
    AB_PROTOCOL, DIAGNOSTICS_FILE, METRIC_COLUMNS, Trainer, ab_protocol_config,
    compare_saar_inference, estimate_pass_at_k, evaluate, pass_at_k, report, run_ab, train,
)
from cleaner.policy import load_params
from cleaner.rollout import RolloutLimits
from cleaner.saar import SaarConfig
from cleaner.trajectory import read_trajectory_lines
from cleaner.validate_run import CONFIG_FILE, FINAL_PARAMS_FILE, METRICS_FILE, TIMINGS_FILE


def small_config(**overrides) -> ExperimentConfig:
    base = ExperimentConfig(families=("division",), total_steps=2, rollout_batch=2, group_size=2,
                            mini_batch=2, eval_every=0, eval_tasks=0, workers=1, snapshot_every=0)
    return base.with_overrides(**overrides)


# -- pass@k ----------------------------------------------------------------------

@pytest.mark.parametrize("n, c, k, expected", [
    (16, 8, 4, 1 - 70 / 1820),
    (10, 0, 3, 0.0),
    (10, 8, 3, 1.0),
    (4, 1, 1, 0.25),
    (5, 5, 5, 1.0),
])
def test_pass_at_k(n, c, k, expected):
    assert pass_at_k(n, c, k) == pytest.approx(expected, abs=1e-12)


def test_pass_at_k_rejects_k_above_n():
    with pytest.raises(ValueError):
        pass_at_k(3, 1, 4)


def test_pass_at_k_is_monotone_in_k():
    for c in range(0, 17):
        values = [pass_at_k(16, c, k) for k in range(1, 17)]
        assert all(a <= b + 1e-12 for a, b in zip(values, values[1:]))


def test_estimate_pass_at_k_averages_tasks():
    outcomes = np.array([[True, False, False, False], [True, True, True, True]])
    assert estimate_pass_at_k(outcomes, 1) == pytest.approx((0.25 + 1.0) / 2)
    with pytest.raises(ValueError):
        estimate_pass_at_k(np.zeros((0, 4)), 1)


def test_evaluate_extremes(policy, division_task, always_correct, wrong_answer):
    good = evaluate(always_correct, [division_task], 4, 2, seed=0, policy=policy)
    assert good.pass_at_1 == 1.0 and good.pass_at_k == 1.0
    bad = evaluate(wrong_answer, [division_task], 4, 2, seed=0, policy=policy)
    assert bad.pass_at_1 == 0.0 and bad.pass_at_k == 0.0
    assert good.to_dict()["pass@2"] == 1.0
    with pytest.raises(ValueError):
        evaluate(always_correct, [division_task], 2, 3, seed=0, policy=policy)


def test_saar_at_inference_repairs_what_plain_rollouts_cannot(policy, division_task, repairing):
    limits = RolloutLimits(max_turns=1)
    comparison = compare_saar_inference(repairing, [division_task], 4, 2, 0, policy, limits)
    assert comparison.plain.pass_at_1 == 0.0 and comparison.plain.mean_tool_errors == 1.0
    assert comparison.saar.pass_at_1 == 1.0 and comparison.saar.mean_tool_errors == 0.0
    assert not comparison.plain.saar_active and comparison.saar.saar_active
    frame = comparison.frame()
    assert list(frame["inference"]) == ["plain", "saar"]
    assert (frame["seconds"] >= 0.0).all()
    assert comparison.to_dict()["saar"]["pass@2"] == 1.0


def test_saar_evaluation_ignores_the_mixing_share(policy, division_task, repairing):
    result = evaluate(repairing, [division_task], 2, 1, seed=0, policy=policy,
                      limits=RolloutLimits(max_turns=1), saar=SaarConfig(mix_probability=0.0))
    assert result.pass_at_1 == 1.0


# -- training --------------------------------------------------------------------

def test_zero_step_run(tmp_path, policy):
    result = train(small_config(total_steps=0), run_dir=tmp_path / "run")
    assert result.metrics == []
    header = (tmp_path / "run" / METRICS_FILE).read_text(encoding="utf-8").splitlines()
    assert header == [",".join(METRIC_COLUMNS)]
    final = load_params(tmp_path / "run" / FINAL_PARAMS_FILE)
    assert np.array_equal(final.theta, policy.init_params().theta)
    assert (tmp_path / "run" / CONFIG_FILE).is_file()


def test_saar_run_commits_no_errors_when_every_failure_is_repairable(tmp_path, policy, repairing):
    config = small_config(mode="saar", mix_probability=1.0)
    trainer = Trainer(config, policy, repairing, tmp_path / "saar")
    result = trainer.train()
    frame = result.metrics_frame()
    assert list(frame["step"]) == [1, 2]
    assert (frame["mean_tool_errors_per_traj"] == 0.0).all()
    assert (frame["purified_fraction"] == 1.0).all()
    assert (frame["shallow_replacements"] == 4).all()
    assert (frame["recovery_rate"] == 1.0).all()
    assert math.isnan(frame["eval_success_rate"].iloc[-1])
    lines = read_trajectory_lines(tmp_path / "saar" / "trajectories" / "step_00001.jsonl")
    assert len(lines) == 4
    assert all(t.purification_applied and t.stats.tool_errors == 0 for t in lines)


def test_baseline_run_keeps_the_failures(tmp_path, policy, repairing):
    trainer = Trainer(small_config(mode="baseline"), policy, repairing, tmp_path / "baseline")
    frame = trainer.train().metrics_frame()
    assert (frame["mean_tool_errors_per_traj"] == 1.0).all()
    assert (frame["purified_fraction"] == 0.0).all()
    assert (frame["shallow_replacements"] + frame["deep_replacements"] == 0).all()


def test_training_is_reproducible_across_workers(tmp_path):
    config = small_config(init_scale=1.0, seed=3, total_steps=3, eval_every=1, eval_tasks=2,
                          eval_samples=2, eval_k=1, workers=3)
    train(config, run_dir=tmp_path / "a")
    train(config, run_dir=tmp_path / "b")
    train(config.with_overrides(workers=1), run_dir=tmp_path / "c")
    first = (tmp_path / "a" / METRICS_FILE).read_bytes()
    assert first == (tmp_path / "b" / METRICS_FILE).read_bytes()
    assert first == (tmp_path / "c" / METRICS_FILE).read_bytes()
    assert (tmp_path / "a" / FINAL_PARAMS_FILE).read_bytes() == \
        (tmp_path / "c" / FINAL_PARAMS_FILE).read_bytes()
    assert (tmp_path / "a" / TIMINGS_FILE).is_file()


def test_vacuous_training_aborts_with_diagnostics(tmp_path, policy, wrong_answer):
    config = small_config(mode="baseline", total_steps=10, warmup_steps=0, vacuous_patience=2)
    trainer = Trainer(config, policy, wrong_answer, tmp_path / "vacuous")
    with pytest.raises(TrainingAborted) as excinfo:
        trainer.train()
    assert excinfo.value.diagnostics_path == str(tmp_path / "vacuous" / DIAGNOSTICS_FILE)
    assert (tmp_path / "vacuous" / DIAGNOSTICS_FILE).is_file()
    # rows of completed steps survive the abort
    frame = pd.read_csv(tmp_path / "vacuous" / METRICS_FILE)
    assert list(frame["step"]) == [1]


# -- reports ---------------------------------------------------------------------

def test_report_single_run(tmp_path):
    run_dir = tmp_path / "base"
    train(small_config(mode="baseline", init_scale=1.0), run_dir=run_dir)
    result = report([run_dir])
    assert result.delta is None
    assert [p.name for p in result.csv_paths] == ["report_base.csv"]
    assert "mode=baseline" in result.text()


def test_report_ab_pair(tmp_path):
    base, saar = tmp_path / "baseline-seed0", tmp_path / "saar-seed0"
    train(small_config(mode="baseline", init_scale=1.0), run_dir=base)
    train(small_config(mode="saar", init_scale=1.0), run_dir=saar)
    result = report([base, saar], tmp_path / "out")
    assert list(result.delta["metric"])[0] == "steps_to_90"
    assert (tmp_path / "out" / "ab_delta.csv").is_file()
    assert len(result.csv_paths) == 3


def test_report_on_an_empty_directory_names_the_missing_files(tmp_path):
    with pytest.raises(RunValidationError) as excinfo:
        report([tmp_path])
    assert str(tmp_path / CONFIG_FILE) in excinfo.value.missing
    assert str(tmp_path / METRICS_FILE) in excinfo.value.missing


@pytest.mark.slow
def test_small_ab_protocol(tmp_path):
    config = small_config(init_scale=0.5, total_steps=3)
    result = run_ab(config, seeds=2, root=tmp_path)
    assert list(result.table["seed"]) == [0, 1]
    assert 0 <= result.wins <= result.trials <= 2
    assert 0.0 <= result.p_value <= 1.0
    censored = config.total_steps + 1
    assert (result.table["baseline_steps_to_90"] <= censored).all()
    assert (tmp_path / "ab_summary.json").is_file()
    assert (tmp_path / "baseline-seed1" / METRICS_FILE).is_file()


def test_ab_protocol_config():
    config = ab_protocol_config(seed=4)
    assert config.families == ("division",)
    assert config.total_steps == AB_PROTOCOL["total_steps"]
    assert config.trajectory_every == 0 and config.eval_every == 0
    assert config.seed == 4 and config.group_size == 8


@pytest.mark.slow
def test_ab_protocol_reproduces_the_training_dynamics(tmp_path):
    result = run_ab(ab_protocol_config(), seeds=10, root=tmp_path)
    table = result.table
    assert len(table) == 10
    assert result.error_ratio <= 0.5
    assert table["saar_steps_to_90"].median() < table["baseline_steps_to_90"].median()
    assert result.p_value < 0.05
