"""
SAAR tests: lookahead correction, adaptive replacement, online and offline
purification, log-prob recomputation
"""

import numpy as np
import pytest
from scipy.special import expit

from cleaner.errors import ContractViolation, PurificationError
from cleaner.grpo import importance_ratio
from cleaner.minilang import ExecLimits
from cleaner.policy import Category, Mode, Stop
from cleaner.rollout import RolloutLimits, episode_rng, generate_turn, run_episode
from cleaner.saar import (
    Correction, CorrectionOutcome, CorrectionStatus, OfflineSummary, SaarConfig, adaptive_replace,
    extend_context, lookahead_correct, purify_offline, purify_online, rebase_correction,
    recompute_logprobs,
)
from cleaner.similarity import ratio
from cleaner.tasks import TaskGenerator
from cleaner.templates import Edit
from cleaner.trajectory import (
    DecisionRecord, ErrorKind, History, Observation, Provenance, Trajectory, Turn, concat,
    count_noisy_success_runs, serialize,
)

from conftest import FAULTY_DIV, STEPWISE_DIV, forced_params, repair_on_attempt

ALWAYS = SaarConfig(mix_probability=1.0)
NEVER = SaarConfig(mix_probability=0.0)


def make_turn(code: str, ok: bool, reasoning: str = "") -> Turn:
    observation = (Observation.success(1) if ok
                   else Observation.failure(ErrorKind.PARSE, f"cannot parse {code}"))
    return Turn(reasoning or f"reasoning {code}", code, observation,
                (DecisionRecord(Category.TEMPLATE, 0, -1.0), DecisionRecord(Category.STOP, 1, -0.5)))


def first_failure(policy, task, params):
    return generate_turn(History.empty(), task, params, episode_rng(0), policy)


def recovered(code: str, reasoning: str = "fresh reasoning") -> CorrectionOutcome:
    decisions = (DecisionRecord(Category.TEMPLATE, 1, -0.7), DecisionRecord(Category.STOP, 1, -0.1))
    return CorrectionOutcome(CorrectionStatus.RECOVERED, 1,
                             Correction(reasoning, code, Observation.success(1), decisions, -0.8))


# -- configuration -------------------------------------------------------------

def test_config_defaults_and_validation():
    config = SaarConfig()
    assert (config.retry_limit, config.similarity_threshold, config.mix_probability) == (3, 0.5, 0.7)
    for bad in ({"retry_limit": 0}, {"similarity_threshold": 1.5}, {"mix_probability": -0.1}):
        with pytest.raises(ContractViolation):
            SaarConfig(**bad)


def test_outcome_invariants():
    with pytest.raises(ContractViolation):
        CorrectionOutcome(CorrectionStatus.RECOVERED, 1)
    with pytest.raises(ContractViolation):
        CorrectionOutcome(CorrectionStatus.EXHAUSTED, 3, recovered("1").correction)


# -- lookahead correction ------------------------------------------------------

def test_extend_context_after_parse_failure(policy, division_task):
    frozen = History.empty()
    context = extend_context(frozen, make_turn("((", False), division_task, policy)
    assert context.features[policy.layout.error_count] == 1
    assert context.features[policy.layout.error_bit(ErrorKind.PARSE)] == 1
    assert len(frozen) == 0
    assert not np.any(policy.featurize(frozen, division_task)[policy.layout.last_error])


def test_double_extension(policy, division_task):
    once = extend_context(History.empty(), make_turn("((", False), division_task, policy)
    twice = extend_context(once.history, make_turn("1 +", False), division_task, policy)
    assert twice.features[policy.layout.error_count] == 2
    assert len(once.history) == 1


def test_extend_context_rejects_success(policy, division_task):
    with pytest.raises(ContractViolation):
        extend_context(History.empty(), make_turn("1", True), division_task, policy)


@pytest.mark.parametrize("attempt", [1, 2, 3])
def test_lookahead_recovers_on_the_expected_attempt(policy, division_task, attempt):
    params = repair_on_attempt(policy, attempt)
    failed = first_failure(policy, division_task, params)
    assert failed.observation.error_kind is ErrorKind.DIVISION_BY_ZERO
    outcome = lookahead_correct(History.empty(), failed, division_task, params, policy,
                                ExecLimits(), SaarConfig(), episode_rng(1))
    assert outcome.status is CorrectionStatus.RECOVERED
    assert outcome.attempts_used == attempt
    assert outcome.correction.observation.value == division_task.target
    assert outcome.correction.lookahead_logprob == pytest.approx(
        sum(d.behavior_logprob for d in outcome.correction.decisions))


def test_lookahead_exhausts(policy, division_task, never_repairing):
    failed = first_failure(policy, division_task, never_repairing)
    outcome = lookahead_correct(History.empty(), failed, division_task, never_repairing, policy,
                                ExecLimits(), SaarConfig(retry_limit=3), episode_rng(1))
    assert outcome.status is CorrectionStatus.EXHAUSTED
    assert outcome.attempts_used == 3
    assert outcome.correction is None


def test_lookahead_beyond_the_retry_limit_is_exhausted(policy, division_task):
    params = repair_on_attempt(policy, 3)
    failed = first_failure(policy, division_task, params)
    outcome = lookahead_correct(History.empty(), failed, division_task, params, policy,
                                ExecLimits(), SaarConfig(retry_limit=2), episode_rng(1))
    assert outcome.status is CorrectionStatus.EXHAUSTED
    assert outcome.attempts_used == 2


# -- adaptive replacement ------------------------------------------------------

def test_similar_fix_is_shallow():
    failed = make_turn("d = 12 - 12; 84 / d", False, "original reasoning")
    turn = adaptive_replace(failed, recovered("d = 12 - 5; 84 / d"), 0.5)
    assert turn.provenance is Provenance.PURIFIED_SHALLOW
    assert turn.reasoning == "original reasoning"
    assert turn.code == "d = 12 - 5; 84 / d"
    assert turn.observation.ok


def test_divergent_fix_is_deep():
    failed = make_turn("d = 12 - 12; 84 / d", False, "original reasoning")
    outcome = recovered("84 / (12 - 5)", "start over")
    turn = adaptive_replace(failed, outcome, 0.5)
    assert turn.provenance is Provenance.PURIFIED_DEEP
    assert turn.reasoning == "start over"
    assert turn.decisions == outcome.correction.decisions


def test_threshold_boundary_is_shallow():
    failed = make_turn("1/0", False)
    gamma = ratio("1/0", "1/2")
    assert adaptive_replace(failed, recovered("1/2"), gamma).provenance is Provenance.PURIFIED_SHALLOW


def test_exhausted_outcome_is_rejected():
    with pytest.raises(ContractViolation):
        adaptive_replace(make_turn("1/0", False),
                         CorrectionOutcome(CorrectionStatus.EXHAUSTED, 3), 0.5)


def test_threshold_dichotomy_fuzz():
    rng = np.random.default_rng(17)
    alphabet = "xyzd0123456789 =;+-*/%()"
    gammas = (0.0, 0.25, 0.5, 0.75, 1.0)
    for i in range(10_000):
        failed_code = "".join(rng.choice(list(alphabet), size=int(rng.integers(0, 30))))
        if i % 3:
            fixed_code = failed_code[: int(rng.integers(0, len(failed_code) + 1))] + "1"
        else:
            fixed_code = "".join(rng.choice(list(alphabet), size=int(rng.integers(1, 30))))
        gamma = gammas[i % len(gammas)]
        turn = adaptive_replace(make_turn(failed_code, False), recovered(fixed_code), gamma)
        shallow = ratio(failed_code, fixed_code) >= gamma
        expected = Provenance.PURIFIED_SHALLOW if shallow else Provenance.PURIFIED_DEEP
        assert turn.provenance is expected


# -- online purification -------------------------------------------------------

def test_online_shallow_graft(policy, division_task, repairing):
    traj = purify_online(division_task, repairing, RolloutLimits(), ALWAYS, episode_rng(0), policy)
    assert traj.purification_applied
    assert len(traj.turns) == 1
    turn = traj.turns[0]
    assert turn.provenance is Provenance.PURIFIED_SHALLOW
    assert "faulty" in turn.reasoning
    assert turn.code == "d = 12 - 5; 84 / d"
    assert traj.stats.tool_errors == 0


def test_online_deep_replacement(policy, division_task, fresh_rewrite):
    traj = purify_online(division_task, fresh_rewrite, RolloutLimits(), ALWAYS, episode_rng(0),
                         policy)
    turn = traj.turns[0]
    assert turn.provenance is Provenance.PURIFIED_DEEP
    assert turn.code == "84 / (12 - 5)"
    assert "compact" in turn.reasoning
    assert traj.final_answer == 12


def test_online_graft_is_recorded_as_a_fresh_write(policy, division_task, repairing):
    traj = purify_online(division_task, repairing, RolloutLimits(), ALWAYS, episode_rng(0), policy)
    decisions = traj.turns[0].decisions
    assert [d.category_id for d in decisions] == [Category.TEMPLATE, Category.STOP]
    assert decisions[0].choice == STEPWISE_DIV
    assert decisions[1].choice == Stop.STOP


def test_rebase_after_a_committed_failure_starts_with_a_fresh_mode(policy, division_task,
                                                                   repairing):
    failed = first_failure(policy, division_task, repairing)
    history = History.of([failed])
    edit = (DecisionRecord(Category.MODE, Mode.LOCAL_EDIT, -0.1),
            DecisionRecord(Category.EDIT, Edit.FIX_DIVISOR, -0.2),
            DecisionRecord(Category.STOP, Stop.CONTINUE, -0.3))
    turn = Turn("fix", "d = 12 - 5; 84 / d", Observation.success(12), edit,
                Provenance.PURIFIED_SHALLOW)
    rebased = rebase_correction(turn, history, division_task, repairing, policy)
    assert [(d.category_id, d.choice) for d in rebased.decisions] == [
        (Category.MODE, Mode.FRESH), (Category.TEMPLATE, STEPWISE_DIV),
        (Category.STOP, Stop.CONTINUE)]
    features = policy.featurize(history, division_task)
    assert [d.behavior_logprob for d in rebased.decisions] == \
        policy.decision_logprobs(features, rebased.decisions, repairing)
    assert (rebased.code, rebased.reasoning, rebased.provenance) == \
        (turn.code, turn.reasoning, turn.provenance)


def test_rebase_keeps_code_outside_the_library(policy, division_task, zero_params):
    turn = make_turn("7 + 5", True)
    assert rebase_correction(turn, History.empty(), division_task, zero_params, policy) is turn


def test_rebased_logprobs_are_provisional_until_recomputed(policy, division_task):
    params = policy.init_params(scale=1.0, seed=17)
    failed = first_failure(policy, division_task, repair_on_attempt(policy, 1))
    lookahead = extend_context(History.empty(), failed, division_task, policy).features
    turn = Turn("fix", "d = 12 - 5; 84 / d", Observation.success(12),
                (DecisionRecord(Category.STOP, Stop.STOP, -0.1),), Provenance.PURIFIED_SHALLOW)
    rebased = rebase_correction(turn, History.empty(), division_task, params, policy, lookahead)
    assert [d.behavior_logprob for d in rebased.decisions] == \
        policy.decision_logprobs(lookahead, rebased.decisions, params)

    stored = Trajectory.build(division_task.task_id, [rebased], purification_applied=True)
    recomputed = recompute_logprobs(stored, division_task, params, policy)
    clean = policy.featurize(History.empty(), division_task)
    assert [d.behavior_logprob for d in recomputed.turns[0].decisions] == \
        policy.decision_logprobs(clean, rebased.decisions, params)
    assert recomputed.decision_logprobs() != pytest.approx(stored.decision_logprobs())


@pytest.mark.parametrize("attempt", [1, 2, 3])
def test_purity_when_recovery_is_guaranteed(policy, division_task, attempt):
    params = repair_on_attempt(policy, attempt)
    for j in range(1000 if attempt == 1 else 100):
        traj = purify_online(division_task, params, RolloutLimits(), ALWAYS, episode_rng(5, j),
                             policy)
        assert traj.stats.tool_errors == 0
        assert traj.final_answer == division_task.target


def test_mixing_off_is_byte_identical_to_baseline(policy):
    tasks = TaskGenerator.generate_tasks(["division", "two_step"], 10, 3)
    params = policy.init_params(scale=1.0, seed=3)
    for t, task in enumerate(tasks):
        for j in range(10):
            online = purify_online(task, params, RolloutLimits(), NEVER, episode_rng(3, t, j), policy)
            baseline = run_episode(task, params, RolloutLimits(), episode_rng(3, t, j), policy)
            assert serialize(online) == serialize(baseline)


def test_exhausted_commits_the_original_failure(policy, division_task, never_repairing):
    limits = RolloutLimits(3)
    online = purify_online(division_task, never_repairing, limits, ALWAYS, episode_rng(2), policy)
    baseline = run_episode(division_task, never_repairing, limits, episode_rng(2), policy)
    assert online.purification_applied
    assert online.turns == baseline.turns
    assert all(t.provenance is Provenance.NATURAL for t in online.turns)


def test_purification_keeps_the_answer(policy, division_task, repairing):
    online = purify_online(division_task, repairing, RolloutLimits(), ALWAYS, episode_rng(4), policy)
    baseline = run_episode(division_task, repairing, RolloutLimits(), episode_rng(4), policy)
    assert online.final_answer == baseline.final_answer == division_task.target
    assert baseline.stats.tool_errors == 1 and online.stats.tool_errors == 0


@pytest.mark.slow
def test_mixing_calibration(policy, division_task, always_correct):
    config = SaarConfig(mix_probability=0.7)
    episodes = 10_000
    active = sum(
        purify_online(division_task, always_correct, RolloutLimits(), config,
                      episode_rng(8, j), policy).purification_applied
        for j in range(episodes))
    assert 0.67 <= active / episodes <= 0.73


# -- offline purification ------------------------------------------------------

def test_offline_all_success_is_unchanged():
    raw = Trajectory.build("t", [make_turn("1", True), make_turn("2", True)], reward=1.0)
    assert purify_offline(raw, 0.5) == raw


def test_offline_collapses_to_shallow():
    raw = Trajectory.build("t", [make_turn("1/0", False, "first"), make_turn("1/2", True, "second")],
                           reward=-1.0)
    purified = purify_offline(raw, 0.5)
    assert len(purified.turns) == 1
    assert purified.turns[0].provenance is Provenance.PURIFIED_SHALLOW
    assert purified.turns[0].reasoning == "first"
    assert purified.turns[0].code == "1/2"
    assert purified.reward == raw.reward
    assert purified.purification_applied


def test_offline_compares_against_the_first_failure():
    turns = [make_turn("1/0", False, "first"), make_turn("zzzzzzzz", False, "second"),
             make_turn("1/2", True, "fix")]
    purified = purify_offline(Trajectory.build("t", turns), 0.5)
    assert [t.provenance for t in purified.turns] == [Provenance.PURIFIED_SHALLOW]
    assert purified.turns[0].reasoning == "first"


def test_offline_deep_keeps_the_success_reasoning():
    turns = [make_turn("x = 1; y", False, "first"), make_turn("42", True, "fix")]
    purified = purify_offline(Trajectory.build("t", turns), 0.5)
    assert purified.turns[0].provenance is Provenance.PURIFIED_DEEP
    assert purified.turns[0].reasoning == "fix"


def test_offline_keeps_unrecovered_failures():
    raw = Trajectory.build("t", [make_turn("1/0", False), make_turn("((", False)])
    assert purify_offline(raw, 0.5) == raw


def test_offline_rejects_purified_input():
    purified = purify_offline(
        Trajectory.build("t", [make_turn("1/0", False), make_turn("1/2", True)]), 0.5)
    with pytest.raises(PurificationError):
        purify_offline(purified, 0.5)


def brute_force_counts(raw: Trajectory, gamma: float):
    shallow = deep = 0
    turns = raw.turns
    i = 0
    while i < len(turns):
        if not turns[i].failed:
            i += 1
            continue
        j = i
        while j < len(turns) and turns[j].failed:
            j += 1
        if j < len(turns):
            if ratio(turns[i].code, turns[j].code) >= gamma:
                shallow += 1
            else:
                deep += 1
        i = j
    return shallow, deep


def test_offline_corpus(policy):
    tasks = TaskGenerator.generate_tasks(["division", "two_step", "arithmetic"], 12, 21)
    params = policy.init_params(scale=1.0, seed=21)
    corpus = [run_episode(task, params, RolloutLimits(), episode_rng(21, t, j), policy)
              .with_reward(1.0 if j % 2 else -1.0)
              for t, task in enumerate(tasks) for j in range(8)]
    assert any(count_noisy_success_runs(t.turns) for t in corpus)

    summary = OfflineSummary()
    expected_shallow = expected_deep = 0
    for raw in corpus:
        purified = purify_offline(raw, 0.5)
        summary.add(raw, purified)
        shallow, deep = brute_force_counts(raw, 0.5)
        expected_shallow += shallow
        expected_deep += deep
        assert count_noisy_success_runs(purified.turns) == 0
        assert purified.reward == raw.reward
        assert purified.final_answer == raw.final_answer
        if purified.purification_applied:
            with pytest.raises(PurificationError):
                purify_offline(purified, 0.5)
    assert (summary.shallow, summary.deep) == (expected_shallow, expected_deep)
    assert summary.error_reduction > 0


# -- recomputation -------------------------------------------------------------

def test_recompute_without_purified_turns_is_identity(policy, division_task, repairing):
    traj = run_episode(division_task, repairing, RolloutLimits(), episode_rng(0), policy)
    assert recompute_logprobs(traj, division_task, repairing, policy) is traj


def test_recompute_at_zero_keeps_lookahead_values(policy, division_task, zero_params):
    for j in range(200):
        traj = purify_online(division_task, zero_params, RolloutLimits(), ALWAYS,
                             episode_rng(6, j), policy)
        if any(t.provenance.is_purified for t in traj.turns):
            break
    else:
        pytest.fail("no purified trajectory in 200 uniform episodes")
    recomputed = recompute_logprobs(traj, division_task, zero_params, policy)
    assert recomputed.decision_logprobs() == pytest.approx(traj.decision_logprobs(), abs=1e-12)


def test_recompute_matches_committed_prefixes(policy):
    tasks = TaskGenerator.generate_tasks(["division", "two_step"], 6, 13)
    params = policy.init_params(scale=1.5, seed=13)
    seen_purified = False
    for t, task in enumerate(tasks):
        for j in range(8):
            traj = purify_online(task, params, RolloutLimits(), ALWAYS, episode_rng(13, t, j), policy)
            recomputed = recompute_logprobs(traj, task, params, policy)
            first = next((i for i, turn in enumerate(traj.turns) if turn.provenance.is_purified),
                         len(traj.turns))
            seen_purified = seen_purified or first < len(traj.turns)
            # the prefix before the first purified turn is reused as is
            assert all(a is b for a, b in zip(recomputed.turns[:first], traj.turns[:first]))
            history = History.empty()
            for turn in recomputed.turns:
                features = policy.featurize(history, task)
                assert [d.behavior_logprob for d in turn.decisions] == \
                    policy.decision_logprobs(features, turn.decisions, params)
                history = concat(history, turn)
    assert seen_purified


def test_distribution_shift_witness(policy, division_task):
    layout = policy.layout
    weight = 2.0
    params = forced_params(policy, [
        (Category.TEMPLATE, FAULTY_DIV, layout.bias, 50.0),
        (Category.MODE, Mode.LOCAL_EDIT, layout.bias, 50.0),
        (Category.EDIT, Edit.FIX_DIVISOR, layout.bias, 50.0),
        (Category.STOP, Stop.STOP, layout.error_count, weight),
    ])
    failed = first_failure(policy, division_task, params)
    outcome = lookahead_correct(History.empty(), failed, division_task, params, policy,
                                ExecLimits(), SaarConfig(), episode_rng(3))
    turn = adaptive_replace(failed, outcome, 0.5)
    assert turn.provenance is Provenance.PURIFIED_SHALLOW
    stored = Trajectory.build(division_task.task_id, [turn], purification_applied=True)

    recomputed = recompute_logprobs(stored, division_task, params, policy)
    stop_choice = next(d.choice for d in turn.decisions if d.category_id == Category.STOP)
    # lookahead saw one failure, the purified prefix sees none
    p_stop_lookahead = expit(weight)
    lookahead_stop = np.log(p_stop_lookahead if stop_choice == Stop.STOP else 1 - p_stop_lookahead)
    shift = np.log(0.5) - lookahead_stop

    new_total = sum(d.behavior_logprob for d in recomputed.turns[0].decisions)
    assert new_total != pytest.approx(outcome.correction.lookahead_logprob)
    assert new_total - outcome.correction.lookahead_logprob == pytest.approx(shift, abs=1e-9)

    # the ratio is taken against the recomputed values
    assert importance_ratio(recomputed, recomputed.decision_logprobs(), params, policy,
                            division_task) == 1.0
    assert importance_ratio(recomputed, stored.decision_logprobs(), params, policy,
                            division_task) == pytest.approx(np.exp(shift), rel=1e-9)
