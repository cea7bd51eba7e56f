"""
Similarity-Aware Adaptive Rollback
A failed turn is deferred while the policy looks ahead under the
error-extended context and retries up to K times without committing any
attempt. A successful correction is then grafted back into the committed
history: a near-identical fix keeps the original reasoning (shallow), a
divergent one replaces the whole turn (deep). Also hosts curriculum
mixing, offline purification of recorded trajectories and log-prob
recomputation under the purified context.
"""

import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np

from .errors import ContractViolation, PurificationError
from .minilang import ExecLimits, run
from .policy import ContextFeatures, PolicyParams, Stop, ToyPolicy
from .rollout import RolloutLimits, episode_finished, generate_turn
from .similarity import ratio
from .templates import identify_template
from .trajectory import (
    DecisionRecord, History, Observation, Provenance, Task, Trajectory, Turn, concat,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SaarConfig:
    retry_limit: int = 3
    similarity_threshold: float = 0.5
    mix_probability: float = 0.7

    def __post_init__(self):
        if self.retry_limit < 1:
            raise ContractViolation("retry_limit K must be at least 1")
        if not 0.0 <= self.similarity_threshold <= 1.0:
            raise ContractViolation("similarity_threshold must lie in [0, 1]")
        if not 0.0 <= self.mix_probability <= 1.0:
            raise ContractViolation("mix_probability must lie in [0, 1]")


class CorrectionStatus(str, Enum):
    RECOVERED = "Recovered"
    EXHAUSTED = "Exhausted"


@dataclass(frozen=True)
class Correction:
    reasoning: str
    code: str
    observation: Observation
    decisions: Tuple[DecisionRecord, ...]
    lookahead_logprob: float
    # the lookahead context the correction was sampled under
    features: Optional[ContextFeatures] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class CorrectionOutcome:
    status: CorrectionStatus
    attempts_used: int
    correction: Optional[Correction] = None

    def __post_init__(self):
        if self.status is CorrectionStatus.RECOVERED:
            if self.correction is None or not self.correction.observation.ok:
                raise ContractViolation("Recovered requires a successful correction")
        elif self.correction is not None:
            raise ContractViolation("Exhausted carries no correction")


@dataclass(frozen=True)
class LookaheadContext:
    """The history plus the failed turn; never committed to the trajectory"""
    history: History
    features: ContextFeatures


def extend_context(history: History, failed_turn: Turn, task: Task,
                   policy: ToyPolicy) -> LookaheadContext:
    if not failed_turn.failed:
        raise ContractViolation("extend_context needs a failed turn")
    extended = concat(history, failed_turn)
    return LookaheadContext(extended, policy.featurize(extended, task))


def lookahead_correct(history: History, failed_turn: Turn, task: Task, params: PolicyParams,
                      policy: ToyPolicy, exec_limits: ExecLimits, config: SaarConfig,
                      rng: np.random.Generator) -> CorrectionOutcome:
    """Up to K self-correction attempts under the extended context"""
    context = extend_context(history, failed_turn, task, policy)
    for attempt in range(1, config.retry_limit + 1):
        plan = policy.sample_action(context.features, params, rng, task)
        observation = run(plan.code, exec_limits)
        if observation.ok:
            logger.debug("task %s: recovered on attempt %d with %r", task.task_id, attempt, plan.code)
            return CorrectionOutcome(
                CorrectionStatus.RECOVERED,
                attempt,
                Correction(plan.reasoning, plan.code, observation, plan.decisions, plan.logprob,
                           context.features),
            )
        # the failed attempt stays visible to the next one, but only inside the lookahead
        attempt_turn = Turn(plan.reasoning, plan.code, observation, plan.decisions)
        context = extend_context(context.history, attempt_turn, task, policy)
    logger.debug("task %s: lookahead exhausted after %d attempts", task.task_id, config.retry_limit)
    return CorrectionOutcome(CorrectionStatus.EXHAUSTED, config.retry_limit)


def adaptive_replace(failed_turn: Turn, outcome: CorrectionOutcome, gamma: float) -> Turn:
    """Shallow graft when ratio(failed code, corrected code) >= γ, deep replacement otherwise"""
    if outcome.status is not CorrectionStatus.RECOVERED:
        raise ContractViolation("adaptive_replace needs a Recovered correction")
    correction = outcome.correction
    if ratio(failed_turn.code, correction.code) >= gamma:
        reasoning, provenance = failed_turn.reasoning, Provenance.PURIFIED_SHALLOW
    else:
        reasoning, provenance = correction.reasoning, Provenance.PURIFIED_DEEP
    return Turn(reasoning, correction.code, correction.observation, correction.decisions, provenance)


def rebase_correction(turn: Turn, history: History, task: Task, params: PolicyParams,
                      policy: ToyPolicy, lookahead_features: Optional[ContextFeatures] = None) -> Turn:
    """
    Record a grafted correction as the decisions that write its code from
    the committed prefix (a fresh template plus the correction's stop
    choice).

    Log-probs stay provisional, scored under the lookahead context, until
    recompute_logprobs moves them to the committed prefix. Code outside the
    template library keeps the correction's own decisions.
    """
    template_id = identify_template(turn.code, task.operands)
    if template_id is None:
        return turn
    stop = Stop.STOP if policy.wants_stop(turn.decisions) else Stop.CONTINUE
    decisions = policy.fresh_decisions(policy.featurize(history, task), template_id, stop, params)
    if lookahead_features is not None:
        values = policy.decision_logprobs(lookahead_features, decisions, params)
        decisions = tuple(replace(d, behavior_logprob=v) for d, v in zip(decisions, values))
    return replace(turn, decisions=decisions)


def _coin(rng: np.random.Generator, mix_probability: float) -> bool:
    # drawn from a spawned child stream so the episode stream is untouched
    child = rng.spawn(1)[0]
    return bool(child.random() < mix_probability)


def purify_online(task: Task, params: PolicyParams, limits: RolloutLimits, config: SaarConfig,
                  rng: np.random.Generator, policy: ToyPolicy) -> Trajectory:
    """Rollout with SAAR applied to a p_mix share of episodes"""
    active = _coin(rng, config.mix_probability)
    history = History.empty()
    for _ in range(limits.max_turns):
        turn = generate_turn(history, task, params, rng, policy, limits.exec_limits)
        if active and turn.failed:
            outcome = lookahead_correct(history, turn, task, params, policy,
                                        limits.exec_limits, config, rng)
            if outcome.status is CorrectionStatus.RECOVERED:
                turn = adaptive_replace(turn, outcome, config.similarity_threshold)
                turn = rebase_correction(turn, history, task, params, policy,
                                         outcome.correction.features)
            else:
                logger.debug("task %s: committing original failure", task.task_id)
        history = concat(history, turn)
        if episode_finished(turn, policy):
            break
    return Trajectory.build(task.task_id, history.turns(), purification_applied=active)


@dataclass
class OfflineSummary:
    trajectories: int = 0
    runs_collapsed: int = 0
    shallow: int = 0
    deep: int = 0
    errors_before: int = 0
    errors_after: int = 0

    @property
    def error_reduction(self) -> int:
        return self.errors_before - self.errors_after

    def add(self, raw: Trajectory, purified: Trajectory):
        self.trajectories += 1
        self.errors_before += raw.stats.tool_errors
        self.errors_after += purified.stats.tool_errors
        for turn in purified.turns:
            if turn.provenance is Provenance.PURIFIED_SHALLOW:
                self.shallow += 1
                self.runs_collapsed += 1
            elif turn.provenance is Provenance.PURIFIED_DEEP:
                self.deep += 1
                self.runs_collapsed += 1


def purify_offline(raw: Trajectory, gamma: float) -> Trajectory:
    """Collapse every Failure run that is followed by a Success into one purified turn"""
    if any(t.provenance.is_purified for t in raw.turns):
        raise PurificationError(f"trajectory {raw.task_id} already contains purified turns")
    turns: List[Turn] = []
    pending: List[Turn] = []
    collapsed = False
    for turn in raw.turns:
        if turn.failed:
            pending.append(turn)
            continue
        if pending:
            first_failure = pending[0]
            if ratio(first_failure.code, turn.code) >= gamma:
                turn = replace(turn, reasoning=first_failure.reasoning,
                               provenance=Provenance.PURIFIED_SHALLOW)
            else:
                turn = replace(turn, provenance=Provenance.PURIFIED_DEEP)
            pending = []
            collapsed = True
        turns.append(turn)
    turns.extend(pending)
    purified = Trajectory.build(
        raw.task_id, turns, reward=raw.reward,
        purification_applied=raw.purification_applied or collapsed,
    )
    return purified


def recompute_logprobs(traj: Trajectory, task: Task, params: PolicyParams,
                       policy: ToyPolicy) -> Trajectory:
    """
    Re-evaluate behavior log-probs under the committed (purified) prefixes.

    Turns before the first purified turn were sampled under exactly their
    committed prefix and keep their values; the suffix from there on is
    recomputed, building each prefix once.
    """
    first = next((i for i, t in enumerate(traj.turns) if t.provenance.is_purified), None)
    if first is None:
        return traj

    history = History.of(traj.turns[:first])
    turns = list(traj.turns[:first])
    for turn in traj.turns[first:]:
        features = policy.featurize(history, task)
        values = policy.decision_logprobs(features, turn.decisions, params)
        decisions = tuple(replace(d, behavior_logprob=v) for d, v in zip(turn.decisions, values))
        updated = replace(turn, decisions=decisions)
        turns.append(updated)
        history = concat(history, updated)
    return replace(traj, turns=tuple(turns))
