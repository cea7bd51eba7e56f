"""
Group Relative Policy Optimization
Outcome-only rewards, group-standardized advantages, the asymmetrically
clipped surrogate and mini-batch gradient ascent. No critic, no KL term.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import ContractViolation, NonFiniteObjectiveError
from .policy import ContextFeatures, PolicyParams, ToyPolicy
from .trajectory import DecisionRecord, History, Task, Trajectory, concat

logger = logging.getLogger(__name__)

RATIO_MODES = ("trajectory", "decision")


@dataclass(frozen=True)
class GrpoConfig:
    group_size: int = 8
    clip_low: float = 0.20
    clip_high: float = 0.28
    epsilon_std: float = 1e-8
    learning_rate: float = 0.05
    rollout_batch: int = 16
    mini_batch: int = 4
    ratio_mode: str = "trajectory"

    def __post_init__(self):
        if self.group_size < 2:
            raise ContractViolation("group_size G must be at least 2")
        if not (0.0 < self.clip_low < 1.0 and 0.0 < self.clip_high < 1.0):
            raise ContractViolation("clip_low and clip_high must lie in (0, 1)")
        if self.epsilon_std <= 0.0:
            raise ContractViolation("epsilon_std must be positive")
        if self.learning_rate <= 0.0:
            raise ContractViolation("learning_rate must be positive")
        if self.rollout_batch < 1 or self.mini_batch < 1:
            raise ContractViolation("rollout_batch and mini_batch must be at least 1")
        if self.ratio_mode not in RATIO_MODES:
            raise ContractViolation(f"ratio_mode must be one of {RATIO_MODES}")


@dataclass(frozen=True)
class TurnContext:
    """Committed-prefix features a turn's decisions were (re)scored under"""
    features: ContextFeatures
    decisions: Tuple[DecisionRecord, ...]


@dataclass(frozen=True)
class Group:
    task: Task
    trajectories: Tuple[Trajectory, ...]
    rewards: Tuple[float, ...]
    advantages: Tuple[float, ...]
    old_logprobs: Tuple[Tuple[float, ...], ...]
    filtered: bool
    contexts: Tuple[Tuple[TurnContext, ...], ...] = field(default=(), repr=False)

    def __post_init__(self):
        size = len(self.trajectories)
        lengths = {len(self.rewards), len(self.old_logprobs)}
        if not self.filtered:
            lengths.add(len(self.advantages))
        if lengths != {size}:
            raise ContractViolation("group lists must be parallel")

    @property
    def reward_variance(self) -> float:
        return float(np.var(self.rewards))


def compute_reward(traj: Trajectory, task: Task) -> float:
    """+1 iff the final answer equals the target, -1 otherwise"""
    if traj.final_answer is not None and traj.final_answer == task.target:
        return 1.0
    return -1.0


def compute_advantages(rewards: Sequence[float], epsilon_std: float = 1e-8) -> Optional[List[float]]:
    """
    A_i = (R_i - mean) / (std + δ) with the population std.

    Returns None for a zero-variance group, which carries no learning signal.
    """
    if len(rewards) == 0:
        raise ContractViolation("compute_advantages needs at least one reward")
    values = np.asarray(rewards, dtype=np.float64)
    sigma = float(np.std(values))
    if sigma == 0.0:
        return None
    return ((values - values.mean()) / (sigma + epsilon_std)).tolist()


def trajectory_contexts(traj: Trajectory, task: Task, policy: ToyPolicy) -> Tuple[TurnContext, ...]:
    contexts = []
    history = History.empty()
    for turn in traj.turns:
        contexts.append(TurnContext(policy.featurize(history, task), turn.decisions))
        history = concat(history, turn)
    return tuple(contexts)


def build_group(task: Task, trajectories: Sequence[Trajectory], policy: ToyPolicy,
                config: GrpoConfig) -> Group:
    """Score a group; trajectories are expected to carry recomputed log-probs"""
    rewards = tuple(compute_reward(t, task) for t in trajectories)
    advantages = compute_advantages(rewards, config.epsilon_std)
    scored = tuple(t.with_reward(r) for t, r in zip(trajectories, rewards))
    return Group(
        task=task,
        trajectories=scored,
        rewards=rewards,
        advantages=tuple(advantages) if advantages is not None else (),
        old_logprobs=tuple(tuple(t.decision_logprobs()) for t in scored),
        filtered=advantages is None,
        contexts=tuple(trajectory_contexts(t, task, policy) for t in scored),
    )


def _new_logprobs(contexts: Sequence[TurnContext], params: PolicyParams,
                  policy: ToyPolicy) -> np.ndarray:
    values: List[float] = []
    for context in contexts:
        values.extend(policy.decision_logprobs(context.features, context.decisions, params))
    return np.asarray(values)


def _ratio(new: np.ndarray, old: Sequence[float]) -> float:
    old = np.asarray(old, dtype=np.float64)
    if new.shape != old.shape:
        raise ContractViolation(f"{len(old)} old log-probs for {len(new)} decisions")
    # overflow surfaces as a non-finite objective in run_update
    with np.errstate(over="ignore"):
        return float(np.exp(np.sum(new - old)))


def importance_ratio(traj: Trajectory, old_logprobs: Sequence[float], params: PolicyParams,
                     policy: ToyPolicy, task: Task) -> float:
    """ρ = exp(Σ new - old) over every decision of the trajectory"""
    contexts = trajectory_contexts(traj, task, policy)
    rho = _ratio(_new_logprobs(contexts, params, policy), old_logprobs)
    if not np.isfinite(rho):
        raise ContractViolation("importance ratio is not finite")
    return rho


def _clipped_term(rho: float, advantage: float, config: GrpoConfig) -> Tuple[float, bool]:
    """min(ρA, clip(ρ)A) and whether the unclipped branch was selected"""
    unclipped = rho * advantage
    clipped = float(np.clip(rho, 1.0 - config.clip_low, 1.0 + config.clip_high)) * advantage
    if unclipped <= clipped:
        return unclipped, True
    return clipped, False


def _trajectory_term(contexts, old, advantage, params, policy, config) -> Tuple[float, np.ndarray]:
    rho = _ratio(_new_logprobs(contexts, params, policy), old)
    value, active = _clipped_term(rho, advantage, config)
    grad = np.zeros(params.shape.dimension)
    if active and advantage != 0.0:
        for context in contexts:
            grad += policy.grad_action_logprob(context.features, context.decisions, params)
        grad *= rho * advantage
    return value, grad


def _decision_term(contexts, old, advantage, params, policy, config) -> Tuple[float, np.ndarray]:
    new = _new_logprobs(contexts, params, policy)
    old = np.asarray(old, dtype=np.float64)
    if new.shape != old.shape:
        raise ContractViolation(f"{len(old)} old log-probs for {len(new)} decisions")
    count = len(new)
    value = 0.0
    grad = np.zeros(params.shape.dimension)
    index = 0
    for context in contexts:
        for decision in context.decisions:
            with np.errstate(over="ignore"):
                rho = float(np.exp(new[index] - old[index]))
            term, active = _clipped_term(rho, advantage, config)
            value += term
            if active and advantage != 0.0:
                grad += rho * advantage * policy.grad_action_logprob(
                    context.features, (decision,), params)
            index += 1
    return value / count, grad / count


def surrogate_objective(group: Group, params: PolicyParams, policy: ToyPolicy,
                        config: GrpoConfig) -> Tuple[float, np.ndarray]:
    """
    J = 1/G Σ min(ρ_i A_i, clip(ρ_i, 1-ε⁻, 1+ε⁺) A_i) and its gradient.

    Clipped branches contribute no gradient.
    """
    if group.filtered:
        raise ContractViolation("surrogate_objective called on a filtered group")
    contexts = group.contexts or tuple(
        trajectory_contexts(t, group.task, policy) for t in group.trajectories)
    term = _trajectory_term if config.ratio_mode == "trajectory" else _decision_term
    total = 0.0
    grad = np.zeros(params.shape.dimension)
    for ctx, old, advantage in zip(contexts, group.old_logprobs, group.advantages):
        value, g = term(ctx, old, advantage, params, policy, config)
        total += value
        grad += g
    size = len(group.trajectories)
    return total / size, grad / size


@dataclass(frozen=True)
class UpdateResult:
    params: PolicyParams
    objective: float = 0.0
    groups_used: int = 0
    mini_batches: int = 0


def run_update(params: PolicyParams, groups: Sequence[Group], policy: ToyPolicy,
               config: GrpoConfig) -> UpdateResult:
    """Mini-batch ascent over the unfiltered groups, in input order"""
    active = [(i, g) for i, g in enumerate(groups) if not g.filtered]
    if not active:
        logger.warning("all %d groups filtered (zero reward variance); skipping update", len(groups))
        return UpdateResult(params)

    objectives = []
    mini_batches = 0
    for start in range(0, len(active), config.mini_batch):
        batch = active[start:start + config.mini_batch]
        grad = np.zeros(params.shape.dimension)
        for index, group in batch:
            value, g = surrogate_objective(group, params, policy, config)
            if not (np.isfinite(value) and np.all(np.isfinite(g))):
                raise NonFiniteObjectiveError(
                    f"non-finite objective for group {index} (task {group.task.task_id})", index)
            objectives.append(value)
            grad += g
        grad /= len(batch)
        params = params.with_theta(params.theta + config.learning_rate * grad)
        mini_batches += 1
    return UpdateResult(params, float(np.mean(objectives)), len(active), mini_batches)


def update(params: PolicyParams, groups: Sequence[Group], policy: ToyPolicy,
           config: GrpoConfig) -> PolicyParams:
    return run_update(params, groups, policy, config).params
