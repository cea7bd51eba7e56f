"""
Baseline Rollout
Sample an action, execute its code, append the observation, repeat. Failed
turns stay in the history for good; that is the behavior SAAR changes.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from .errors import ContractViolation
from .minilang import ExecLimits, run
from .policy import PolicyParams, ToyPolicy
from .trajectory import History, Provenance, Task, Trajectory, Turn, concat

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RolloutLimits:
    max_turns: int = 8
    exec_limits: ExecLimits = field(default_factory=ExecLimits)

    def __post_init__(self):
        if self.max_turns < 1:
            raise ContractViolation("max_turns must be at least 1")


def episode_rng(seed: int, *stream: int) -> np.random.Generator:
    """Independent random stream for one episode, keyed by its coordinates"""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, stream)]))


def generate_turn(history: History, task: Task, params: PolicyParams, rng: np.random.Generator,
                  policy: ToyPolicy, exec_limits: ExecLimits = ExecLimits()) -> Turn:
    """h_t -> (r_t, c_t, o_t) with o_t = E(c_t)"""
    features = policy.featurize(history, task)
    plan = policy.sample_action(features, params, rng, task)
    observation = run(plan.code, exec_limits)
    logger.debug("task %s turn %d: %r -> %s", task.task_id, len(history), plan.code,
                 observation.outcome.value)
    return Turn(plan.reasoning, plan.code, observation, plan.decisions, Provenance.NATURAL)


def episode_finished(turn: Turn, policy: ToyPolicy) -> bool:
    return turn.observation.ok and policy.wants_stop(turn.decisions)


def run_episode(task: Task, params: PolicyParams, limits: RolloutLimits,
                rng: np.random.Generator, policy: ToyPolicy) -> Trajectory:
    """Roll out one trajectory; failures are permanently recorded"""
    history = History.empty()
    for _ in range(limits.max_turns):
        turn = generate_turn(history, task, params, rng, policy, limits.exec_limits)
        history = concat(history, turn)
        if episode_finished(turn, policy):
            break
    return Trajectory.build(task.task_id, history.turns())


EpisodeFn = Callable[[Task, PolicyParams, np.random.Generator], Trajectory]


def rollout_group(task: Task, params: PolicyParams, rngs: Sequence[np.random.Generator],
                  episode: EpisodeFn, executor: Optional[ThreadPoolExecutor] = None) -> List[Trajectory]:
    """G episodes of one task, returned in group order whatever the completion order"""
    if executor is None:
        return [episode(task, params, rng) for rng in rngs]
    return list(executor.map(lambda rng: episode(task, params, rng), rngs))
