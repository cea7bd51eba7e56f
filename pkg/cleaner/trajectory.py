"""
Trajectory Data Model
Observations, turns, persistent histories and trajectories, plus the
trajectory-lines interchange format shared by rollout, the offline
purifier and the harness.
"""

import json
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Iterable, Iterator, List, Optional, Tuple, Union

from .errors import ContractViolation, TrajectoryFormatError


class Outcome(str, Enum):
    SUCCESS = "Success"
    FAILURE = "Failure"


class ErrorKind(str, Enum):
    PARSE = "Parse"
    DIVISION_BY_ZERO = "DivisionByZero"
    UNDEFINED_VARIABLE = "UndefinedVariable"
    STEP_LIMIT = "StepLimit"
    OVERFLOW = "Overflow"


class Provenance(str, Enum):
    NATURAL = "Natural"
    PURIFIED_SHALLOW = "PurifiedShallow"
    PURIFIED_DEEP = "PurifiedDeep"

    @property
    def is_purified(self) -> bool:
        return self is not Provenance.NATURAL


ERROR_KINDS: Tuple[ErrorKind, ...] = tuple(ErrorKind)


@dataclass(frozen=True)
class Observation:
    """What the interpreter reported for one code action"""
    outcome: Outcome
    stdout: str = ""
    value: Optional[int] = None
    error_kind: Optional[ErrorKind] = None
    message: Optional[str] = None

    def __post_init__(self):
        if self.outcome is Outcome.SUCCESS:
            if self.error_kind is not None or self.message is not None:
                raise ContractViolation("Success observation cannot carry an error")
        else:
            if self.value is not None:
                raise ContractViolation("Failure observation cannot carry a value")
            if self.error_kind is None:
                raise ContractViolation("Failure observation requires an error_kind")
            if not self.message:
                raise ContractViolation("Failure observation requires a nonempty message")

    @classmethod
    def success(cls, value: int) -> "Observation":
        return cls(Outcome.SUCCESS, stdout=str(value), value=value)

    @classmethod
    def failure(cls, error_kind: ErrorKind, message: str) -> "Observation":
        return cls(Outcome.FAILURE, stdout="", error_kind=error_kind, message=message)

    @property
    def ok(self) -> bool:
        return self.outcome is Outcome.SUCCESS


@dataclass(frozen=True)
class DecisionRecord:
    """One categorical choice of the policy and its behavior log-probability"""
    category_id: int
    choice: int
    behavior_logprob: float

    def __post_init__(self):
        if self.category_id < 0 or self.choice < 0:
            raise ContractViolation("category_id and choice must be non-negative")
        if not self.behavior_logprob <= 0.0:
            raise ContractViolation(f"behavior_logprob must be <= 0, got {self.behavior_logprob}")


@dataclass(frozen=True)
class Turn:
    """One (reasoning, code, observation) tuple"""
    reasoning: str
    code: str
    observation: Observation
    decisions: Tuple[DecisionRecord, ...]
    provenance: Provenance = Provenance.NATURAL

    def __post_init__(self):
        object.__setattr__(self, "decisions", tuple(self.decisions))
        if not self.decisions:
            raise ContractViolation("a turn needs at least one decision")
        if self.provenance.is_purified and not self.observation.ok:
            raise ContractViolation("purified turns must carry a Success observation")

    @property
    def failed(self) -> bool:
        return not self.observation.ok

    @property
    def logprob(self) -> float:
        return sum(d.behavior_logprob for d in self.decisions)


@dataclass(frozen=True)
class Task:
    """One query drawn from the task distribution"""
    task_id: str
    prompt_features: Tuple[int, ...]
    target: int
    family: str = ""
    variant: str = ""
    operands: Tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "prompt_features", tuple(int(x) for x in self.prompt_features))
        object.__setattr__(self, "operands", tuple(int(x) for x in self.operands))
        if not isinstance(self.target, int):
            raise ContractViolation("task target must be an integer")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "task_id": self.task_id,
            "family": self.family,
            "variant": self.variant,
            "operands": list(self.operands),
            "prompt_features": list(self.prompt_features),
            "target": self.target,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Task":
        return cls(
            task_id=data["task_id"],
            prompt_features=tuple(data["prompt_features"]),
            target=int(data["target"]),
            family=data.get("family", ""),
            variant=data.get("variant", ""),
            operands=tuple(data.get("operands", ())),
        )


class History:
    """
    Persistent trajectory prefix.

    Appending returns a new node that points at the old one, so a frozen
    prefix stays addressable while a lookahead extends it. Each node keeps
    the summary the policy conditions on (length, failure count, last
    error kind), making prefix summaries O(1).
    """

    __slots__ = ("parent", "last", "length", "failure_count", "last_error_kind")

    def __init__(self, parent: Optional["History"] = None, last: Optional[Turn] = None):
        self.parent = parent
        self.last = last
        if parent is None or last is None:
            self.length = 0
            self.failure_count = 0
            self.last_error_kind = None
        else:
            self.length = parent.length + 1
            self.failure_count = parent.failure_count + (1 if last.failed else 0)
            self.last_error_kind = last.observation.error_kind if last.failed else None

    @classmethod
    def empty(cls) -> "History":
        return cls()

    @classmethod
    def of(cls, turns: Iterable[Turn]) -> "History":
        history = cls.empty()
        for turn in turns:
            history = concat(history, turn)
        return history

    def turns(self) -> Tuple[Turn, ...]:
        collected = []
        node = self
        while node.last is not None:
            collected.append(node.last)
            node = node.parent
        return tuple(reversed(collected))

    def prefixes(self) -> List["History"]:
        """All prefixes from empty up to and including this one"""
        nodes = []
        node = self
        while node is not None:
            nodes.append(node)
            node = node.parent
        return list(reversed(nodes))

    def __len__(self) -> int:
        return self.length

    def __repr__(self) -> str:
        return f"History(length={self.length}, failures={self.failure_count})"


def concat(history: History, turn: Turn) -> History:
    """Persistent append: a new node sharing the parent prefix"""
    return History(history, turn)


def count_noisy_success_runs(turns: Iterable[Turn]) -> int:
    """Count maximal runs of Failure turns immediately followed by a Success turn"""
    runs = 0
    in_failure_run = False
    for turn in turns:
        if turn.failed:
            in_failure_run = True
        else:
            if in_failure_run:
                runs += 1
            in_failure_run = False
    return runs


@dataclass(frozen=True)
class TrajectoryStats:
    tool_calls: int = 0
    tool_errors: int = 0
    noisy_success_runs: int = 0

    @classmethod
    def of(cls, turns: Tuple[Turn, ...]) -> "TrajectoryStats":
        return cls(
            tool_calls=len(turns),
            tool_errors=sum(1 for t in turns if t.failed),
            noisy_success_runs=count_noisy_success_runs(turns),
        )


def final_answer_of(turns: Iterable[Turn]) -> Optional[int]:
    answer = None
    for turn in turns:
        if turn.observation.ok:
            answer = turn.observation.value
    return answer


@dataclass(frozen=True)
class Trajectory:
    """Query id, ordered turns, answer, reward and purification provenance"""
    task_id: str
    turns: Tuple[Turn, ...] = ()
    final_answer: Optional[int] = None
    reward: Optional[float] = None
    purification_applied: bool = False
    stats: TrajectoryStats = field(default_factory=TrajectoryStats)

    def __post_init__(self):
        object.__setattr__(self, "turns", tuple(self.turns))
        if self.stats != TrajectoryStats.of(self.turns):
            raise ContractViolation("stored stats disagree with turns")
        if not self.purification_applied and any(t.provenance.is_purified for t in self.turns):
            raise ContractViolation("purified turns require purification_applied=True")
        if self.reward is not None and self.reward not in (-1.0, 1.0):
            raise ContractViolation(f"reward must be -1 or +1, got {self.reward}")

    @classmethod
    def build(cls, task_id: str, turns: Iterable[Turn], *, reward: Optional[float] = None,
              purification_applied: bool = False) -> "Trajectory":
        turns = tuple(turns)
        return cls(
            task_id=task_id,
            turns=turns,
            final_answer=final_answer_of(turns),
            reward=reward,
            purification_applied=purification_applied,
            stats=TrajectoryStats.of(turns),
        )

    def with_turns(self, turns: Iterable[Turn]) -> "Trajectory":
        turns = tuple(turns)
        return replace(self, turns=turns, stats=TrajectoryStats.of(turns))

    def with_reward(self, reward: float) -> "Trajectory":
        return replace(self, reward=float(reward))

    def decision_logprobs(self) -> List[float]:
        return [d.behavior_logprob for t in self.turns for d in t.decisions]


# ---------------------------------------------------------------------------
# trajectory lines
# ---------------------------------------------------------------------------

_TRAJECTORY_KEYS = ("task_id", "turns", "final_answer", "reward", "purification_applied", "stats")
_TURN_KEYS = ("reasoning", "code", "observation", "decisions", "provenance")
_DECISION_KEYS = ("category_id", "choice", "behavior_logprob")
_STATS_KEYS = ("tool_calls", "tool_errors", "noisy_success_runs")
_OBSERVATION_REQUIRED = {
    Outcome.SUCCESS: ("outcome", "stdout", "value"),
    Outcome.FAILURE: ("outcome", "stdout", "error_kind", "message"),
}


def _observation_to_dict(obs: Observation) -> Dict[str, Any]:
    data: Dict[str, Any] = {"outcome": obs.outcome.value, "stdout": obs.stdout}
    if obs.ok:
        data["value"] = obs.value
    else:
        data["error_kind"] = obs.error_kind.value
        data["message"] = obs.message
    return data


def to_dict(traj: Trajectory) -> Dict[str, Any]:
    return {
        "task_id": traj.task_id,
        "turns": [
            {
                "reasoning": t.reasoning,
                "code": t.code,
                "observation": _observation_to_dict(t.observation),
                "decisions": [
                    {"category_id": d.category_id, "choice": d.choice,
                     "behavior_logprob": d.behavior_logprob}
                    for d in t.decisions
                ],
                "provenance": t.provenance.value,
            }
            for t in traj.turns
        ],
        "final_answer": traj.final_answer,
        "reward": traj.reward,
        "purification_applied": traj.purification_applied,
        "stats": {
            "tool_calls": traj.stats.tool_calls,
            "tool_errors": traj.stats.tool_errors,
            "noisy_success_runs": traj.stats.noisy_success_runs,
        },
    }


def serialize(traj: Trajectory) -> str:
    """One trajectory line (no trailing newline)"""
    return json.dumps(to_dict(traj), ensure_ascii=False, separators=(",", ":"))


class _Reader:
    """Field-by-field validation with location-aware errors"""

    def __init__(self, line: Optional[int]):
        self.line = line

    def fail(self, path: str, message: str):
        raise TrajectoryFormatError(message, line=self.line, field=path)

    def obj(self, value: Any, path: str, required: Tuple[str, ...],
            optional: Tuple[str, ...] = ()) -> Dict[str, Any]:
        if not isinstance(value, dict):
            self.fail(path, "expected an object")
        for key in required:
            if key not in value:
                self.fail(f"{path}.{key}" if path else key, "missing field")
        allowed = set(required) | set(optional)
        for key in value:
            if key not in allowed:
                self.fail(f"{path}.{key}" if path else key, "unknown field")
        return value

    def integer(self, value: Any, path: str, nullable: bool = False) -> Optional[int]:
        if value is None and nullable:
            return None
        if isinstance(value, bool) or not isinstance(value, int):
            self.fail(path, "expected an integer")
        return value

    def number(self, value: Any, path: str, nullable: bool = False) -> Optional[float]:
        if value is None and nullable:
            return None
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            self.fail(path, "expected a number")
        return float(value)

    def text(self, value: Any, path: str) -> str:
        if not isinstance(value, str):
            self.fail(path, "expected a string")
        return value

    def enum(self, enum_cls, value: Any, path: str):
        try:
            return enum_cls(value)
        except ValueError:
            self.fail(path, f"invalid value {value!r}")

    def build(self, path: str, factory, *args, **kwargs):
        try:
            return factory(*args, **kwargs)
        except ContractViolation as e:
            self.fail(path, str(e))


def _observation_from(reader: _Reader, raw: Any, path: str) -> Observation:
    if not isinstance(raw, dict):
        reader.fail(path, "expected an object")
    if "outcome" not in raw:
        reader.fail(f"{path}.outcome", "missing field")
    outcome = reader.enum(Outcome, raw["outcome"], f"{path}.outcome")
    data = reader.obj(raw, path, _OBSERVATION_REQUIRED[outcome])
    stdout = reader.text(data["stdout"], f"{path}.stdout")
    if outcome is Outcome.SUCCESS:
        value = reader.integer(data["value"], f"{path}.value")
        return reader.build(path, Observation, outcome, stdout=stdout, value=value)
    kind = reader.enum(ErrorKind, data["error_kind"], f"{path}.error_kind")
    message = reader.text(data["message"], f"{path}.message")
    return reader.build(path, Observation, outcome, stdout=stdout, error_kind=kind, message=message)


def from_dict(data: Any, line: Optional[int] = None) -> Trajectory:
    reader = _Reader(line)
    data = reader.obj(data, "", _TRAJECTORY_KEYS)
    task_id = reader.text(data["task_id"], "task_id")
    if not isinstance(data["turns"], list):
        reader.fail("turns", "expected a list")

    turns = []
    for i, raw_turn in enumerate(data["turns"]):
        path = f"turns[{i}]"
        raw_turn = reader.obj(raw_turn, path, _TURN_KEYS)
        observation = _observation_from(reader, raw_turn["observation"], f"{path}.observation")
        if not isinstance(raw_turn["decisions"], list):
            reader.fail(f"{path}.decisions", "expected a list")
        decisions = []
        for j, raw_decision in enumerate(raw_turn["decisions"]):
            dpath = f"{path}.decisions[{j}]"
            raw_decision = reader.obj(raw_decision, dpath, _DECISION_KEYS)
            decisions.append(reader.build(
                dpath, DecisionRecord,
                reader.integer(raw_decision["category_id"], f"{dpath}.category_id"),
                reader.integer(raw_decision["choice"], f"{dpath}.choice"),
                reader.number(raw_decision["behavior_logprob"], f"{dpath}.behavior_logprob"),
            ))
        turns.append(reader.build(
            path, Turn,
            reasoning=reader.text(raw_turn["reasoning"], f"{path}.reasoning"),
            code=reader.text(raw_turn["code"], f"{path}.code"),
            observation=observation,
            decisions=tuple(decisions),
            provenance=reader.enum(Provenance, raw_turn["provenance"], f"{path}.provenance"),
        ))

    raw_stats = reader.obj(data["stats"], "stats", _STATS_KEYS)
    stats = TrajectoryStats(
        tool_calls=reader.integer(raw_stats["tool_calls"], "stats.tool_calls"),
        tool_errors=reader.integer(raw_stats["tool_errors"], "stats.tool_errors"),
        noisy_success_runs=reader.integer(raw_stats["noisy_success_runs"], "stats.noisy_success_runs"),
    )
    turns = tuple(turns)
    if stats != TrajectoryStats.of(turns):
        reader.fail("stats", f"stored stats {stats} disagree with turns {TrajectoryStats.of(turns)}")

    final_answer = reader.integer(data["final_answer"], "final_answer", nullable=True)
    if final_answer != final_answer_of(turns):
        reader.fail("final_answer", "does not match the last Success observation")
    if not isinstance(data["purification_applied"], bool):
        reader.fail("purification_applied", "expected a boolean")

    return reader.build(
        "", Trajectory,
        task_id=task_id,
        turns=turns,
        final_answer=final_answer,
        reward=reader.number(data["reward"], "reward", nullable=True),
        purification_applied=data["purification_applied"],
        stats=stats,
    )


def deserialize(text: str, line: Optional[int] = None) -> Trajectory:
    """Parse one trajectory line; errors name the line and field"""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise TrajectoryFormatError(f"invalid JSON: {e.msg} (column {e.colno})", line=line) from e
    return from_dict(data, line=line)


def write_trajectory_lines(path: Union[str, Path], trajectories: Iterable[Trajectory]) -> int:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with open(path, "w", encoding="utf-8") as f:
        for traj in trajectories:
            f.write(serialize(traj))
            f.write("\n")
            count += 1
    return count


def iter_trajectory_lines(path: Union[str, Path]) -> Iterator[Trajectory]:
    with open(path, "r", encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            if not raw.strip():
                continue
            yield deserialize(raw, line=lineno)


def read_trajectory_lines(path: Union[str, Path]) -> List[Trajectory]:
    return list(iter_trajectory_lines(path))
