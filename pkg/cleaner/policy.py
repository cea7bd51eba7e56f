"""
Toy Factored-Categorical Policy
Each turn is a short sequence of categorical decisions, every one sampled
from softmax(W_category · features). Log-probabilities and their gradients
are exact, which keeps the optimizer and the recomputation math checkable.

Decision tree per turn:
  clean context      -> template, stop
  after a failure    -> mode, (template | edit), stop
"""

import json
import logging
from dataclasses import dataclass
from enum import Enum, IntEnum
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import log_softmax

from .errors import ContractViolation
from .templates import TEMPLATES, Edit, Template, apply_edit, identify_template
from .trajectory import ERROR_KINDS, DecisionRecord, History, Task

logger = logging.getLogger(__name__)


class Category(IntEnum):
    TEMPLATE = 0
    MODE = 1
    EDIT = 2
    STOP = 3


class Mode(IntEnum):
    FRESH = 0
    LOCAL_EDIT = 1


class Stop(IntEnum):
    CONTINUE = 0
    STOP = 1


class PlanKind(str, Enum):
    FRESH = "Fresh"
    LOCAL_EDIT = "LocalEdit"


PROMPT_LENGTH = 12  # family one-hot (3) + variant one-hot (8) + bias
TURN_BUCKETS = 3
ERROR_COUNT_CAP = 3


@dataclass(frozen=True)
class FeatureLayout:
    """Named slices of the context feature vector"""
    prompt_length: int = PROMPT_LENGTH
    template_count: int = len(TEMPLATES)

    @property
    def bias(self) -> int:
        return self.prompt_length - 1

    @property
    def turn_bucket(self) -> slice:
        start = self.prompt_length
        return slice(start, start + TURN_BUCKETS)

    @property
    def error_count(self) -> int:
        return self.turn_bucket.stop

    @property
    def last_error(self) -> slice:
        start = self.error_count + 1
        return slice(start, start + len(ERROR_KINDS))

    @property
    def last_template(self) -> slice:
        start = self.last_error.stop
        return slice(start, start + self.template_count)

    @property
    def length(self) -> int:
        return self.last_template.stop

    def error_bit(self, kind) -> int:
        return self.last_error.start + ERROR_KINDS.index(kind)

    def template_bit(self, template_id: int) -> int:
        return self.last_template.start + template_id


@dataclass(frozen=True)
class PolicyShape:
    arities: Tuple[int, ...]
    feature_length: int
    category_names: Tuple[str, ...] = tuple(c.name.lower() for c in Category)

    @property
    def offsets(self) -> Tuple[int, ...]:
        offsets, total = [], 0
        for arity in self.arities:
            offsets.append(total)
            total += arity * self.feature_length
        return tuple(offsets)

    @property
    def dimension(self) -> int:
        return sum(self.arities) * self.feature_length

    def block_slice(self, category: int) -> slice:
        start = self.offsets[category]
        return slice(start, start + self.arities[category] * self.feature_length)


@dataclass(frozen=True, eq=False)
class PolicyParams:
    """Flat parameter vector partitioned into per-category weight matrices"""
    theta: np.ndarray
    shape: PolicyShape
    lineage: Tuple[str, ...] = ()

    def __post_init__(self):
        theta = np.array(self.theta, dtype=np.float64).reshape(-1)
        if theta.size != self.shape.dimension:
            raise ContractViolation(
                f"theta has {theta.size} entries, shape needs {self.shape.dimension}")
        if not np.all(np.isfinite(theta)):
            raise ContractViolation("theta contains non-finite entries")
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "lineage", tuple(self.lineage))

    def block(self, category: int) -> np.ndarray:
        return self.theta[self.shape.block_slice(category)].reshape(
            self.shape.arities[category], self.shape.feature_length)

    def with_theta(self, theta: np.ndarray, note: Optional[str] = None) -> "PolicyParams":
        lineage = self.lineage + ((note,) if note else ())
        return PolicyParams(theta, self.shape, lineage)

    def header(self) -> Dict[str, object]:
        return {
            "categories": list(self.shape.category_names),
            "arities": list(self.shape.arities),
            "feature_length": self.shape.feature_length,
            "lineage": list(self.lineage),
        }


def save_params(params: PolicyParams, path: Union[str, Path]) -> Path:
    """Flat array, one %.17g value per line, under a one-line JSON header"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(path, params.theta, fmt="%.17g", header=json.dumps(params.header()))
    return path


def load_params(path: Union[str, Path]) -> PolicyParams:
    with open(path, "r", encoding="utf-8") as f:
        first = f.readline()
    if not first.startswith("# "):
        raise ValueError(f"{path}: missing JSON header line")
    header = json.loads(first[2:])
    shape = PolicyShape(
        arities=tuple(header["arities"]),
        feature_length=int(header["feature_length"]),
        category_names=tuple(header["categories"]),
    )
    theta = np.loadtxt(path, dtype=np.float64, ndmin=1)
    return PolicyParams(theta, shape, tuple(header.get("lineage", ())))


ContextFeatures = np.ndarray


@dataclass(frozen=True)
class ActionPlan:
    decisions: Tuple[DecisionRecord, ...]
    reasoning: str
    code: str
    kind: PlanKind
    template_id: Optional[int] = None

    @property
    def logprob(self) -> float:
        return sum(d.behavior_logprob for d in self.decisions)


class ToyPolicy:
    """π_θ over the template library, with error-conditioned local edits"""

    def __init__(self, prompt_length: int = PROMPT_LENGTH,
                 templates: Sequence[Template] = TEMPLATES):
        self.templates = tuple(templates)
        self.layout = FeatureLayout(prompt_length, len(self.templates))
        arities = [0] * len(Category)
        arities[Category.TEMPLATE] = len(self.templates)
        arities[Category.MODE] = len(Mode)
        arities[Category.EDIT] = len(Edit)
        arities[Category.STOP] = len(Stop)
        self.shape = PolicyShape(tuple(arities), self.layout.length)

    # -- parameters ---------------------------------------------------------

    def init_params(self, scale: float = 0.0, seed: Optional[int] = None) -> PolicyParams:
        if scale:
            rng = np.random.default_rng(seed)
            theta = rng.normal(0.0, scale, self.shape.dimension)
        else:
            theta = np.zeros(self.shape.dimension)
        return PolicyParams(theta, self.shape, (f"init(seed={seed},scale={scale})",))

    def _check_params(self, params: PolicyParams):
        if params.shape != self.shape:
            raise ContractViolation("parameters were built for a different policy shape")

    # -- features -----------------------------------------------------------

    def featurize(self, history: History, task: Task) -> ContextFeatures:
        layout = self.layout
        if len(task.prompt_features) != layout.prompt_length:
            raise ContractViolation(
                f"task {task.task_id} has {len(task.prompt_features)} prompt features, "
                f"policy expects {layout.prompt_length}")
        features = np.zeros(layout.length)
        features[:layout.prompt_length] = task.prompt_features
        features[layout.turn_bucket.start + min(len(history), TURN_BUCKETS - 1)] = 1.0
        features[layout.error_count] = min(history.failure_count, ERROR_COUNT_CAP)
        if history.last_error_kind is not None:
            features[layout.error_bit(history.last_error_kind)] = 1.0
        if history.last is not None:
            template_id = identify_template(history.last.code, task.operands)
            if template_id is not None:
                features[layout.template_bit(template_id)] = 1.0
        return features

    def has_error_context(self, features: ContextFeatures) -> bool:
        return bool(np.any(features[self.layout.last_error]))

    def last_template_id(self, features: ContextFeatures) -> Optional[int]:
        bits = features[self.layout.last_template]
        return int(np.argmax(bits)) if np.any(bits) else None

    # -- probabilities ------------------------------------------------------

    def category_logprobs(self, features: ContextFeatures, params: PolicyParams,
                          category: int) -> np.ndarray:
        return log_softmax(params.block(category) @ features)

    def category_probabilities(self, features: ContextFeatures, params: PolicyParams,
                               category: int) -> np.ndarray:
        return np.exp(self.category_logprobs(features, params, category))

    def _check_decision(self, category: int, choice: int):
        if not 0 <= category < len(self.shape.arities):
            raise ContractViolation(f"unknown decision category {category}")
        if not 0 <= choice < self.shape.arities[category]:
            raise ContractViolation(
                f"choice {choice} out of arity {self.shape.arities[category]} "
                f"for category {self.shape.category_names[category]}")

    def decision_logprobs(self, features: ContextFeatures, decisions: Sequence[DecisionRecord],
                          params: PolicyParams) -> List[float]:
        self._check_params(params)
        values = []
        for decision in decisions:
            self._check_decision(decision.category_id, decision.choice)
            logp = self.category_logprobs(features, params, decision.category_id)
            values.append(float(logp[decision.choice]))
        return values

    def action_logprob(self, features: ContextFeatures, decisions: Sequence[DecisionRecord],
                       params: PolicyParams) -> float:
        """Σ log softmax(W_c · f)[choice] over the turn's decisions"""
        return float(sum(self.decision_logprobs(features, decisions, params)))

    def grad_action_logprob(self, features: ContextFeatures, decisions: Sequence[DecisionRecord],
                            params: PolicyParams) -> np.ndarray:
        """∇θ action_logprob: (onehot(choice) - softmax) ⊗ features per category block"""
        self._check_params(params)
        grad = np.zeros(self.shape.dimension)
        for decision in decisions:
            category, choice = decision.category_id, decision.choice
            self._check_decision(category, choice)
            delta = -self.category_probabilities(features, params, category)
            delta[choice] += 1.0
            block = grad[self.shape.block_slice(category)].reshape(
                self.shape.arities[category], self.shape.feature_length)
            block += np.outer(delta, features)
        return grad

    # -- sampling -----------------------------------------------------------

    def _sample(self, features: ContextFeatures, params: PolicyParams, category: Category,
                rng: np.random.Generator) -> DecisionRecord:
        logp = self.category_logprobs(features, params, category)
        cumulative = np.cumsum(np.exp(logp))
        choice = int(np.searchsorted(cumulative, rng.random() * cumulative[-1], side="right"))
        choice = min(choice, len(logp) - 1)
        return DecisionRecord(int(category), choice, float(logp[choice]))

    def sample_action(self, features: ContextFeatures, params: PolicyParams,
                      rng: np.random.Generator, task: Task) -> ActionPlan:
        """(r, c) ~ π_θ(· | h), with h seen only through its features"""
        self._check_params(params)
        decisions = []
        mode = Mode.FRESH
        if self.has_error_context(features):
            record = self._sample(features, params, Category.MODE, rng)
            decisions.append(record)
            mode = Mode(record.choice)

        if mode is Mode.FRESH:
            record = self._sample(features, params, Category.TEMPLATE, rng)
            decisions.append(record)
            template_id = record.choice
            edit = None
        else:
            record = self._sample(features, params, Category.EDIT, rng)
            decisions.append(record)
            edit = Edit(record.choice)
            previous = self.last_template_id(features)
            repaired = apply_edit(previous, edit)
            template_id = repaired if repaired is not None else previous

        stop = self._sample(features, params, Category.STOP, rng)
        decisions.append(stop)

        code = self.templates[template_id].render(task.operands) if template_id is not None else ""
        reasoning = self.render_reasoning(mode, template_id, edit, Stop(stop.choice))
        kind = PlanKind.FRESH if mode is Mode.FRESH else PlanKind.LOCAL_EDIT
        return ActionPlan(tuple(decisions), reasoning, code, kind, template_id)

    def fresh_decisions(self, features: ContextFeatures, template_id: int, stop: Stop,
                        params: PolicyParams) -> Tuple[DecisionRecord, ...]:
        """Decisions that write template_id from scratch in this context, scored under params"""
        choices = [(Category.TEMPLATE, template_id), (Category.STOP, stop)]
        if self.has_error_context(features):
            choices.insert(0, (Category.MODE, Mode.FRESH))
        records = [DecisionRecord(int(category), int(choice), 0.0) for category, choice in choices]
        values = self.decision_logprobs(features, records, params)
        return tuple(DecisionRecord(r.category_id, r.choice, v) for r, v in zip(records, values))

    def render_reasoning(self, mode: Mode, template_id: Optional[int], edit: Optional[Edit],
                         stop: Stop) -> str:
        closing = ("report the result as the answer" if stop is Stop.STOP
                   else "double-check it in another call")
        if mode is Mode.FRESH:
            return f"Write the {self.templates[template_id].name} program, run it, then {closing}."
        return (f"Apply {edit.name.lower()} to the previous program, run it again, "
                f"then {closing}.")

    def wants_stop(self, decisions: Sequence[DecisionRecord]) -> bool:
        for decision in decisions:
            if decision.category_id == Category.STOP:
                return decision.choice == Stop.STOP
        return False
