"""
Task Distribution
Parameterized families of integer problems with verifiable targets.
Targets come from plain Python arithmetic, independent of the program
templates the policy writes.
"""

import logging
import math
import operator
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .common_utils import load_json, save_json
from .errors import ConfigError, ContractViolation
from .minilang import ExecLimits, run
from .templates import FAMILIES, VARIANT_KEYS, correct_templates, variants_of
from .trajectory import Task

logger = logging.getLogger(__name__)


def _trunc_div(a: int, b: int) -> int:
    # operand ranges keep these exact in double precision
    return int(math.trunc(a / b))


def _trunc_mod(a: int, b: int) -> int:
    return int(math.fmod(a, b))


# reference answers, one per variant key
REFERENCE: Dict[str, Callable[[int, int, int], int]] = {
    "arithmetic/add": lambda a, b, c: operator.add(a, b),
    "arithmetic/sub": lambda a, b, c: operator.sub(a, b),
    "arithmetic/mul": lambda a, b, c: operator.mul(a, b),
    "two_step/add_mul": lambda a, b, c: (a + b) * c,
    "two_step/mul_sub": lambda a, b, c: a * b - c,
    "two_step/sub_add": lambda a, b, c: a - b + c,
    "division/div": lambda a, b, c: _trunc_div(a, b - c),
    "division/mod": lambda a, b, c: _trunc_mod(a, b - c),
}


@dataclass(frozen=True)
class TaskFamily:
    """Operand ranges for one family; bounds are inclusive"""
    family_id: str
    first_range: Tuple[int, int]
    rest_range: Tuple[int, int]
    operand_count: int

    @property
    def variants(self) -> List[str]:
        return [v.key for v in variants_of(self.family_id)]


TASK_FAMILIES: Dict[str, TaskFamily] = {
    "arithmetic": TaskFamily("arithmetic", (1, 999), (1, 999), 2),
    "two_step": TaskFamily("two_step", (1, 99), (1, 99), 3),
    # b - c is the divisor, so b and c stay close enough to make it small
    "division": TaskFamily("division", (10, 999), (1, 30), 3),
}


def family_of(name: str) -> TaskFamily:
    try:
        return TASK_FAMILIES[name]
    except KeyError:
        raise ConfigError(f"unknown task family {name!r}; choose from {', '.join(FAMILIES)}") from None


def prompt_features(variant_key: str) -> Tuple[int, ...]:
    """family one-hot, variant one-hot, bias"""
    family = variant_key.split("/", 1)[0]
    features = [0] * (len(FAMILIES) + len(VARIANT_KEYS) + 1)
    features[FAMILIES.index(family)] = 1
    features[len(FAMILIES) + VARIANT_KEYS.index(variant_key)] = 1
    features[-1] = 1
    return tuple(features)


def reference_answer(variant_key: str, operands: Sequence[int]) -> int:
    a, b, c = (tuple(operands) + (0, 0, 0))[:3]
    return REFERENCE[variant_key](a, b, c)


def solving_templates(task: Task, limits: ExecLimits = ExecLimits()) -> List[int]:
    """Ids of library templates whose execution yields the task target"""
    solved = []
    for template in correct_templates(task.variant):
        observation = run(template.render(task.operands), limits)
        if observation.ok and observation.value == task.target:
            solved.append(template.template_id)
    return solved


def make_task(variant_key: str, operands: Sequence[int], task_id: Optional[str] = None,
              limits: ExecLimits = ExecLimits()) -> Task:
    if variant_key not in REFERENCE:
        raise ContractViolation(f"unknown variant {variant_key!r}")
    operands = tuple(int(x) for x in operands)
    family = variant_key.split("/", 1)[0]
    if family == "division" and operands[1] == operands[2]:
        raise ContractViolation("division tasks need b != c")
    target = reference_answer(variant_key, operands)
    if abs(target) > limits.max_abs_value:
        raise ContractViolation(f"target {target} exceeds the interpreter bound")
    if task_id is None:
        task_id = "-".join([variant_key.replace("/", "-"), *map(str, operands)])
    task = Task(task_id, prompt_features(variant_key), target, family, variant_key, operands)
    if not solving_templates(task, limits):
        raise ContractViolation(f"task {task_id} is not solvable by any template")
    return task


def generate_task(family: TaskFamily, rng: np.random.Generator,
                  task_id: Optional[str] = None) -> Task:
    """Draw one task of the family; deterministic given the generator state"""
    variants = family.variants
    variant = variants[int(rng.integers(len(variants)))]
    while True:
        first = int(rng.integers(family.first_range[0], family.first_range[1] + 1))
        rest = [int(x) for x in rng.integers(family.rest_range[0], family.rest_range[1] + 1,
                                             size=family.operand_count - 1)]
        operands = (first, *rest)
        if family.family_id == "division" and operands[1] == operands[2]:
            continue
        return make_task(variant, operands, task_id)


class TaskGenerator:
    """Generate and persist task sets"""

    @classmethod
    def generate_tasks(cls, families: Iterable[str], count: int,
                       seed: Union[int, Sequence[int]]) -> List[Task]:
        """Families are cycled so every family is equally represented"""
        selected = [family_of(name) for name in families]
        if not selected:
            raise ConfigError("at least one task family is required")
        rng = np.random.default_rng(seed)
        return [generate_task(selected[i % len(selected)], rng, f"task_{i + 1:04d}")
                for i in range(count)]

    @classmethod
    def save_task_set(cls, tasks: Sequence[Task], file_path: str):
        """Save tasks to a JSON list"""
        save_json([task.to_dict() for task in tasks], file_path)
        logger.info("Saved %d tasks to %s", len(tasks), file_path)

    @classmethod
    def load_task_set(cls, file_path: str) -> List[Task]:
        tasks = [Task.from_dict(item) for item in load_json(file_path)]
        logger.info("Loaded %d tasks from %s", len(tasks), file_path)
        return tasks


save_task_set = TaskGenerator.save_task_set
load_task_set = TaskGenerator.load_task_set
