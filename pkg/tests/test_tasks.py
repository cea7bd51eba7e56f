"""
Task distribution tests
"""

import numpy as np
import pytest

from cleaner.errors import ConfigError, ContractViolation
from cleaner.minilang import ExecLimits, run
from cleaner.tasks import (
    TASK_FAMILIES, TaskGenerator, family_of, generate_task, make_task, prompt_features,
    reference_answer, solving_templates,
)
from cleaner.templates import FAMILIES, TEMPLATES, VARIANT_KEYS, faulty_template


def test_generation_is_deterministic():
    first = TaskGenerator.generate_tasks(["division", "arithmetic"], 20, 7)
    second = TaskGenerator.generate_tasks(["division", "arithmetic"], 20, 7)
    assert first == second
    other = TaskGenerator.generate_tasks(["division", "arithmetic"], 20, 8)
    assert first != other


def test_task_ids_and_family_cycling():
    tasks = TaskGenerator.generate_tasks(list(TASK_FAMILIES), 9, 0)
    assert [t.task_id for t in tasks[:3]] == ["task_0001", "task_0002", "task_0003"]
    assert [t.family for t in tasks] == list(FAMILIES) * 3


def test_every_generated_task_is_solvable_and_bounded():
    limit = ExecLimits().max_abs_value
    for task in TaskGenerator.generate_tasks(list(TASK_FAMILIES), 300, 11):
        assert task.target == reference_answer(task.variant, task.operands)
        assert abs(task.target) <= limit
        solved = solving_templates(task)
        assert solved
        for template_id in solved:
            observation = run(TEMPLATES[template_id].render(task.operands))
            assert observation.value == task.target


def test_faulty_template_never_solves():
    for task in TaskGenerator.generate_tasks(list(TASK_FAMILIES), 60, 4):
        observation = run(faulty_template(task.variant).render(task.operands))
        assert not observation.ok


@pytest.mark.parametrize("variant, operands, target", [
    ("division/div", (84, 12, 5), 12),
    ("division/div", (7, 1, 3), -3),
    ("division/mod", (7, 1, 3), 1),
    ("division/mod", (-7, 3, 1), -1),
    ("two_step/add_mul", (2, 3, 4), 20),
    ("two_step/mul_sub", (6, 7, 2), 40),
    ("arithmetic/sub", (3, 10), -7),
])
def test_reference_answers_truncate_toward_zero(variant, operands, target):
    task = make_task(variant, operands)
    assert task.target == target
    assert task.task_id == "-".join([variant.replace("/", "-"), *map(str, operands)])


def test_prompt_features_layout():
    features = prompt_features("division/mod")
    assert len(features) == len(FAMILIES) + len(VARIANT_KEYS) + 1
    assert sum(features) == 3
    assert features[FAMILIES.index("division")] == 1
    assert features[len(FAMILIES) + VARIANT_KEYS.index("division/mod")] == 1
    assert features[-1] == 1


def test_invalid_tasks():
    with pytest.raises(ContractViolation):
        make_task("division/div", (10, 4, 4))
    with pytest.raises(ContractViolation):
        make_task("division/pow", (1, 2, 3))


def test_unknown_family_is_a_config_error():
    with pytest.raises(ConfigError):
        TaskGenerator.generate_tasks(["geometry"], 3, 0)
    with pytest.raises(ConfigError):
        TaskGenerator.generate_tasks([], 3, 0)


def test_task_set_round_trip(tmp_path):
    tasks = TaskGenerator.generate_tasks(list(TASK_FAMILIES), 12, 3)
    path = tmp_path / "sets" / "tasks.json"
    TaskGenerator.save_task_set(tasks, str(path))
    assert TaskGenerator.load_task_set(str(path)) == tasks


@pytest.mark.parametrize("family", list(TASK_FAMILIES))
def test_generate_task_is_deterministic_per_generator_state(family):
    first = generate_task(family_of(family), np.random.default_rng(21))
    second = generate_task(family_of(family), np.random.default_rng(21))
    assert first == second
    assert first.family == family
    assert first.target == reference_answer(first.variant, first.operands)
