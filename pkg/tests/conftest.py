"""
Shared fixtures: a division task and policy parameters that force
specific behaviors (always correct, repair on the k-th attempt, never
repair, wrong answer).
"""

import logging
from typing import Iterable, Tuple

import numpy as np
import pytest

from cleaner.policy import Category, Mode, Stop, ToyPolicy
from cleaner.tasks import make_task
from cleaner.templates import Edit

BIG = 50.0

# division/div templates: 18 compact, 19 stepwise, 20 faulty (d = b - b)
COMPACT_DIV = 18
STEPWISE_DIV = 19
FAULTY_DIV = 20
COMPACT_ADD = 0


def forced_params(policy: ToyPolicy, entries: Iterable[Tuple[int, int, int, float]]):
    """Zero parameters except the listed (category, choice, feature, weight) entries"""
    theta = np.zeros(policy.shape.dimension)
    width = policy.shape.feature_length
    for category, choice, feature, weight in entries:
        theta[policy.shape.block_slice(category).start + choice * width + feature] = weight
    return policy.init_params().with_theta(theta, "forced")


def repair_on_attempt(policy: ToyPolicy, attempt: int):
    """
    The first turn is the faulty template. After a failure the policy
    always edits locally, but only picks fix_divisor once the prior
    failure count reaches `attempt`; otherwise it resubmits the faulty code.
    """
    layout = policy.layout
    return forced_params(policy, [
        (Category.TEMPLATE, FAULTY_DIV, layout.bias, BIG),
        (Category.MODE, Mode.LOCAL_EDIT, layout.bias, BIG),
        (Category.EDIT, Edit.FIX_DIVISOR, layout.error_count, 40.0),
        (Category.EDIT, Edit.FIX_DIVISOR, layout.bias, 20.0 - 40.0 * attempt),
        (Category.STOP, Stop.STOP, layout.bias, BIG),
    ])


@pytest.fixture(autouse=True)
def detach_cli_logging():
    """The CLI attaches a stream handler bound to the captured stderr of one test"""
    yield
    logger = logging.getLogger("cleaner")
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
    logger.setLevel(logging.NOTSET)


@pytest.fixture
def policy():
    return ToyPolicy()


@pytest.fixture
def division_task():
    # 84 / (12 - 5) = 12
    return make_task("division/div", (84, 12, 5), "div-fixture")


@pytest.fixture
def zero_params(policy):
    return policy.init_params()


@pytest.fixture
def always_correct(policy):
    bias = policy.layout.bias
    return forced_params(policy, [
        (Category.TEMPLATE, STEPWISE_DIV, bias, BIG),
        (Category.STOP, Stop.STOP, bias, BIG),
    ])


@pytest.fixture
def repairing(policy):
    return repair_on_attempt(policy, 1)


@pytest.fixture
def never_repairing(policy):
    bias = policy.layout.bias
    return forced_params(policy, [
        (Category.TEMPLATE, FAULTY_DIV, bias, BIG),
        (Category.MODE, Mode.LOCAL_EDIT, bias, BIG),
        (Category.EDIT, Edit.BALANCE_PARENS, bias, BIG),
        (Category.STOP, Stop.STOP, bias, BIG),
    ])


@pytest.fixture
def fresh_rewrite(policy):
    """Fails with the faulty template, then starts over with the compact one"""
    layout = policy.layout
    return forced_params(policy, [
        (Category.TEMPLATE, FAULTY_DIV, layout.bias, BIG),
        (Category.TEMPLATE, COMPACT_DIV, layout.error_count, 2 * BIG),
        (Category.MODE, Mode.FRESH, layout.bias, BIG),
        (Category.STOP, Stop.STOP, layout.bias, BIG),
    ])


@pytest.fixture
def wrong_answer(policy):
    bias = policy.layout.bias
    return forced_params(policy, [
        (Category.TEMPLATE, COMPACT_ADD, bias, BIG),
        (Category.STOP, Stop.STOP, bias, BIG),
    ])
