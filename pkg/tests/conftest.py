# tests/conftest.py
from fractions import Fraction

import numpy as np
import pytest

from defaultlab.config import get_settings
from defaultlab.fixtures.catalog import load_fixture
from defaultlab.fixtures.trees import binomial_tree, first_step_up
from defaultlab.services.pricing import DefaultModel


@pytest.fixture(autouse=True)
def _clean_settings(monkeypatch):
    """Зерно из окружения не должно протекать между тестами."""
    monkeypatch.delenv("DEFAULTLAB_SEED", raising=False)
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()


@pytest.fixture
def bin2():
    return binomial_tree(2)


def _model(name):
    scenario = load_fixture(name)
    return scenario, DefaultModel.from_built(scenario.built)


@pytest.fixture(scope="session")
def geometric():
    return _model("geometric-zero-recovery")


@pytest.fixture(scope="session")
def jump():
    return _model("jump-recovery-shock")


@pytest.fixture(scope="session")
def predictable():
    return _model("predictable-default")


@pytest.fixture(scope="session")
def kappa():
    return _model("kappa-shock")


@pytest.fixture(scope="session")
def jump_up_mask(jump):
    """Листья расширенного дерева, у которых первый шаг u."""
    scenario, model = jump
    return model.tree.lift(first_step_up(scenario.root), scenario.root)


def frac(p, q=1):
    return Fraction(p, q)


def values_on(row: np.ndarray, mask: np.ndarray):
    """Единственное значение row на mask."""
    picked = set(row[mask])
    assert len(picked) == 1, picked
    return picked.pop()
