# tests/test_kernel.py
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from defaultlab.errors import ContractViolation, RangeError
from defaultlab.fixtures.trees import random_tree, step_up
from defaultlab.models.process import AdaptedProcess, Level
from defaultlab.models.tree import ScenarioTree
from defaultlab.services.kernel import (
    bracket,
    check_duality,
    cond_exp,
    condition,
    doob_meyer,
    dual_projection,
    extend_with_uniform,
    is_martingale,
    projection,
    stochastic_integral,
)
from defaultlab.utils import numeric as num


def ups(tree):
    """Число шагов u к горизонту на каждом листе."""
    return num.coerce([name.count("u") for name in tree.leaf_names], True)


def walk(tree):
    """Симметричное блуждание W_n = #u - #d по первым n шагам."""
    rows = [[sum(1 if c == "u" else -1 for c in name[:n]) for name in tree.leaf_names]
            for n in range(tree.horizon + 1)]
    return num.coerce(rows, True)


# ========== Условные ожидания ==========

def test_cond_exp_by_atoms(bin2):
    x = ups(bin2)
    assert list(cond_exp(x, 0, bin2)) == [1]
    assert list(cond_exp(x, 1, bin2)) == [Fraction(3, 2), Fraction(1, 2)]
    assert list(cond_exp(x, 2, bin2)) == [2, 1, 1, 0]


@pytest.mark.parametrize("n", [-1, 3])
def test_cond_exp_rejects_time_outside_grid(bin2, n):
    with pytest.raises(RangeError):
        cond_exp(ups(bin2), n, bin2)


def test_projections_of_terminal_variable(bin2):
    rows = np.tile(ups(bin2), (3, 1))
    optional = projection(rows, "optional", bin2)
    predictable = projection(rows, "predictable", bin2)
    assert list(optional.values[1]) == [Fraction(3, 2)] * 2 + [Fraction(1, 2)] * 2
    # строка n предсказуемой проекции условна на F_{n-1}
    assert list(predictable.values[0]) == [1] * 4
    assert list(predictable.values[2]) == list(optional.values[1])
    assert predictable.level == Level.predictable


def test_dual_projections_of_raw_jump(bin2):
    A = num.zeros((3, 4), True)
    A[2] = num.indicator(step_up(bin2, 2), True)
    assert list(dual_projection(A, "optional", bin2).values[2]) == list(A[2])
    a = dual_projection(A, "predictable", bin2)
    assert list(a.values[1]) == [0] * 4
    assert list(a.values[2]) == [Fraction(1, 2)] * 4


def test_dual_projection_rejects_decreasing_process(bin2):
    A = num.coerce([[0] * 4, [1] * 4, [0] * 4], True)
    with pytest.raises(ContractViolation):
        dual_projection(A, "optional", bin2)


# ========== Дуб-Мейер и мартингалы ==========

def test_doob_meyer_of_geometric_survival():
    tree = ScenarioTree.trivial(2)
    Z = num.coerce([[1], [Fraction(1, 2)], [Fraction(1, 4)]], True)
    dm = doob_meyer(Z, tree)
    assert [row[0] for row in dm.compensator.values] == [0, Fraction(1, 2), Fraction(3, 4)]
    assert [row[0] for row in dm.martingale.values] == [1, 1, 1]


def test_doob_meyer_rejects_submartingale():
    tree = ScenarioTree.trivial(2)
    with pytest.raises(ContractViolation, match="супермартингал"):
        doob_meyer(num.coerce([[0], [1], [2]], True), tree)


def test_walk_is_martingale_and_drift_is_caught(bin2):
    W = walk(bin2)
    assert is_martingale(W, bin2)
    drifted = W + num.coerce([[0] * 4, [1] * 4, [2] * 4], True)
    check = is_martingale(drifted, bin2)
    assert not check
    assert check.worst_error == 1.0
    assert check.node == (1, 0)


def test_bracket_of_walk_is_time(bin2):
    W = AdaptedProcess(walk(bin2), bin2, Level.optional, name="W")
    assert [set(row) for row in bracket(W, W, bin2).values] == [{0}, {1}, {2}]


def test_integral_samplings_differ_by_quadratic_variation(bin2):
    W = AdaptedProcess(walk(bin2), bin2, Level.optional, name="W")
    left = stochastic_integral(W, W, "left")
    written = stochastic_integral(W, W, "as-written")
    assert [set(row) for row in (written.values - left.values)] == [{0}, {1}, {2}]
    ones = AdaptedProcess(num.ones((3, 4), True), bin2, Level.optional)
    assert np.array_equal(stochastic_integral(ones, W).values, W.values)


# ========== Расширение координатой Θ ==========

def test_extend_with_uniform_keeps_filtration(bin2):
    ext = extend_with_uniform(bin2, 4)
    assert ext.size == 16
    assert sorted(set(ext.coords["theta"])) == [Fraction(k, 8) for k in (1, 3, 5, 7)]
    assert ext.prob.sum() == 1
    assert [ext.atom_count(n) for n in range(3)] == [1, 2, 4]
    assert ext.root is bin2


def test_extend_with_uniform_needs_two_levels(bin2):
    with pytest.raises(RangeError):
        extend_with_uniform(bin2, 1)


# ========== Свойства на случайных деревьях ==========

@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 5000), horizon=st.integers(1, 4), mode=st.sampled_from(["optional", "predictable"]))
def test_duality_holds_exactly(seed, horizon, mode):
    tree = random_tree(seed, horizon=horizon)
    rng = np.random.default_rng(seed)
    shape = (horizon + 1, tree.size)
    for _ in range(10):
        steps = rng.integers(0, 3, size=shape)
        steps[0] = 0
        A = num.coerce(np.cumsum(steps, axis=0), True)
        X = num.coerce(rng.integers(-4, 5, size=shape), True)
        lhs, rhs = check_duality(A, X, mode, tree)
        assert lhs == rhs


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 5000), horizon=st.integers(1, 4), data=st.data())
def test_tower_property(seed, horizon, data):
    tree = random_tree(seed, horizon=horizon)
    n = data.draw(st.integers(0, horizon))
    m = data.draw(st.integers(-1, n))
    rng = np.random.default_rng(seed)
    for _ in range(10):
        x = num.coerce(rng.integers(0, 10, size=tree.size), True)
        assert np.array_equal(condition(condition(x, n, tree), m, tree), condition(x, m, tree))
