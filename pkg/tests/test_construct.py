# tests/test_construct.py
from fractions import Fraction

import numpy as np
import pytest

from defaultlab.errors import ConstructionError, ContractViolation, RangeError
from defaultlab.fixtures.catalog import _jump_spec, load_fixture
from defaultlab.fixtures.trees import binomial_tree, deterministic_time, first_step_up
from defaultlab.models.process import INF
from defaultlab.models.tree import ScenarioTree
from defaultlab.services.construct import (
    BuildKind,
    ConstructionMode,
    ConstructionSpec,
    SamplingIndex,
    build_a,
    built_gap,
    construct_tau,
    cox_construct,
    family_construct,
    refinement_spec,
    refinement_study,
    s_conditional_law,
    theta_staircase,
)
from defaultlab.services.kernel import condition
from defaultlab.utils import numeric as num

HALF, QUARTER = Fraction(1, 2), Fraction(1, 4)


def default_law(built):
    """P(τ <= n) по строкам."""
    ind = built.tau.indicator()
    return [condition(ind[n], -1, built.tree)[0] for n in range(ind.shape[0])]


def test_cox_matches_target_on_grid():
    built = cox_construct(ScenarioTree.trivial(2), [[0], [HALF], [Fraction(3, 4)]], m=4)
    assert built.kind == BuildKind.cox
    assert default_law(built) == [0, HALF, Fraction(3, 4)]
    assert built_gap(built) == 0.0


def test_cox_rejects_bad_inputs():
    tree = ScenarioTree.trivial(2)
    with pytest.raises(ContractViolation):
        cox_construct(tree, [[0], [HALF], [Fraction(3, 2)]])
    with pytest.raises(ContractViolation):
        cox_construct(tree, [[0], [HALF], [QUARTER]])
    with pytest.raises(RangeError):
        cox_construct(tree, [[0], [HALF], [1]], m=1)


def test_general_construction_is_exact(bin2):
    spec, _ = _jump_spec(bin2)
    built = construct_tau(spec, m=2)
    assert built.sampling == SamplingIndex.previous
    assert [set(row) for row in built.a] == [{0}, {HALF}, {1}]
    assert built_gap(built) == 0.0
    assert set(built.q.sum(axis=0).ravel()) == {1}
    assert spec.components == (0, 1, -1)


def test_probabilities_are_component_masses(bin2):
    spec, _ = _jump_spec(bin2)
    p = spec.probabilities()
    assert [p[c, 0, 0] for c in range(3)] == [HALF, Fraction(1, 8), Fraction(3, 8)]
    up = first_step_up(bin2)
    assert set(p[1, 1][up]) == {QUARTER} and set(p[1, 1][~up]) == {0}


def test_build_a_discrete_and_exponential(bin2):
    spec, _ = _jump_spec(bin2)
    a, nu = build_a(spec)
    assert [set(row) for row in a] == [{0}, {HALF}, {1}]
    assert set(nu.value) == {2}
    float_spec, _ = _jump_spec(binomial_tree(2, exact=False))
    a_exp, _ = build_a(float_spec, ConstructionMode.exponential)
    assert np.allclose(a_exp[1], 1 - np.exp(-0.5))
    assert np.allclose(a_exp[2], 1 - np.exp(-1.5))


def test_s_law_current_sampling_can_go_negative(bin2):
    spec, _ = _jump_spec(bin2)
    a = num.coerce([[0] * 4, [HALF] * 4, [1] * 4], True)
    q = s_conditional_law(spec, a, SamplingIndex.previous)
    up = first_step_up(bin2)
    assert set(q[1, 1][up]) == {QUARTER} and set(q[1, 1][~up]) == {0}
    with pytest.raises(ConstructionError):
        s_conditional_law(spec, a, SamplingIndex.current)


def test_exponential_form_needs_float_tree(bin2):
    spec, _ = _jump_spec(bin2)
    with pytest.raises(ContractViolation):
        construct_tau(spec, m=2, mode=ConstructionMode.exponential)


def test_exponential_form_on_float_tree():
    built = construct_tau(refinement_spec(8), m=16, mode=ConstructionMode.exponential)
    assert built.mode == ConstructionMode.exponential
    assert built.sampling == SamplingIndex.current
    assert np.allclose(built.q.sum(axis=0), 1.0)
    finite = built.tau.value[built.tau.value != INF]
    assert finite.min() >= 1 and finite.max() <= 8


def test_from_target_moves_whole_increment_to_shock(bin2):
    spec, T1 = _jump_spec(bin2)
    rebuilt = ConstructionSpec.from_target(bin2, spec.target(), [T1])
    assert np.array_equal(rebuilt.target(), spec.target())
    up = first_step_up(bin2)
    assert set(rebuilt.shocks[0].jump[up]) == {HALF}
    assert set(rebuilt.shocks[0].jump[~up]) == {0}
    assert [set(row[up]) for row in rebuilt.A_c] == [{0}, {0}, {QUARTER}]


def test_spec_rejects_target_above_one(bin2):
    spec, _ = _jump_spec(bin2)
    with pytest.raises(ContractViolation):
        ConstructionSpec(tree=bin2, A_c=spec.A_c * 2, shocks=spec.shocks)


def test_theta_staircase():
    a = num.coerce([[0], [HALF], [Fraction(7, 10)], [1]], True)
    assert [row[0] for row in theta_staircase(a, 2, True)] == [0, HALF, HALF, 1]
    assert [row[0] for row in theta_staircase(a, 4, True)] == [0, HALF, Fraction(3, 4), 1]
    on_level = num.coerce([[QUARTER]], True)
    assert theta_staircase(on_level, 2, True)[0, 0] == 0
    assert theta_staircase(on_level, 2, True, strict=False)[0, 0] == HALF


def test_family_stopped_flag():
    assert load_fixture("family-independent").built.stopped
    assert not load_fixture("family-not-stopped").built.stopped


def test_family_rejects_law_not_summing_to_one(bin2):
    times = (deterministic_time(bin2, 1), deterministic_time(bin2, 2))
    law = np.full((2, 3, 4), Fraction(1, 3), dtype=object)
    with pytest.raises(ContractViolation, match="суммируются"):
        family_construct(bin2, times, law)


def test_refinement_ladder_halves_error():
    rungs = refinement_study((8, 16, 32))
    assert [r.horizon for r in rungs] == [8, 16, 32]
    assert rungs[0].ratio is None
    for rung in rungs[1:]:
        assert 1.6 <= rung.ratio <= 2.4


def test_refinement_spec_needs_even_horizon():
    with pytest.raises(ContractViolation):
        refinement_spec(7)
