# tests/test_stopping.py
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from defaultlab.errors import CapacityError, ContractViolation
from defaultlab.fixtures.trees import deterministic_time, first_step_up, random_tree, step_up, time_on
from defaultlab.models.process import INF, RandomTime, TimeLevel
from defaultlab.services.enlargement import azema_data, enlarge
from defaultlab.services.kernel import is_martingale
from defaultlab.services.stopping import (
    classify,
    compensator,
    decompose_default_time,
    has_predictable_part,
    is_predictable,
    is_stopping_time,
    restrict,
)


def test_stopping_time_and_predictability(bin2):
    up_first = time_on(bin2, first_step_up(bin2), 1)
    assert is_stopping_time(up_first, bin2)
    assert not is_predictable(up_first, bin2)
    assert is_predictable(deterministic_time(bin2, 2), bin2)
    # {T = 2} = {первый шаг u} известно в момент 1
    assert is_predictable(time_on(bin2, first_step_up(bin2), 2), bin2)


def test_is_predictable_requires_stopping_time(bin2):
    peeking = time_on(bin2, step_up(bin2, 2), 1)
    assert not is_stopping_time(peeking, bin2)
    with pytest.raises(ContractViolation):
        is_predictable(peeking, bin2)


def test_restrict_keeps_level_only_for_measurable_events(bin2):
    kept = restrict(deterministic_time(bin2, 2), first_step_up(bin2))
    assert kept.level == TimeLevel.f_stopping
    assert list(kept.value) == [2, 2, INF, INF]
    lost = restrict(deterministic_time(bin2, 1), step_up(bin2, 2))
    assert lost.level == TimeLevel.raw


def test_classify_on_scenario_tree(bin2):
    T = time_on(bin2, first_step_up(bin2), 1)
    result = classify(T, bin2)
    assert np.array_equal(result.accessible, first_step_up(bin2))
    assert not result.inaccessible.any()
    assert result.predictable_part is None
    assert result.flags == (True, False, True)


def test_classify_cox_time_is_inaccessible(geometric):
    _, model = geometric
    result = classify(model.tau, model.es.G)
    assert not result.accessible.any()
    assert np.array_equal(result.inaccessible, model.tau.finite)
    assert result.predictable_part is None


def test_predictable_part_found(bin2):
    T = time_on(bin2, first_step_up(bin2), 2)
    assert np.array_equal(has_predictable_part(T, bin2), first_step_up(bin2))


def test_classify_capacity_and_sampling(bin2):
    T = time_on(bin2, first_step_up(bin2), 1)
    with pytest.raises(CapacityError):
        classify(T, bin2, limit=2)
    sampled = classify(T, bin2, sampled=True, rng=np.random.default_rng(0), limit=2)
    assert sampled.sampled
    with pytest.raises(ContractViolation):
        classify(T, bin2, sampled=True, limit=2)


def test_compensator_of_first_step_time(bin2):
    data = compensator(time_on(bin2, first_step_up(bin2), 1), bin2)
    assert [set(row) for row in data.Lambda.values] == [{0}, {Fraction(1, 2)}, {Fraction(1, 2)}]
    assert is_martingale(data.N, bin2)


def test_compensator_of_deterministic_time(bin2):
    data = compensator(deterministic_time(bin2, 2), bin2)
    assert [set(row) for row in data.Lambda.values] == [{0}, {0}, {1}]
    assert [set(row) for row in data.N.values] == [{0}, {0}, {0}]


def test_decomposition_reassembles_tau(jump):
    _, model = jump
    sd = model.sd
    assert len(sd.shocks) == 1
    assert np.array_equal(sd.reassemble(), model.tau.value)
    assert set(np.unique(sd.attribution)) <= {-1, 0, 1}
    assert sd.coincidence(1).any() and sd.coincidence(0).any()
    assert np.all(sd.shocks[0].value[sd.coincidence(1)] == 1)


def test_decomposition_of_non_immersed_time(bin2):
    # τ = 2 на uu, 1 на ud: оба листа в одном атоме F_1
    tau = RandomTime(value=np.array([2, 1, INF, INF], dtype=np.int64), tree=bin2, name="τ")
    es = enlarge(bin2, tau)
    sd = decompose_default_time(es.tau, es)
    assert [list(s.value) for s in sd.shocks] == [[1, 1, INF, INF], [2, INF, INF, INF]]
    assert list(sd.attribution) == [2, 1, -1, -1]
    assert np.array_equal(sd.reassemble(), tau.value)
    assert all(is_stopping_time(s, bin2) for s in sd.shocks)

    ad = azema_data(es, sd)
    assert not ad.immersed
    half = Fraction(1, 2)
    assert [list(row) for row in ad.Z.values] == [[1, 1, 1, 1], [half, half, 1, 1], [0, 0, 1, 1]]


def test_decomposition_drops_uncharged_candidate(bin2):
    tau = time_on(bin2, first_step_up(bin2), 1)
    es = enlarge(bin2, tau)
    idle = time_on(bin2, ~first_step_up(bin2), 2, "idle")
    sd = decompose_default_time(es.tau, es, candidates=[idle, deterministic_time(bin2, 1, "T")])
    assert len(sd.shocks) == 1 and sd.shocks[0].name == "T"
    assert not (sd.attribution == 0).any()


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 500), values=st.lists(st.sampled_from([1, 2, 3, INF]), min_size=8, max_size=8))
def test_decomposition_exists_for_any_time_on_root(seed, values):
    tree = random_tree(seed, horizon=3)
    tau = RandomTime(value=np.array(values, dtype=np.int64), tree=tree, name="τ")
    es = enlarge(tree, tau)
    sd = decompose_default_time(es.tau, es)
    assert np.array_equal(sd.reassemble(), tau.value)
    assert not (sd.attribution == 0).any()
    for i, shock in enumerate(sd.shocks):
        assert is_stopping_time(shock, tree)
        for other in sd.shocks[i + 1:]:
            assert not (shock.finite & (shock.value == other.value)).any()


@settings(max_examples=50, deadline=None)
@given(
    values=st.lists(st.sampled_from([1, 2, INF]), min_size=4, max_size=4),
    E=st.lists(st.booleans(), min_size=4, max_size=4),
    F=st.lists(st.booleans(), min_size=4, max_size=4),
)
def test_restrict_composes_as_intersection(values, E, F):
    tree = random_tree(3, horizon=2)
    T = RandomTime(value=np.array(values, dtype=np.int64), tree=tree, name="T")
    E, F = np.array(E), np.array(F)
    twice = restrict(restrict(T, E), F)
    once = restrict(T, E & F)
    assert np.array_equal(twice.value, once.value)
    assert twice.level == once.level


@pytest.mark.parametrize("seed", range(5))
def test_classify_invariant_under_equivalent_measure(geometric, seed):
    _, model = geometric
    G = model.es.G
    factors = np.random.default_rng(seed).integers(1, 6, size=G.size)
    base = classify(model.tau, G)
    moved = classify(model.tau, G.reweighted(factors))
    assert np.array_equal(base.accessible, moved.accessible)
    assert np.array_equal(base.inaccessible, moved.inaccessible)
    assert base.flags == moved.flags
    assert (base.predictable_part is None) == (moved.predictable_part is None)


def test_classify_invariant_under_reweighting_on_bin2(bin2):
    T = RandomTime(value=np.array([1, 1, 2, 2], dtype=np.int64), tree=bin2, name="T")
    moved_tree = bin2.reweighted([1, 3, 2, 5])
    moved = RandomTime(value=T.value, tree=moved_tree, name="T")
    base, other = classify(T, bin2), classify(moved, moved_tree)
    assert np.array_equal(base.accessible, other.accessible)
    assert np.array_equal(base.inaccessible, other.inaccessible)
    assert base.flags == other.flags
    assert np.array_equal(base.predictable_part, other.predictable_part)
