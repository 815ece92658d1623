# tests/test_pricing.py
from fractions import Fraction

import numpy as np
import pytest

from defaultlab.errors import ContractViolation, RangeError, SingularityError
from defaultlab.fixtures.catalog import (
    _jump_spec,
    _kappa_spec,
    jump_recovery_claim,
    load_fixture,
    random_cox,
    three_way_tree,
)
from defaultlab.fixtures.trees import binomial_tree
from defaultlab.models.claim import DefaultableClaim, RecoveryDecomposition, ShockLoss
from defaultlab.services.kernel import is_martingale
from defaultlab.services.pricing import (
    DefaultModel,
    classic_price,
    loss_no_predictable_check,
    masking_gap,
    measure_change,
    predefault_price,
    price_brute,
    price_via_Qtau,
    recovery_terms,
    value_process,
)
from tests.conftest import values_on

HALF = Fraction(1, 2)


# ========== Цена-оракул и маскировка ==========

@pytest.mark.parametrize("fixture", ["geometric", "jump"])
def test_predefault_price_masks_brute_price(fixture, request):
    scenario, model = request.getfixturevalue(fixture)
    brute = price_brute(scenario.claim, model, scenario.rates)
    pre = predefault_price(scenario.claim, model, scenario.rates)
    assert masking_gap(brute, pre, model, scenario.claim.maturity) == 0.0
    assert is_martingale(value_process(scenario.claim, model, scenario.rates), model.es.G)


def test_geometric_predefault_price(geometric):
    scenario, model = geometric
    pre = predefault_price(scenario.claim, model, scenario.rates)
    assert [set(row) for row in pre.values] == [{Fraction(1, 4)}, {HALF}, {1}]


def test_jump_predefault_price(jump, jump_up_mask):
    scenario, model = jump
    pre = predefault_price(scenario.claim, model, scenario.rates)
    assert set(pre.values[0]) == {Fraction(19, 32)}
    assert values_on(pre.values[1], jump_up_mask) == Fraction(5, 8)
    assert values_on(pre.values[1], ~jump_up_mask) == Fraction(5, 6)


def test_kappa_shock_prices(kappa):
    scenario, model = kappa
    pre = predefault_price(scenario.claim, model, scenario.rates)
    assert set(pre.values[0]) == {Fraction(21, 32)}
    q = price_via_Qtau(scenario.claim, model, scenario.rates)
    assert np.array_equal(q.price.values[:2], pre.values[:2])
    brute = price_brute(scenario.claim, model, scenario.rates)
    assert masking_gap(brute, pre, model, scenario.claim.maturity) == 0.0


def test_predictable_default_price_is_recovery(predictable):
    scenario, model = predictable
    pre = predefault_price(scenario.claim, model, scenario.rates)
    # Z_2 = 0: в момент погашения берётся C_2
    assert [set(row) for row in pre.values] == [{HALF}, {HALF}, {HALF}]


# ========== Классическая формула ==========

def test_classic_price_matches_on_cox(geometric):
    scenario, model = geometric
    classic = classic_price(scenario.claim, model, scenario.rates)
    pre = predefault_price(scenario.claim, model, scenario.rates)
    assert np.array_equal(classic.values, pre.values)


def test_classic_price_with_rate():
    scenario = load_fixture("cox-binomial")
    model = DefaultModel.from_built(scenario.built)
    classic = classic_price(scenario.claim, model, scenario.rates)
    pre = predefault_price(scenario.claim, model, scenario.rates)
    assert np.array_equal(classic.values[:2], pre.values[:2])


def test_classic_price_rejects_charged_shock(jump):
    scenario, model = jump
    with pytest.raises(ContractViolation, match="price_via_Qtau"):
        classic_price(scenario.claim, model, scenario.rates)


# ========== Мера Q^τ ==========

def test_measure_change_for_cox_is_trivial(geometric):
    _, model = geometric
    mc = measure_change(model)
    assert mc.martingale
    assert mc.exponential_gap == 0.0
    assert [set(row) for row in mc.D.values] == [{1}, {1}, {1}]
    assert mc.weights.sum() == 1


def test_measure_change_singular_for_sure_default(predictable):
    _, model = predictable
    with pytest.raises(SingularityError):
        measure_change(model)


def test_qtau_price_and_naive_gap(jump):
    scenario, model = jump
    q = price_via_Qtau(scenario.claim, model, scenario.rates)
    pre = predefault_price(scenario.claim, model, scenario.rates)
    assert np.array_equal(q.price.values[:2], pre.values[:2])
    assert set(q.naive_gap[0]) == {Fraction(1, 32)}
    assert q.measure.martingale


def test_qtau_naive_is_right_without_recovery_jump(jump):
    scenario, model = jump
    _, T1 = _jump_spec(scenario.root)
    claim = jump_recovery_claim(scenario.root, T1, loss=0)
    q = price_via_Qtau(claim, model, scenario.rates)
    assert set(q.naive_gap.ravel()) == {0}
    assert set(q.h_shock[0][1]) == {0}


def test_recovery_terms(jump):
    scenario, model = jump
    rt = recovery_terms(scenario.claim, model)
    assert set(rt.anchor[1]) == {HALF}
    assert set(rt.h_shock[0][1]) == {Fraction(1, 4)}
    assert set(rt.h_idio[1]) == {Fraction(1, 8)}
    assert set(rt.shock_sum[1]) == {Fraction(1, 32)}


def test_recovery_terms_with_kappa(kappa):
    scenario, model = kappa
    rt = recovery_terms(scenario.claim, model)
    assert set(rt.kappa_tilde[0][1]) == {Fraction(1, 128)}
    # h = c + κ̃/(p_- + v) совпадает с определением через C
    assert set(rt.h_shock[0][1]) == set(rt.h_from_loss[0][1]) == {Fraction(1, 6)}


# ========== Потери и предсказуемая часть ==========

def test_loss_check_passes_for_inaccessible_default(geometric):
    scenario, model = geometric
    verdict = loss_no_predictable_check(value_process(scenario.claim, model, scenario.rates), model.es)
    assert verdict.passed and verdict.verdict == "PASS"


def test_loss_check_finds_predictable_part(predictable):
    scenario, model = predictable
    verdict = loss_no_predictable_check(value_process(scenario.claim, model, scenario.rates), model.es)
    assert verdict.verdict == "FAIL"
    assert verdict.predictable_part.any()


@pytest.mark.parametrize("seed, predictable", [(s, False) for s in range(50)] + [(s, True) for s in range(10)])
def test_loss_check_on_random_cox(seed, predictable):
    scenario = random_cox(seed, predictable=predictable)
    model = DefaultModel.from_built(scenario.built)
    verdict = loss_no_predictable_check(value_process(scenario.claim, model, scenario.rates), model.es)
    assert verdict.passed is not predictable
    if not predictable:
        assert verdict.loss_holds


def test_loss_check_requires_g_martingale(geometric):
    scenario, model = geometric
    pre = predefault_price(scenario.claim, model, scenario.rates)
    with pytest.raises(ContractViolation):
        loss_no_predictable_check(pre, model.es)


# ========== Требование ==========

@pytest.mark.parametrize("maturity", [0, 3])
def test_claim_maturity_inside_horizon(bin2, maturity):
    with pytest.raises(RangeError):
        DefaultableClaim.build(bin2, payment=1, maturity=maturity)


def test_claim_rejects_negative_values(bin2):
    with pytest.raises(ContractViolation):
        DefaultableClaim.build(bin2, payment=-1, maturity=2)
    with pytest.raises(ContractViolation):
        DefaultableClaim.build(bin2, payment=1, maturity=2, base_recovery=-HALF)


def test_claim_payment_must_be_known_at_maturity(bin2):
    with pytest.raises(ContractViolation, match="F_T"):
        DefaultableClaim.build(bin2, payment=[1, 2, 1, 2], maturity=1)


def test_claim_on_foreign_tree_rejected(jump):
    scenario, model = jump
    foreign = DefaultableClaim.build(binomial_tree(2), payment=1, maturity=2)
    with pytest.raises(ContractViolation):
        predefault_price(foreign, model, scenario.rates)


# ========== Разложение возмещения ==========

@pytest.fixture
def three_way():
    tree = three_way_tree()
    _, T1 = _kappa_spec(tree)
    return tree, T1


def _decomposition(tree, T1, kappa, loss=None, base=None):
    """Ĉ = 1/2 и c = 1/8 по умолчанию; kappa - значения по первому шагу."""
    shape = (tree.horizon + 1, tree.size)
    base = np.full(shape, HALF, dtype=object) if base is None else base
    loss = np.full(shape, Fraction(1, 8), dtype=object) if loss is None else loss
    kappas = np.array([kappa.get(name[:1], 0) for name in tree.leaf_names], dtype=object)
    return RecoveryDecomposition(base=base, jumps=[ShockLoss(time=T1, loss=loss, kappa=kappas)])


def test_centered_kappa_accepted(three_way):
    tree, T1 = three_way
    _decomposition(tree, T1, {"u": Fraction(1, 8), "m": Fraction(-1, 8)}).validate(tree)


def test_kappa_with_nonzero_mean_rejected(three_way):
    tree, T1 = three_way
    decomposition = _decomposition(tree, T1, {"u": Fraction(1, 4), "m": Fraction(1, 4)})
    with pytest.raises(ContractViolation, match="Условное среднее"):
        decomposition.validate(tree)


def test_kappa_must_be_known_at_shock(three_way):
    tree, T1 = three_way
    decomposition = _decomposition(tree, T1, {})
    decomposition.jumps[0].kappa[0] = Fraction(1, 8)
    decomposition.jumps[0].kappa[1] = Fraction(-1, 8)
    with pytest.raises(ContractViolation, match="не измерима"):
        decomposition.validate(tree)


def test_kappa_off_shock_rejected(three_way):
    tree, T1 = three_way
    with pytest.raises(ContractViolation, match="вне"):
        _decomposition(tree, T1, {"d": Fraction(1, 8)}).validate(tree)


def test_loss_must_be_predictable(three_way):
    tree, T1 = three_way
    first = np.array([name[:1] for name in tree.leaf_names])
    loss = np.full((3, tree.size), Fraction(1, 8), dtype=object)
    loss[1, first == "u"] = Fraction(1, 4)
    with pytest.raises(ContractViolation, match="предсказуемой"):
        _decomposition(tree, T1, {}, loss=loss).validate(tree)


def test_base_recovery_must_not_jump_at_shock(three_way):
    tree, T1 = three_way
    base = np.array([[HALF] * tree.size, [Fraction(1, 4)] * tree.size, [Fraction(1, 4)] * tree.size], dtype=object)
    with pytest.raises(ContractViolation, match="прыгает"):
        _decomposition(tree, T1, {}, base=base).validate(tree)


def test_claim_build_rejects_extra_kappas(three_way):
    tree, T1 = three_way
    with pytest.raises(ContractViolation, match="κ"):
        DefaultableClaim.build(tree, payment=1, maturity=2, shocks=(T1,), losses=(0,), kappas=(0, 0))
