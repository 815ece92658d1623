# tests/test_montecarlo.py
from fractions import Fraction

import numpy as np
import pytest

from defaultlab.errors import ContractViolation
from defaultlab.services.kernel import expectation
from defaultlab.services.montecarlo import (
    estimate_default_probability,
    estimate_mean,
    estimate_price,
    root_view,
    simulate_paths,
)
from defaultlab.utils import numeric as num

SEED = 20240601


@pytest.fixture(scope="module")
def ensemble(jump):
    scenario, _ = jump
    return simulate_paths(scenario.built, 20000, SEED)


def test_paths_do_not_depend_on_workers(jump):
    built = jump[0].built
    single = simulate_paths(built, 500, 7, workers=1)
    pooled = simulate_paths(built, 500, 7, workers=3)
    assert single.same_as(pooled)
    assert not single.same_as(simulate_paths(built, 500, 8))


def test_rejects_empty_ensemble(jump):
    with pytest.raises(ContractViolation):
        simulate_paths(jump[0].built, 0, 1)


def test_default_probabilities_match_kernel(jump, ensemble):
    _, model = jump
    for n in (1, 2):
        exact = expectation(num.indicator(model.tau.le()[n], True), model.tree)
        est = estimate_default_probability(ensemble, n, exact=exact)
        assert est.paths == 20000
        assert abs(est.value - float(exact)) <= 4 * est.std_error


def test_price_matches_kernel(jump, ensemble):
    scenario, _ = jump
    est = estimate_price(ensemble, scenario.claim, scenario.rates, exact=Fraction(19, 32))
    assert est.half_width > 0
    assert abs(est.value - 19 / 32) <= 4 * est.std_error


def test_shock_ids_follow_components(jump, ensemble):
    assert set(np.unique(ensemble.shock)) <= {-1, 0, 1}
    # шок T1 срабатывает только в момент 1
    assert set(np.unique(ensemble.tau[ensemble.shock == 1])) <= {1}


def test_root_view_recovers_root_values(jump):
    scenario, model = jump
    root = scenario.root
    values = num.coerce([[0] * root.size, list(range(root.size)), [1] * root.size], True)
    assert np.array_equal(root_view(model.tree.lift(values, root), model.tree), values)


def test_estimate_mean_band():
    est = estimate_mean("const", np.full(10, 0.5), exact=Fraction(1, 2))
    assert est.std_error == 0.0
    assert est.within_band
    assert estimate_mean("const", np.full(10, 0.5), exact=1).within_band is False


@pytest.mark.slow
def test_large_ensemble_within_three_sigma(jump):
    scenario, model = jump
    large = simulate_paths(scenario.built, 100_000, SEED + 1, workers=2)
    price = estimate_price(large, scenario.claim, scenario.rates, exact=Fraction(19, 32))
    assert abs(price.value - 19 / 32) <= 3 * price.std_error
    for n in (1, 2):
        exact = expectation(num.indicator(model.tau.le()[n], True), model.tree)
        est = estimate_default_probability(large, n, exact=exact)
        assert abs(est.value - float(exact)) <= 3 * est.std_error
