# tests/test_enlargement.py
from fractions import Fraction

import numpy as np
import pytest

from defaultlab.errors import ContractViolation
from defaultlab.fixtures.catalog import load_fixture, random_cox
from defaultlab.fixtures.trees import binomial_tree, deterministic_time
from defaultlab.services.enlargement import (
    azema_gaps,
    check_immersion,
    check_projection_identities,
    enlarge,
    p_processes,
    projections_coincide,
)
from defaultlab.services.kernel import condition, increments
from defaultlab.services.pricing import DefaultModel
from tests.conftest import values_on


def column(values):
    """Значения процесса на тривиальном корне: одно значение на строку."""
    out = []
    for row in values:
        assert len(set(row)) == 1
        out.append(row[0])
    return out


def test_enlarge_rejects_foreign_or_zero_time(bin2):
    with pytest.raises(ContractViolation):
        enlarge(bin2, deterministic_time(binomial_tree(2), 1))
    with pytest.raises(ContractViolation):
        enlarge(bin2, deterministic_time(bin2, 0))


def test_progressive_atoms(geometric):
    _, model = geometric
    G = model.es.G
    assert [G.atom_count(n) for n in range(3)] == [1, 2, 3]
    assert [model.tree.atom_count(n) for n in range(3)] == [1, 1, 1]


def test_geometric_azema_processes(geometric):
    _, model = geometric
    ad = model.ad
    assert column(ad.Z.values) == [1, Fraction(1, 2), Fraction(1, 4)]
    assert column(ad.Adual.values) == [0, Fraction(1, 2), Fraction(3, 4)]
    assert column(ad.adual.values) == column(ad.Adual.values)
    assert column(ad.Nhat.values) == [0, 0, 0]
    assert ad.immersed
    assert set(azema_gaps(ad).values()) == {0.0}


def test_geometric_intensity(geometric):
    _, model = geometric
    hazard = model.intensity.hazard
    assert column(hazard[1:]) == [Fraction(1, 2), Fraction(1, 2)]
    assert set(model.intensity.gaps.values()) == {0.0}


def test_jump_shock_terms(jump, jump_up_mask):
    _, model = jump
    ad = model.ad
    shock = ad.shocks[0]
    assert values_on(shock.p.values[0], np.ones(model.tree.size, dtype=bool)) == Fraction(1, 8)
    assert values_on(shock.p.values[1], jump_up_mask) == Fraction(1, 4)
    assert values_on(shock.p.values[1], ~jump_up_mask) == 0
    assert set(shock.v[1]) == {Fraction(1, 8)}
    assert set(shock.w[1]) == {Fraction(1, 8)}
    assert set(increments(ad.a0.values)[1]) == {Fraction(1, 4)}
    assert set(azema_gaps(ad).values()) == {0.0}


def test_jump_intensity_and_projections(jump, jump_up_mask):
    _, model = jump
    hazard = model.intensity.hazard
    assert set(hazard[1]) == {Fraction(3, 8)}
    assert values_on(hazard[2], jump_up_mask) == Fraction(1, 2)
    assert values_on(hazard[2], ~jump_up_mask) == Fraction(1, 3)
    assert set(model.intensity.gaps.values()) == {0.0}
    assert set(check_projection_identities(model.es, model.ad, model.intensity).values()) == {0.0}
    # заряженный шок не предсказуем: A^τ != a^τ
    assert projections_coincide(model.ad) == (False, False)


def _random_predictable(root, rng):
    rows = [condition(rng.integers(-3, 4, size=root.size), n - 1, root) for n in range(root.horizon + 1)]
    return np.array(rows, dtype=object)


def test_compensated_projection_for_any_predictable_integrand(jump):
    scenario, model = jump
    rng = np.random.default_rng(11)
    for _ in range(5):
        H = model.tree.lift(_random_predictable(scenario.root, rng), scenario.root)
        gaps = check_projection_identities(model.es, model.ad, model.intensity, H=H)
        assert set(gaps.values()) == {0.0}


def test_compensated_projection_rejects_adapted_integrand(jump, jump_up_mask):
    _, model = jump
    H = np.zeros((model.horizon + 1, model.tree.size), dtype=object)
    H[1] = np.where(jump_up_mask, 1, 0)
    with pytest.raises(ContractViolation):
        check_projection_identities(model.es, model.ad, model.intensity, H=H)


def test_p_processes_are_stopped(jump):
    _, model = jump
    pp = p_processes(model.es, model.sd)
    assert pp.stopped_gap == (0.0,)
    assert len(pp.g) == 1


def test_projections_coincide_for_cox():
    scenario = load_fixture("cox-binomial")
    model = DefaultModel.from_built(scenario.built)
    assert projections_coincide(model.ad) == (True, True)


def test_immersion_fails_for_unstopped_family():
    scenario = load_fixture("family-not-stopped")
    model = DefaultModel.from_built(scenario.built)
    check = check_immersion(model.es)
    assert not check
    assert check.node is not None
    assert not model.ad.immersed
    with pytest.raises(ContractViolation, match="(H)"):
        p_processes(model.es, model.sd)


def test_immersion_holds_for_stopped_family():
    scenario = load_fixture("family-independent")
    model = DefaultModel.from_built(scenario.built)
    assert check_immersion(model.es)
    assert p_processes(model.es, model.sd).stopped_gap == (0.0, 0.0)


def test_projections_coincide_with_predictable_shocks_only():
    scenario = load_fixture("family-independent")
    model = DefaultModel.from_built(scenario.built)
    assert len(model.sd.shocks) == 2
    assert projections_coincide(model.ad) == (True, True)


@pytest.mark.parametrize("seed", range(20))
def test_azema_identities_on_random_cox(seed):
    scenario = random_cox(seed)
    model = DefaultModel.from_built(scenario.built)
    assert check_immersion(model.es)
    assert set(azema_gaps(model.ad).values()) == {0.0}
    assert set(model.intensity.gaps.values()) == {0.0}
    assert set(check_projection_identities(model.es, model.ad, model.intensity).values()) == {0.0}
