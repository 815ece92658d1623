# tests/test_experiment.py
from pathlib import Path

import pytest

from defaultlab.config import get_settings
from defaultlab.errors import ConfigError, SingularityError
from defaultlab.fixtures.catalog import load_fixture
from defaultlab.main import load_config
from defaultlab.schemas.experiment import Backend, ExperimentConfig
from defaultlab.schemas.report import CheckStatus
from defaultlab.services.experiment import CHECKS, TABLE_NAMES, resolve_seed, run_experiment

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def make_config(fixture: str, **run) -> ExperimentConfig:
    return ExperimentConfig.model_validate({"name": fixture, "model": {"fixture": fixture}, "run": run})


def statuses(report):
    return {c.name: c.status for c in report.checks}


# ========== Фикстуры ==========

def test_geometric_run_passes():
    report = run_experiment(make_config("geometric-zero-recovery"))
    assert report.ok
    assert [c.name for c in report.checks] == list(load_fixture("geometric-zero-recovery").checks)
    assert report.summary["S_tilde_0"] == 0.25
    assert report.summary["P(tau<=N)"] == 0.75
    assert report.summary["E[pi_T]"] == 2.0
    assert [t.name for t in report.tables] == ["Z", "A", "a", "price"]
    assert [(r.time_index, r.shock_id, r.total_premium) for r in report.premium] == [(1, 0, 1.0), (2, 0, 1.0)]


def test_kappa_shock_run_passes():
    report = run_experiment(make_config("kappa-shock"))
    assert report.ok and not report.skipped
    assert report.summary["S_tilde_0"] == 21 / 32


def test_jump_run_fails_only_naive_formula():
    report = run_experiment(make_config("jump-recovery-shock"))
    assert [c.name for c in report.failed] == ["naive_qtau_price"]
    naive = report.failed[0]
    assert "0.03125" in naive.detail and "1/32" in naive.detail
    assert report.sampling == "previous"
    assert report.summary["S_tilde_0"] == 19 / 32


def test_every_check_reported_once():
    report = run_experiment(make_config("jump-recovery-shock"))
    names = [c.name for c in report.checks]
    assert len(names) == len(set(names))


def test_unstopped_family_fails_immersion():
    report = run_experiment(make_config("family-not-stopped"))
    immersion = statuses(report)["immersion"]
    assert immersion == CheckStatus.failed
    assert not report.ok
    assert report.failed[0].node is not None


@pytest.mark.parametrize("fixture, expected", [
    ("coupon-bond", CheckStatus.passed),
    ("random-cox", CheckStatus.passed),
    ("random-cox-predictable", CheckStatus.failed),
])
def test_loss_verdicts(fixture, expected):
    report = run_experiment(make_config(fixture, checks=["loss_no_predictable"]))
    assert statuses(report)["loss_no_predictable"] == expected


def test_predictable_default_premium_skips_formula():
    report = run_experiment(make_config("predictable-default"))
    assert report.ok
    routes = next(c for c in report.checks if c.name == "premium_routes")
    assert routes.detail and "ΔΛ = 1" in routes.detail
    assert report.summary["E[pi_T]"] == 0.0


def test_inapplicable_check_is_skipped_with_reason():
    report = run_experiment(make_config("coupon-bond", checks=["masking"]))
    assert statuses(report)["masking"] == CheckStatus.skipped
    assert report.checks[0].detail.startswith("неприменима")
    assert report.ok and report.failed == []


def test_immersion_only_identities_skip_without_immersion():
    checks = ["immersion", "p_stopped", "survival_identity", "projection_equality",
              "compensator_assembly", "azema_martingales"]
    report = run_experiment(make_config("family-not-stopped", checks=checks))
    got = statuses(report)
    assert got["immersion"] == CheckStatus.failed
    assert got["azema_martingales"] == CheckStatus.passed
    for name in ("p_stopped", "survival_identity", "projection_equality", "compensator_assembly"):
        assert got[name] == CheckStatus.skipped, name
    assert [c.name for c in report.failed] == ["immersion"]
    assert {c.name for c in report.skipped} == set(checks[1:5])


def test_empty_check_list_builds_tables_only():
    report = run_experiment(make_config("geometric-zero-recovery", checks=[]))
    assert report.checks == []
    assert report.ok
    assert report.tables


def test_identities_only_skips_tables():
    report = run_experiment(make_config("geometric-zero-recovery"), identities_only=True)
    assert report.checks
    assert report.summary == {} and report.tables == [] and report.premium == []


def test_measure_table_propagates_singularity():
    config = ExperimentConfig.model_validate({
        "model": {"fixture": "predictable-default"},
        "run": {"checks": []},
        "output": {"tables": ["D"]},
    })
    with pytest.raises(SingularityError):
        run_experiment(config)


# ========== Ошибки конфигурации ==========

def test_unknown_check_rejected():
    with pytest.raises(ConfigError, match="nonsense"):
        run_experiment(make_config("geometric-zero-recovery", checks=["nonsense"]))


def test_unknown_table_rejected():
    config = ExperimentConfig.model_validate({"model": {"fixture": "geometric-zero-recovery"},
                                              "output": {"tables": ["Q"]}})
    with pytest.raises(ConfigError):
        run_experiment(config)


def test_unknown_fixture_rejected():
    with pytest.raises(ConfigError, match="no-such"):
        run_experiment(make_config("no-such"))


def test_mc_requires_seed():
    with pytest.raises(ConfigError, match="зерна"):
        run_experiment(make_config("jump-recovery-shock", backend="mc"))


def test_seed_precedence(monkeypatch):
    config = make_config("jump-recovery-shock", seed=3)
    assert resolve_seed(config) == 3
    monkeypatch.setenv("DEFAULTLAB_SEED", "5")
    get_settings.cache_clear()
    assert resolve_seed(config) == 5
    assert resolve_seed(config, 7) == 7


def test_registry_covers_table_names():
    assert "refinement_ladder" in CHECKS and "mc_consistency" in CHECKS
    assert set(TABLE_NAMES) >= {"Z", "A", "a", "price", "premium", "D"}


# ========== Лестница и Монте-Карло ==========

def test_ladder_run():
    report = run_experiment(make_config("geometric-zero-recovery", ladder=[8, 16, 32], checks=["refinement_ladder"]))
    assert [r.horizon for r in report.ladder] == [8, 16, 32]
    assert report.ok


def test_monte_carlo_run():
    report = run_experiment(
        make_config("jump-recovery-shock", checks=["mc_consistency"], workers=2),
        seed=11, backend=Backend.mc, paths=4000,
    )
    assert report.seed == 11 and report.backend == "mc"
    assert [e.name for e in report.monte_carlo] == ["P(tau<=1)", "P(tau<=2)", "S_tilde_0", "E[pi_T]"]
    assert all(e.paths == 4000 and e.exact is not None for e in report.monte_carlo)


# ========== Явная модель ==========

def test_inline_model_identities():
    config = load_config(CONFIGS / "inline_general.toml")
    config.run.checks = [
        "construction_exactness", "s_law_sum", "masking", "qtau_price", "premium_routes", "premium_split",
    ]
    report = run_experiment(config, identities_only=True)
    assert report.ok, [c for c in report.failed]
