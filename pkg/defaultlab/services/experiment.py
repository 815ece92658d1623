# defaultlab/services/experiment.py
"""
Прогон эксперимента: модель -> расширение -> Азема/компенсатор -> цена ->
премия, реестр проверок тождеств и сборка RunReport.

Каждая проверка - функция RunContext -> CheckResult, зарегистрированная
декоратором @check. Неприменимая проверка (нет требования, нет (H),
нет построенного момента) даёт SKIP с причиной, а не исключение.
"""
import logging
import time
from dataclasses import dataclass
from functools import cached_property
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np

from defaultlab.config import get_settings
from defaultlab.errors import ConfigError, ContractViolation, RangeError
from defaultlab.fixtures.catalog import Scenario, inline_scenario, load_fixture
from defaultlab.fixtures.trees import coupon_bond_gains
from defaultlab.models.process import AdaptedProcess, Level
from defaultlab.schemas.experiment import Backend, ExperimentConfig
from defaultlab.schemas.report import (
    CheckResult,
    CheckStatus,
    LadderRung,
    McEstimate,
    PremiumRow,
    ProcessTable,
    RunReport,
    TableRow,
)
from defaultlab.services.construct import built_gap, refinement_study
from defaultlab.services.enlargement import (
    azema_gaps,
    check_immersion,
    check_projection_identities,
    p_processes,
    projections_coincide,
)
from defaultlab.services.kernel import MartingaleCheck, check_duality, condition, expectation
from defaultlab.services.montecarlo import (
    PathEnsemble,
    estimate_default_probability,
    estimate_premium,
    estimate_price,
    root_view,
    simulate_paths,
)
from defaultlab.services.premium import PremiumReport, credit_spread, risk_premium, shock_free_premium
from defaultlab.services.pricing import (
    DefaultModel,
    classic_price,
    loss_no_predictable_check,
    masking_gap,
    measure_change,
    predefault_price,
    price_brute,
    price_via_Qtau,
    value_process,
)
from defaultlab.utils import numeric as num

logger = logging.getLogger(__name__)

DEFAULT_LADDER = (8, 16, 32, 64)
# Допустимое отношение ошибок соседних ступеней лестницы: 2 ± 20%
LADDER_RATIO = (1.6, 2.4)


# ========== Контекст прогона ==========

@dataclass
class RunContext:
    """Сценарий и лениво вычисляемые объекты прогона."""
    config: ExperimentConfig
    scenario: Scenario
    seed: Optional[int] = None
    backend: Backend = Backend.exact
    paths: int = 20000

    @property
    def exact(self) -> bool:
        return self.scenario.tree.exact

    @property
    def eps_mart(self) -> float:
        return 0.0 if self.exact else self.config.tolerances.eps_mart

    @property
    def eps_sum(self) -> float:
        return 0.0 if self.exact else self.config.tolerances.eps_sum

    @cached_property
    def model(self) -> DefaultModel:
        sc = self.scenario
        if sc.built is not None:
            return DefaultModel.from_built(sc.built)
        return DefaultModel.from_time(sc.tau, candidates=sc.candidates or None)

    def require_claim(self) -> None:
        if self.scenario.claim is None or self.scenario.rates is None:
            raise ContractViolation("в сценарии нет требования")

    def require_immersion(self) -> None:
        """Тождества через шоки и проекции выведены при (H)."""
        if not self.model.ad.immersed:
            raise ContractViolation("тождество выведено при (H), а иммерсия не выполнена")

    @cached_property
    def price(self) -> AdaptedProcess:
        self.require_claim()
        return predefault_price(self.scenario.claim, self.model, self.scenario.rates)

    @cached_property
    def brute(self) -> AdaptedProcess:
        self.require_claim()
        return price_brute(self.scenario.claim, self.model, self.scenario.rates)

    @cached_property
    def qtau(self):
        self.require_claim()
        return price_via_Qtau(self.scenario.claim, self.model, self.scenario.rates)

    @cached_property
    def premium(self) -> PremiumReport:
        self.require_claim()
        return risk_premium(self.scenario.claim, self.model, self.scenario.rates)

    @cached_property
    def ensemble(self) -> PathEnsemble:
        built = self.scenario.built
        if built is None:
            raise ContractViolation("Монте-Карло требует построенного момента дефолта")
        if self.seed is None:
            raise ContractViolation("Монте-Карло требует зерна (--seed, DEFAULTLAB_SEED или run.seed)")
        return simulate_paths(built, self.paths, self.seed, self.config.run.workers)

    @cached_property
    def ladder(self) -> List[LadderRung]:
        rungs = refinement_study(self.config.run.ladder or DEFAULT_LADDER)
        return [LadderRung(horizon=r.horizon, max_error=r.max_error, ratio=r.ratio) for r in rungs]


# ========== Реестр проверок ==========

CheckFn = Callable[[RunContext], CheckResult]
CHECKS: Dict[str, CheckFn] = {}


def check(name: str) -> Callable[[CheckFn], CheckFn]:
    def register(fn: CheckFn) -> CheckFn:
        CHECKS[name] = fn
        return fn
    return register


def _verdict(name: str, gap: float, tolerance: float, node: Any = None, detail: Optional[str] = None) -> CheckResult:
    ok = gap <= tolerance
    return CheckResult(
        name=name,
        status=CheckStatus.passed if ok else CheckStatus.failed,
        max_error=float(gap),
        tolerance=tolerance,
        node=None if node is None or ok else str(node),
        detail=detail,
    )


def _martingale_verdict(name: str, result: MartingaleCheck, tolerance: float, detail: Optional[str] = None) -> CheckResult:
    return CheckResult(
        name=name,
        status=CheckStatus.passed if result else CheckStatus.failed,
        max_error=result.worst_error,
        tolerance=tolerance,
        node=None if result.node is None else str(result.node),
        detail=detail,
    )


def _gap_to(a: np.ndarray, b: np.ndarray, maturity: int) -> Tuple[float, Optional[Tuple[int, int]]]:
    """max_{n<=T} |a_n - b_n| и худший узел."""
    diff = num.to_float(np.abs(a[: maturity + 1] - b[: maturity + 1]))
    if diff.size == 0:
        return 0.0, None
    n, k = np.unravel_index(int(np.argmax(diff)), diff.shape)
    return float(diff[n, k]), (int(n), int(k))


@check("duality")
def _duality(ctx: RunContext) -> CheckResult:
    tree, tau = ctx.model.tree, ctx.model.tau
    A = tau.indicator()
    rows = np.minimum(tau.value, tree.horizon + 1)
    X = np.tile(num.coerce(rows, ctx.exact), (tree.horizon + 1, 1))
    gap = 0.0
    for mode in ("optional", "predictable"):
        lhs, rhs = check_duality(A, X, mode, tree)
        gap = max(gap, abs(float(lhs - rhs)))
    return _verdict("duality", gap, ctx.eps_mart, detail="A = 1_{τ<=·}, X = τ∧(N+1)")


@check("tower")
def _tower(ctx: RunContext) -> CheckResult:
    tree, tau = ctx.model.tree, ctx.model.tau
    X = num.coerce(np.minimum(tau.value, tree.horizon + 1), ctx.exact)
    gap = 0.0
    for m in range(tree.horizon + 1):
        inner = condition(X, m, tree)
        for n in range(m + 1):
            gap = max(gap, num.max_abs(condition(inner, n, tree) - condition(X, n, tree)))
    return _verdict("tower", gap, ctx.eps_mart)


@check("immersion")
def _immersion(ctx: RunContext) -> CheckResult:
    return _martingale_verdict("immersion", check_immersion(ctx.model.es, ctx.config.tolerances.eps_mart), ctx.eps_mart)


def _azema(ctx: RunContext, name: str, keys: Tuple[str, ...], detail: str, immersed: bool = True) -> CheckResult:
    if immersed:
        ctx.require_immersion()
    gaps = azema_gaps(ctx.model.ad)
    return _verdict(name, max(gaps[k] for k in keys), ctx.eps_mart, detail=detail)


@check("survival_identity")
def _survival_identity(ctx: RunContext) -> CheckResult:
    return _azema(ctx, "survival_identity", ("survival", "idiosyncratic"), "Z + A^τ = 1, Z^0 + A^0 = 1")


@check("survival_shock_form")
def _survival_shock_form(ctx: RunContext) -> CheckResult:
    return _azema(ctx, "survival_shock_form", ("shock_survival",), "Z = 1 - Σ p^i_{T^i} 1_{T^i<=n} - A^0")


@check("a_assembly")
def _a_assembly(ctx: RunContext) -> CheckResult:
    return _azema(ctx, "a_assembly", ("a_assembly", "nhat"), "Δa^τ = Σ w^i + Δa^0, 1 - N̂ - a^τ = Z")


@check("nhat_martingale")
def _nhat_martingale(ctx: RunContext) -> CheckResult:
    return _azema(ctx, "nhat_martingale", ("nhat_martingale", "nhat_identity"), "N̂ = A^τ - a^τ, мартингал в F")


@check("azema_martingales")
def _azema_martingales(ctx: RunContext) -> CheckResult:
    return _azema(ctx, "azema_martingales", ("mu_martingale", "m_martingale"), "μ = A^τ + Z и m", immersed=False)


@check("projection_equality")
def _projection_equality(ctx: RunContext) -> CheckResult:
    ctx.require_immersion()
    equal, predictable = projections_coincide(ctx.model.ad)
    return CheckResult(
        name="projection_equality",
        status=CheckStatus.passed if equal == predictable else CheckStatus.failed,
        detail=f"A^τ = a^τ: {'да' if equal else 'нет'}; заряженные шоки предсказуемы: {'да' if predictable else 'нет'}",
    )


@check("projection_identities")
def _projection_identities(ctx: RunContext) -> CheckResult:
    ctx.require_immersion()
    m = ctx.model
    gaps = check_projection_identities(m.es, m.ad, m.intensity)
    return _verdict("projection_identities", max(gaps.values()), ctx.eps_mart)


@check("intensity_martingale")
def _intensity_martingale(ctx: RunContext) -> CheckResult:
    gap = ctx.model.intensity.gaps["n_martingale"]
    return _verdict("intensity_martingale", gap, ctx.eps_mart, detail="1_{τ<=·} - Λ мартингал в G")


@check("compensator_assembly")
def _compensator_assembly(ctx: RunContext) -> CheckResult:
    ctx.require_immersion()
    return _verdict("compensator_assembly", ctx.model.intensity.gaps["shock_assembly"], ctx.eps_mart)


@check("intensity_f_form")
def _intensity_f_form(ctx: RunContext) -> CheckResult:
    ctx.require_immersion()
    return _verdict("intensity_f_form", ctx.model.intensity.gaps["intensity_f_form"], ctx.eps_mart)


@check("p_stopped")
def _p_stopped(ctx: RunContext) -> CheckResult:
    m = ctx.model
    pp = p_processes(m.es, m.sd)
    gap = max(pp.stopped_gap, default=0.0)
    return _verdict("p_stopped", gap, ctx.eps_mart, detail=f"шоков: {len(pp.p)}")


@check("shock_reassembly")
def _shock_reassembly(ctx: RunContext) -> CheckResult:
    sd = ctx.model.sd
    mismatched = int(np.count_nonzero(sd.reassemble() != sd.tau.value))
    return _verdict("shock_reassembly", float(mismatched), 0.0, detail="число листьев с расхождением")


@check("construction_exactness")
def _construction_exactness(ctx: RunContext) -> CheckResult:
    built = ctx.scenario.built
    if built is None:
        raise ContractViolation("нет построенного момента")
    return _verdict("construction_exactness", built_gap(built), ctx.eps_mart, detail="P(τ <= n | F_n) = A_n")


@check("s_law_sum")
def _s_law_sum(ctx: RunContext) -> CheckResult:
    built = ctx.scenario.built
    if built is None or built.q is None:
        raise ContractViolation("нет условного закона S")
    return _verdict("s_law_sum", num.max_abs(built.q.sum(axis=0) - 1), ctx.eps_sum)


@check("masking")
def _masking(ctx: RunContext) -> CheckResult:
    T = ctx.scenario.claim.maturity if ctx.scenario.claim else 0
    gap = masking_gap(ctx.brute, ctx.price, ctx.model, T)
    return _verdict("masking", gap, ctx.eps_mart, detail="1_{τ>n} S_n = 1_{τ>n} S~_n")


@check("qtau_price")
def _qtau_price(ctx: RunContext) -> CheckResult:
    gap, node = _gap_to(ctx.qtau.price.values, ctx.price.values, ctx.scenario.claim.maturity)
    return _verdict("qtau_price", gap, ctx.eps_mart, node=node)


@check("naive_qtau_price")
def _naive_qtau_price(ctx: RunContext) -> CheckResult:
    gap, node = _gap_to(ctx.qtau.naive.values, ctx.price.values, ctx.scenario.claim.maturity)
    gap0 = ctx.qtau.naive_gap[0, 0]
    detail = f"формула только с компенсатором; расхождение в момент 0: {num.fmt(gap0)}"
    if ctx.exact:
        detail += f" (= {gap0})"
    return _verdict("naive_qtau_price", gap, ctx.eps_mart, node=node, detail=detail)


@check("classic_price")
def _classic_price(ctx: RunContext) -> CheckResult:
    sc = ctx.scenario
    classic = classic_price(sc.claim, ctx.model, sc.rates)
    gap, node = _gap_to(classic.values, ctx.price.values, sc.claim.maturity)
    return _verdict("classic_price", gap, ctx.eps_mart, node=node)


@check("measure_change")
def _measure_change(ctx: RunContext) -> CheckResult:
    T = ctx.scenario.claim.maturity if ctx.scenario.claim else ctx.model.horizon
    mc = measure_change(ctx.model, T)
    gap = max(mc.martingale.worst_error, mc.exponential_gap)
    return _verdict("measure_change", gap, ctx.eps_mart, node=mc.martingale.node,
                    detail="D мартингал и равен стохастической экспоненте")


@check("premium_routes")
def _premium_routes(ctx: RunContext) -> CheckResult:
    pr = ctx.premium
    skipped = int(np.count_nonzero(~pr.formula_defined[1: pr.maturity + 1]))
    detail = f"узлов без формулы (ΔΛ = 1): {skipped}" if skipped else None
    return _verdict("premium_routes", pr.gaps["routes"], ctx.eps_mart, detail=detail)


@check("premium_split")
def _premium_split(ctx: RunContext) -> CheckResult:
    return _verdict("premium_split", ctx.premium.gaps["split"], ctx.eps_mart)


@check("drift_reconstruction")
def _drift_reconstruction(ctx: RunContext) -> CheckResult:
    return _verdict("drift_reconstruction", ctx.premium.gaps["reconstruction"], ctx.eps_mart,
                    detail="ΔS~/S~_- = r Δt + Δπ + ΔM")


@check("orthogonality")
def _orthogonality(ctx: RunContext) -> CheckResult:
    pr = ctx.premium
    od = pr.decomposition
    gap = max(pr.gaps["decomposition"], pr.gaps["orthogonality"], pr.gaps["phi_routes"])
    gap = max([gap] + [c.worst_error for c in od.martingales.values()])
    return _verdict("orthogonality", gap, ctx.eps_mart)


@check("shock_free_premium")
def _shock_free_premium(ctx: RunContext) -> CheckResult:
    sc = ctx.scenario
    closed = shock_free_premium(sc.claim, ctx.model, sc.rates)
    gap, node = _gap_to(closed, ctx.premium.dpi, sc.claim.maturity)
    return _verdict("shock_free_premium", gap, ctx.eps_mart, node=node)


@check("spread_identity")
def _spread_identity(ctx: RunContext) -> CheckResult:
    sc = ctx.scenario
    cs = credit_spread(sc.claim, ctx.model, sc.rates)
    if not cs.zero_recovery:
        raise ContractViolation("тождество спреда выполняется только при нулевом возмещении")
    return _verdict("spread_identity", cs.identity_gap, ctx.eps_mart, detail=f"режим {cs.mode.value}")


@check("loss_no_predictable")
def _loss_no_predictable(ctx: RunContext) -> CheckResult:
    sc = ctx.scenario
    es = ctx.model.es
    if sc.loss_price == "coupon":
        price = coupon_bond_gains(es)
    elif sc.loss_price == "value":
        ctx.require_claim()
        price = value_process(sc.claim, ctx.model, sc.rates)
    else:
        raise ContractViolation("в сценарии нет процесса цены для проверки потерь")
    verdict = loss_no_predictable_check(price, es)
    detail = f"(L) {'выполнено' if verdict.loss_holds else 'нарушено'}"
    if not verdict.passed:
        detail += f"; предсказуемая часть на {int(verdict.predictable_part.sum())} листьях"
    return CheckResult(
        name="loss_no_predictable",
        status=CheckStatus.passed if verdict.passed else CheckStatus.failed,
        detail=detail,
    )


@check("mc_consistency")
def _mc_consistency(ctx: RunContext) -> CheckResult:
    estimates = monte_carlo_estimates(ctx)
    missed = [e.name for e in estimates if e.within_band is False]
    worst = max((abs(e.value - e.exact) for e in estimates if e.exact is not None), default=0.0)
    return CheckResult(
        name="mc_consistency",
        status=CheckStatus.failed if missed else CheckStatus.passed,
        max_error=worst,
        detail=("вне полосы 3σ: " + ", ".join(missed)) if missed else f"оценок: {len(estimates)}",
    )


@check("refinement_ladder")
def _refinement_ladder(ctx: RunContext) -> CheckResult:
    lo, hi = LADDER_RATIO
    ratios = [r.ratio for r in ctx.ladder[1:]]
    bad = [r for r in ratios if r is None or not lo <= r <= hi]
    return CheckResult(
        name="refinement_ladder",
        status=CheckStatus.failed if bad or not ratios else CheckStatus.passed,
        max_error=ctx.ladder[-1].max_error,
        detail="отношения ошибок: " + ", ".join("-" if r is None else f"{r:.4f}" for r in ratios),
    )


def run_check(name: str, ctx: RunContext) -> CheckResult:
    """Выполнить проверку; неприменимая проверка даёт SKIP с причиной."""
    try:
        result = CHECKS[name](ctx)
    except (ContractViolation, RangeError) as e:
        logger.info(f"Проверка {name} неприменима: {e}")
        return CheckResult(name=name, status=CheckStatus.skipped, detail=f"неприменима: {e}")
    logger.debug(f"Проверка {name}: {result.status.value}")
    return result


# ========== Таблицы и Монте-Карло ==========

def _table_sources(ctx: RunContext) -> Dict[str, Callable[[], np.ndarray]]:
    m = ctx.model
    return {
        "Z": lambda: m.ad.Z.values,
        "A": lambda: m.ad.Adual.values,
        "a": lambda: m.ad.adual.values,
        "mu": lambda: m.ad.mu.values,
        "m": lambda: m.ad.m.values,
        "Nhat": lambda: m.ad.Nhat.values,
        "Z0": lambda: m.ad.Z0.values,
        "hazard": lambda: m.intensity.hazard,
        "price": lambda: ctx.price.values,
        "premium": lambda: ctx.premium.pi,
        "D": lambda: measure_change(m, ctx.scenario.claim.maturity if ctx.scenario.claim else None).D.values,
    }


TABLE_NAMES = ("Z", "A", "a", "mu", "m", "Nhat", "Z0", "hazard", "price", "premium", "D")


def process_table(name: str, values: np.ndarray, ctx: RunContext) -> ProcessTable:
    process = AdaptedProcess(values, ctx.model.tree, Level.optional, name=name)
    rows = [
        TableRow(time_index=n, atom_id=a, value=float(v), exact=str(v) if ctx.exact else None)
        for n, a, v in process.table()
    ]
    return ProcessTable(name=name, filtration="F", rows=rows)


def build_tables(ctx: RunContext) -> List[ProcessTable]:
    sources = _table_sources(ctx)
    tables = []
    for name in ctx.config.output.tables:
        try:
            tables.append(process_table(name, sources[name](), ctx))
        except ContractViolation as e:
            logger.warning(f"Таблица {name} пропущена: {e}")
    return tables


def premium_rows(ctx: RunContext) -> List[PremiumRow]:
    if ctx.scenario.claim is None:
        return []
    try:
        rows = ctx.premium.expectations()
    except ContractViolation as e:
        logger.warning(f"Разложение премии пропущено: {e}")
        return []
    return [
        PremiumRow(
            time_index=r["time_index"],
            total_premium=float(r["total_premium"]),
            idiosyncratic=float(r["idiosyncratic"]),
            shock_id=r["shock_id"],
            shock_premium=float(r["shock_premium"]),
        )
        for r in rows
    ]


def monte_carlo_estimates(ctx: RunContext) -> List[McEstimate]:
    """P(τ <= n) для n = 1..N, а при наличии требования S~_0 и E[π_T]."""
    ens = ctx.ensemble
    m = ctx.model
    out = [
        estimate_default_probability(ens, n, exact=expectation(num.indicator(m.tau.le()[n], m.exact), m.tree))
        for n in range(1, m.horizon + 1)
    ]
    sc = ctx.scenario
    if sc.claim is not None:
        out.append(estimate_price(ens, sc.claim, sc.rates, exact=ctx.price.values[0, 0]))
        try:
            pi = ctx.premium.pi
        except ContractViolation as e:
            logger.warning(f"Оценка премии пропущена: {e}")
        else:
            T = sc.claim.maturity
            out.append(estimate_premium(ens, root_view(pi, m.tree), T, exact=expectation(pi[T], m.tree)))
    return out


def _summary(ctx: RunContext) -> Dict[str, float]:
    m = ctx.model
    summary = {"P(tau<=N)": float(expectation(num.indicator(m.tau.finite, m.exact), m.tree))}
    if ctx.scenario.claim is not None:
        summary["S_tilde_0"] = float(ctx.price.values[0, 0])
        try:
            summary["E[pi_T]"] = float(expectation(ctx.premium.pi[ctx.scenario.claim.maturity], m.tree))
        except ContractViolation:
            pass
    return summary


# ========== Прогон ==========

def load_scenario(config: ExperimentConfig) -> Scenario:
    if config.model.fixture is not None:
        return load_fixture(config.model.fixture)
    return inline_scenario(config.model)


def resolve_seed(config: ExperimentConfig, seed: Optional[int] = None) -> Optional[int]:
    """Флаг --seed, затем DEFAULTLAB_SEED, затем run.seed."""
    if seed is not None:
        return seed
    env_seed = get_settings().SEED
    if env_seed is not None:
        return env_seed
    return config.run.seed


def run_experiment(
    config: ExperimentConfig,
    seed: Optional[int] = None,
    backend: Optional[Backend] = None,
    paths: Optional[int] = None,
    identities_only: bool = False,
) -> RunReport:
    """
    Выполнить эксперимент и собрать отчёт.

    Args:
        config: разобранный документ эксперимента.
        seed: зерно из командной строки (приоритетнее окружения и документа).
        backend: переопределение run.backend.
        paths: переопределение run.paths.
        identities_only: только проверки, без таблиц, премии, лестницы и МК.

    Returns:
        RunReport; каждая запрошенная проверка встречается ровно один раз.

    Raises:
        ConfigError: неизвестная фикстура, проверка или таблица; mc без зерна.
        SingularityError, ConsistencyError: ошибки вычислений (с узлом).
    """
    started = time.perf_counter()
    timing: Dict[str, float] = {}
    backend = Backend(backend or config.run.backend)
    seed = resolve_seed(config, seed)
    if backend == Backend.mc and seed is None:
        raise ConfigError("backend = mc требует зерна: --seed, DEFAULTLAB_SEED или run.seed")
    unknown_tables = [t for t in config.output.tables if t not in TABLE_NAMES]
    if unknown_tables:
        raise ConfigError(f"output.tables: неизвестные процессы {unknown_tables}; доступны: {', '.join(TABLE_NAMES)}")

    scenario = load_scenario(config)
    names = list(scenario.checks) if config.run.checks is None else list(config.run.checks)
    unknown = [n for n in names if n not in CHECKS]
    if unknown:
        raise ConfigError(f"run.checks: неизвестные проверки {unknown}")

    ctx = RunContext(config=config, scenario=scenario, seed=seed, backend=backend,
                     paths=paths or config.run.paths)
    logger.info(f"Эксперимент {config.name}: сценарий {scenario.name}, backend {backend.value}, проверок {len(names)}")
    stage = time.perf_counter()
    logger.debug(f"Модель: горизонт {ctx.model.horizon}, шоков {len(ctx.model.ad.shocks)}")
    timing["model"] = time.perf_counter() - stage

    stage = time.perf_counter()
    checks = [run_check(name, ctx) for name in names]
    timing["checks"] = time.perf_counter() - stage

    report = RunReport(
        name=config.name,
        config=config.model_dump(mode="json"),
        backend=backend.value,
        seed=seed,
        sampling=scenario.built.sampling.value if scenario.built is not None and scenario.built.sampling else None,
        checks=checks,
    )
    if not identities_only:
        stage = time.perf_counter()
        report.summary = _summary(ctx)
        report.tables = build_tables(ctx)
        report.premium = premium_rows(ctx)
        timing["tables"] = time.perf_counter() - stage
        if config.run.ladder:
            stage = time.perf_counter()
            report.ladder = ctx.ladder
            timing["ladder"] = time.perf_counter() - stage
        if backend == Backend.mc:
            stage = time.perf_counter()
            report.monte_carlo = monte_carlo_estimates(ctx)
            timing["monte_carlo"] = time.perf_counter() - stage
    timing["total"] = time.perf_counter() - started
    report.timing = timing

    failed, skipped = report.failed, report.skipped
    logger.info(
        f"Эксперимент {config.name} завершён: {len(checks) - len(failed) - len(skipped)} PASS, "
        f"{len(failed)} FAIL, {len(skipped)} SKIP "
        f"за {timing['total']:.3f} с"
    )
    return report
