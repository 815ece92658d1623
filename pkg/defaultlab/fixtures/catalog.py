# defaultlab/fixtures/catalog.py
"""
Именованные модели для экспериментов ("list-fixtures").

Каждая фикстура строит Scenario: момент дефолта на дереве (с результатом
конструкции, если он есть), требование, ставки и список проверок по
умолчанию.
"""
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np

from defaultlab.errors import ConfigError
from defaultlab.models.claim import DefaultableClaim, DiscountMode, RatesSpec
from defaultlab.models.process import RandomTime
from defaultlab.models.tree import ScenarioTree
from defaultlab.schemas.experiment import ModelSpec
from defaultlab.services.construct import (
    BuiltTime,
    ConstructionMode,
    ConstructionSpec,
    SamplingIndex,
    ShockSpec,
    construct_tau,
    cox_construct,
    family_construct,
)
from defaultlab.utils import numeric as num
from defaultlab.fixtures.trees import (
    binomial_tree,
    coupon_tree,
    deterministic_time,
    first_step_up,
    random_increasing,
    random_tree,
    step_up,
    time_on,
)

logger = logging.getLogger(__name__)

HALF, QUARTER, EIGHTH = Fraction(1, 2), Fraction(1, 4), Fraction(1, 8)

PRICING_CHECKS = (
    "masking", "qtau_price", "measure_change", "premium_routes", "premium_split",
    "drift_reconstruction", "orthogonality",
)
STRUCTURE_CHECKS = (
    "duality", "tower", "immersion", "survival_identity", "survival_shock_form", "a_assembly",
    "nhat_martingale", "azema_martingales", "projection_equality", "projection_identities",
    "intensity_martingale", "compensator_assembly", "intensity_f_form",
    "p_stopped", "shock_reassembly",
)


@dataclass
class Scenario:
    """Готовая модель: τ на дереве, требование и ставки."""
    name: str
    tau: RandomTime
    built: Optional[BuiltTime] = None
    candidates: Tuple[RandomTime, ...] = ()
    claim: Optional[DefaultableClaim] = None
    rates: Optional[RatesSpec] = None
    checks: Tuple[str, ...] = ()
    expected: Dict[str, Any] = field(default_factory=dict)
    loss_price: Optional[str] = None

    @property
    def tree(self) -> ScenarioTree:
        return self.tau.tree

    @property
    def root(self) -> ScenarioTree:
        return self.tau.tree.root


@dataclass(frozen=True)
class Fixture:
    name: str
    description: str
    factory: Callable[[], Scenario]


def _zero_rates(tree: ScenarioTree) -> RatesSpec:
    return RatesSpec.constant(tree, 0)


def _built_scenario(name: str, built: BuiltTime, claim: Optional[DefaultableClaim], checks, **kwargs) -> Scenario:
    rates = _zero_rates(built.root) if claim is not None else None
    return Scenario(name=name, tau=built.tau, built=built, candidates=built.candidates,
                    claim=claim, rates=rates, checks=tuple(checks), **kwargs)


# ========== Фикстуры ==========

def geometric_zero_recovery() -> Scenario:
    """Тривиальное дерево N = 2, Кокс с A = (0, 1/2, 3/4): Z = (1, 1/2, 1/4), S~_0 = 1/4."""
    tree = ScenarioTree.trivial(2)
    built = cox_construct(tree, [[0], [HALF], [Fraction(3, 4)]], m=4)
    claim = DefaultableClaim.build(tree, payment=1, maturity=2, base_recovery=0, name="zero-recovery")
    checks = STRUCTURE_CHECKS + PRICING_CHECKS + (
        "classic_price", "shock_free_premium", "spread_identity", "loss_no_predictable",
    )
    return _built_scenario("geometric-zero-recovery", built, claim, checks,
                           expected={"S~_0": QUARTER, "premium": 1}, loss_price="value")


def _jump_spec(tree: ScenarioTree) -> Tuple[ConstructionSpec, RandomTime]:
    T1 = time_on(tree, first_step_up(tree), 1, name="T1")
    A_c = np.array([[0] * tree.size, [QUARTER] * tree.size, [HALF] * tree.size], dtype=object)
    return ConstructionSpec(tree=tree, A_c=A_c, shocks=(ShockSpec(time=T1, jump=QUARTER),)), T1


def jump_recovery_claim(tree: ScenarioTree, T1: RandomTime, loss: Any = QUARTER) -> DefaultableClaim:
    """P = 1, T = 2, Ĉ = 1/2, возмещение падает на loss после шока T1."""
    return DefaultableClaim.build(tree, payment=1, maturity=2, base_recovery=HALF,
                                  shocks=(T1,), losses=(loss,), name="jump-recovery")


def jump_recovery_shock() -> Scenario:
    """
    Биномиальное дерево N = 2, шок T1 = 1 после шага u с массой 1/4, A^c = (0, 1/4, 1/2).
    Возмещение падает с 1/2 до 1/4 в момент шока: формула без поправки за шок
    ошибается на 1/32 в момент 0.
    """
    tree = binomial_tree(2)
    spec, T1 = _jump_spec(tree)
    built = construct_tau(spec, m=2)
    claim = jump_recovery_claim(tree, T1)
    checks = STRUCTURE_CHECKS + ("construction_exactness", "s_law_sum") + PRICING_CHECKS + ("naive_qtau_price",)
    return _built_scenario("jump-recovery-shock", built, claim, checks,
                           expected={"S~_0": Fraction(19, 32), "naive_gap": Fraction(1, 32),
                                     "premium": Fraction(13, 57)})


def two_shocks() -> Scenario:
    """Шок T1 = 1 после u (масса 1/4) и предсказуемый шок T2 = 2 после d (масса 1/4)."""
    tree = binomial_tree(2)
    up = first_step_up(tree)
    T1 = time_on(tree, up, 1, name="T1")
    T2 = time_on(tree, ~up, 2, name="T2")
    A_c = np.array([[0] * tree.size, [QUARTER] * tree.size, [HALF] * tree.size], dtype=object)
    spec = ConstructionSpec(tree=tree, A_c=A_c, shocks=(ShockSpec(T1, QUARTER), ShockSpec(T2, QUARTER)))
    built = construct_tau(spec, m=2)
    claim = DefaultableClaim.build(tree, payment=1, maturity=2, base_recovery=HALF,
                                   shocks=(T1, T2), losses=(QUARTER, EIGHTH), name="two-shock")
    checks = STRUCTURE_CHECKS + ("construction_exactness", "s_law_sum") + PRICING_CHECKS
    return _built_scenario("two-shocks", built, claim, checks)


def three_way_tree() -> ScenarioTree:
    """Первый шаг u/m/d с вероятностями 1/4, 1/4, 1/2, второй шаг u/d пополам."""
    paths = [(a, b) for a in "umd" for b in "ud"]
    first = {"u": QUARTER, "m": QUARTER, "d": HALF}
    return ScenarioTree.from_paths(paths, [first[a] * HALF for a, _ in paths])


def _kappa_spec(tree: ScenarioTree) -> Tuple[ConstructionSpec, RandomTime]:
    """Шок T1 = 1 после u или m; скачок A равен 1/4 после u и 1/8 после m."""
    first = np.array([name[:1] for name in tree.leaf_names])
    T1 = time_on(tree, first != "d", 1, name="T1")
    jump = np.array([QUARTER if f == "u" else EIGHTH for f in first], dtype=object)
    A_c = np.array([[0] * tree.size, [QUARTER] * tree.size, [HALF] * tree.size], dtype=object)
    return ConstructionSpec(tree=tree, A_c=A_c, shocks=(ShockSpec(time=T1, jump=jump),)), T1


def kappa_claim(tree: ScenarioTree, T1: RandomTime, kappa: Any = EIGHTH) -> DefaultableClaim:
    """Ĉ = 1/2, c = 1/8; в момент шока κ = +kappa после u и -kappa после m."""
    first = [name[:1] for name in tree.leaf_names]
    kappas = np.array([kappa if f == "u" else -kappa if f == "m" else 0 for f in first], dtype=object)
    return DefaultableClaim.build(tree, payment=1, maturity=2, base_recovery=HALF,
                                  shocks=(T1,), losses=(EIGHTH,), kappas=(kappas,), name="kappa-recovery")


def kappa_shock() -> Scenario:
    """
    Шок с κ != 0: возмещение после шока 3/8 - κ (u) и 3/8 + κ (m).
    S~_0 = 169/256 - κ/32, при κ = 1/8 равна 21/32, Δπ_1 = 8/45.
    """
    tree = three_way_tree()
    spec, T1 = _kappa_spec(tree)
    built = construct_tau(spec, m=2)
    claim = kappa_claim(tree, T1)
    checks = STRUCTURE_CHECKS + ("construction_exactness", "s_law_sum") + PRICING_CHECKS
    return _built_scenario("kappa-shock", built, claim, checks,
                           expected={"S~_0": Fraction(21, 32), "premium": Fraction(8, 45)})


def cox_binomial() -> Scenario:
    """Кокс на биномиальном дереве: A_1 = 1/4, A_2 = 1/2 после u и 3/4 после d; ставка 1/20."""
    tree = binomial_tree(2)
    up = first_step_up(tree)
    A = np.array([[0] * tree.size, [QUARTER] * tree.size,
                  [HALF if u else Fraction(3, 4) for u in up]], dtype=object)
    built = cox_construct(tree, A, m=4)
    claim = DefaultableClaim.build(tree, payment=1, maturity=2, base_recovery=Fraction(2, 5), name="cox-bond")
    checks = STRUCTURE_CHECKS + PRICING_CHECKS + ("classic_price", "shock_free_premium", "loss_no_predictable")
    scenario = _built_scenario("cox-binomial", built, claim, checks, loss_price="value")
    scenario.rates = RatesSpec.constant(tree, Fraction(1, 20))
    return scenario


def predictable_default() -> Scenario:
    """A = (0, 0, 1): τ = 2 на всех листьях, премия прямым путём равна нулю."""
    tree = ScenarioTree.trivial(2)
    built = cox_construct(tree, [[0], [0], [1]], m=4)
    claim = DefaultableClaim.build(tree, payment=1, maturity=2, base_recovery=HALF, name="predictable")
    return _built_scenario("predictable-default", built, claim,
                           ("masking", "classic_price", "premium_routes"),
                           expected={"premium": 0, "loss_verdict": "FAIL"}, loss_price="value")


def family_independent() -> Scenario:
    """Семейство T1 = 1, T2 = 2 с постоянным законом 1/2: (H) выполнена."""
    tree = ScenarioTree.trivial(2)
    times = (deterministic_time(tree, 1, "T1"), deterministic_time(tree, 2, "T2"))
    law = np.full((2, 3, 1), HALF, dtype=object)
    built = family_construct(tree, times, law)
    return _built_scenario("family-independent", built, None, ("immersion", "p_stopped", "tower"))


def family_not_stopped() -> Scenario:
    """Закон p1 = (1/2, 1/2, 1 после u на шаге 2 / 0 после d) не остановлен в T1 = 1: (H) нарушена."""
    tree = binomial_tree(2)
    times = (deterministic_time(tree, 1, "T1"), deterministic_time(tree, 2, "T2"))
    up2 = step_up(tree, 2)
    p1 = np.array([[HALF] * tree.size, [HALF] * tree.size, [Fraction(1) if u else Fraction(0) for u in up2]],
                  dtype=object)
    law = np.stack([p1, 1 - p1])
    built = family_construct(tree, times, law)
    return _built_scenario("family-not-stopped", built, None, ("immersion",),
                           expected={"immersion": "FAIL"})


def coupon_bond() -> Scenario:
    """Дефолт только в купонные даты с вероятностями (1/5, 3/10, 1/4): достижим, но не предсказуем."""
    _, tau = coupon_tree()
    return Scenario(name="coupon-bond", tau=tau, checks=("loss_no_predictable",), loss_price="coupon")


def random_cox(seed: int = 7, predictable: bool = False) -> Scenario:
    """Кокс на случайном дереве; predictable=True добавляет A_2 = 1 на атоме F_1."""
    tree = random_tree(seed, horizon=3)
    rng = np.random.default_rng(seed + 1)
    A = random_increasing(tree, rng, cap=Fraction(7, 8), force_one_at=2 if predictable else None)
    built = cox_construct(tree, A, m=4)
    claim = DefaultableClaim.build(tree, payment=1, maturity=3, base_recovery=0, name="random-cox")
    return _built_scenario("random-cox" + ("-predictable" if predictable else ""), built, claim,
                           ("duality", "tower", "loss_no_predictable"), loss_price="value",
                           expected={"loss_verdict": "FAIL" if predictable else "PASS"})


FIXTURES: Dict[str, Fixture] = {
    f.name: f
    for f in (
        Fixture("geometric-zero-recovery", "Кокс на тривиальном дереве, нулевое возмещение", geometric_zero_recovery),
        Fixture("jump-recovery-shock", "Шок со скачком возмещения; наивная формула ошибается", jump_recovery_shock),
        Fixture("two-shocks", "Два шока, один предсказуемый", two_shocks),
        Fixture("kappa-shock", "Шок со случайным скачком возмещения κ", kappa_shock),
        Fixture("cox-binomial", "Кокс на биномиальном дереве с ненулевой ставкой", cox_binomial),
        Fixture("predictable-default", "Момент дефолта с предсказуемой частью", predictable_default),
        Fixture("family-independent", "Семейство моментов с остановленным законом", family_independent),
        Fixture("family-not-stopped", "Семейство с неостановленным законом: (H) нарушена", family_not_stopped),
        Fixture("coupon-bond", "Дефолт в купонные даты: условие потерь", coupon_bond),
        Fixture("random-cox", "Кокс на случайном дереве без предсказуемой части", lambda: random_cox(7)),
        Fixture("random-cox-predictable", "Кокс на случайном дереве с предсказуемой частью",
                lambda: random_cox(7, predictable=True)),
    )
}


def list_fixtures() -> List[Fixture]:
    return list(FIXTURES.values())


def load_fixture(name: str) -> Scenario:
    """
    Raises:
        ConfigError: неизвестное имя фикстуры.
    """
    fixture = FIXTURES.get(name)
    if fixture is None:
        raise ConfigError(f"Неизвестная фикстура {name!r}; доступны: {', '.join(FIXTURES)}")
    logger.info(f"Загрузка фикстуры {name}")
    return fixture.factory()


def _number(value: Any, exact: bool) -> Any:
    value = num.exact_scalar(value)
    return value if exact else float(value)


def inline_scenario(model: ModelSpec) -> Scenario:
    """
    Модель из документа конфигурации (ModelSpec без fixture): детерминированный
    A^c (или A для Кокса), детерминированные моменты шоков, требование и ставки.
    """
    tree_spec = model.tree
    exact = tree_spec.exact
    if tree_spec.kind == "binomial":
        tree = binomial_tree(tree_spec.horizon, _number(tree_spec.up_prob, exact), exact=exact)
    elif tree_spec.kind == "random":
        tree = random_tree(tree_spec.seed, tree_spec.horizon, tree_spec.branching, exact=tree_spec.exact)
    else:
        tree = ScenarioTree.trivial(tree_spec.horizon, exact=tree_spec.exact)
    N = tree.horizon
    cs = model.construction
    if len(cs.target) != N + 1:
        raise ConfigError(f"construction.target: ожидалось {N + 1} значений, получено {len(cs.target)}")
    rows = np.array([[_number(v, exact)] * tree.size for v in cs.target], dtype=object)

    if cs.kind == "cox":
        built = cox_construct(tree, rows, m=cs.theta_levels)
    else:
        shocks = []
        for i, s in enumerate(cs.shocks, start=1):
            if not 1 <= s.time <= N:
                raise ConfigError(f"construction.shocks.{i - 1}.time: момент вне 1..{N}")
            shocks.append(ShockSpec(time=deterministic_time(tree, s.time, f"T{i}"), jump=_number(s.jump, exact)))
        spec = ConstructionSpec(tree=tree, A_c=rows, shocks=tuple(shocks))
        built = construct_tau(spec, m=cs.theta_levels, mode=ConstructionMode(cs.mode),
                              sampling=SamplingIndex(cs.sampling) if cs.sampling else None)

    claim = rates = None
    if model.claim is not None:
        c = model.claim
        shock_times = tuple(s.time for s in built.spec.shocks) if built.spec is not None else ()
        if c.maturity > N:
            raise ConfigError(f"claim.maturity: срок {c.maturity} больше горизонта {N}")
        claim = DefaultableClaim.build(
            tree,
            payment=_number(c.payment, exact),
            maturity=c.maturity,
            base_recovery=_number(c.recovery, exact),
            shocks=shock_times,
            losses=tuple(_number(x, exact) for x in c.losses),
            name="inline",
        )
        r = model.rates
        rates = RatesSpec.constant(tree, _number(r.rate, exact), _number(r.dt, exact), DiscountMode(r.mode))
    return Scenario(name=model.name or "inline", tau=built.tau, built=built, candidates=built.candidates,
                    claim=claim, rates=rates, checks=STRUCTURE_CHECKS + (PRICING_CHECKS if claim else ()),
                    loss_price="value" if claim else None)
