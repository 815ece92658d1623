# defaultlab/services/pricing.py
"""
Цены дефолтного требования X = (P, T, C):

- price_brute: S(X)_n = disc_n^{-1} E[P disc_T 1_{τ>T} + C_τ disc_τ 1_{τ<=T} | G_n];
- predefault_price: F-адаптированная S̃(X), совпадающая с S(X) на {τ > n};
- classic_price: формула с дисконтом R + Λ для предсказуемого возмещения;
- measure_change / price_via_Qtau: мера Q^τ и цена через неё с поправками h^i;
- loss_no_predictable_check: условие потерь и отсутствие предсказуемой части τ.

В режиме discrete-exact все формулы совпадают с ценой-оракулом точно.
"""
import logging
from dataclasses import dataclass
from typing import Any, Optional, Tuple, Union

import numpy as np

from defaultlab.config import EPS_MART
from defaultlab.errors import ContractViolation, SingularityError
from defaultlab.models.claim import DefaultableClaim, DiscountMode, RatesSpec
from defaultlab.models.process import AdaptedProcess, Level, RandomTime
from defaultlab.models.tree import Filtration, ScenarioTree
from defaultlab.services.construct import BuiltTime
from defaultlab.services.enlargement import (
    AzemaData,
    EnlargedSpace,
    IntensityData,
    azema_data,
    enlarge,
    g_compensator_and_intensity,
)
from defaultlab.services.kernel import MartingaleCheck, condition, condition_rows, increments, is_martingale
from defaultlab.services.stopping import ShockDecomposition, decompose_default_time, has_predictable_part
from defaultlab.utils import numeric as num

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class DefaultModel:
    """Расширенное пространство с разложением τ, данными Азема и интенсивностью."""
    es: EnlargedSpace
    sd: ShockDecomposition
    ad: AzemaData
    intensity: IntensityData
    built: Optional[BuiltTime] = None

    @property
    def tree(self) -> ScenarioTree:
        return self.es.tree

    @property
    def tau(self) -> RandomTime:
        return self.es.tau

    @property
    def exact(self) -> bool:
        return self.es.exact

    @property
    def horizon(self) -> int:
        return self.es.horizon

    @classmethod
    def from_time(cls, tau: RandomTime, candidates=None, built: Optional[BuiltTime] = None) -> "DefaultModel":
        es = enlarge(tau.tree, tau)
        sd = decompose_default_time(es.tau, es, candidates=candidates)
        ad = azema_data(es, sd)
        intensity = g_compensator_and_intensity(es, sd, ad)
        return cls(es=es, sd=sd, ad=ad, intensity=intensity, built=built)

    @classmethod
    def from_built(cls, built: BuiltTime) -> "DefaultModel":
        return cls.from_time(built.tau, candidates=built.candidates or None, built=built)


# ========== Вспомогательные величины ==========

def _mode(rates: RatesSpec, mode: Optional[Union[str, DiscountMode]]) -> DiscountMode:
    return rates.mode if mode is None else DiscountMode(mode)


def _claim_on(claim: DefaultableClaim, model: DefaultModel) -> Tuple[np.ndarray, np.ndarray]:
    if claim.tree is not model.tree.root:
        raise ContractViolation("Требование задано не на корневом дереве модели")
    return model.tree.lift(claim.payment, claim.tree), model.tree.lift(claim.recovery, claim.tree)


def discount_factors(rates: RatesSpec, model: DefaultModel, mode: Optional[DiscountMode] = None) -> np.ndarray:
    """Дисконт-факторы на листьях модели; ставка обязана быть предсказуемой."""
    if rates.tree is not model.tree.root:
        raise ContractViolation("Ставки заданы не на корневом дереве модели")
    rates.check_predictable()
    disc = model.tree.lift(rates.discount(_mode(rates, mode)), rates.tree)
    if not model.exact:
        disc = num.to_float(disc)
    return disc


def survival_factors(model: DefaultModel, mode: DiscountMode = DiscountMode.discrete_exact) -> np.ndarray:
    """Π_{k<=n}(1 - h_k) или exp(-Σ_{k<=n} h_k), h_k = Δa^τ_k / Z_{k-1}."""
    h = model.intensity.hazard
    if DiscountMode(mode) == DiscountMode.exponential:
        return np.exp(-np.cumsum(num.to_float(h), axis=0))
    out = num.ones(h.shape, model.exact)
    for k in range(1, h.shape[0]):
        out[k] = out[k - 1] * (1 - h[k])
    return out


def _check_positive(values: np.ndarray, filt: Filtration, upto: int, what: str) -> None:
    for n in range(upto):
        bad = np.flatnonzero(values[n] == 0)
        if bad.size:
            raise SingularityError(f"{what} = 0 до погашения", node=(n, int(filt.labels(n)[bad[0]])))


def _tail(terms: np.ndarray, maturity: int) -> np.ndarray:
    """Σ_{k=n+1}^{T} terms_k по строкам n = 0..N (0 при n >= T)."""
    cum = np.cumsum(terms, axis=0)
    out = cum[maturity][None, :] - cum
    out[maturity:] = 0 * out[maturity:]
    return out


def _freeze_after(values: np.ndarray, maturity: int) -> np.ndarray:
    out = values.copy()
    out[maturity + 1:] = values[maturity]
    return out


# ========== Цена-оракул и цена до дефолта ==========

def value_process(claim: DefaultableClaim, model: DefaultModel, rates: RatesSpec,
                  mode: Optional[DiscountMode] = None) -> AdaptedProcess:
    """Дисконтированная стоимость E[Y | G_n]; мартингал в G."""
    payment, recovery = _claim_on(claim, model)
    disc = discount_factors(rates, model, mode)
    T = claim.maturity
    tau = model.tau
    hit = tau.value <= T
    at = np.minimum(tau.value, T)
    leaves = np.arange(model.tree.size)
    Y = np.where(hit, recovery[at, leaves] * disc[at, leaves], payment * disc[T])
    Y = num.coerce(Y, model.exact)
    rows = np.tile(Y, (model.horizon + 1, 1))
    return AdaptedProcess(condition_rows(rows, model.es.G), model.es.G, Level.optional, name="V")


def price_brute(claim: DefaultableClaim, model: DefaultModel, rates: RatesSpec,
                mode: Optional[DiscountMode] = None) -> AdaptedProcess:
    """S(X)_n = E[Y | G_n] / disc_n."""
    value = value_process(claim, model, rates, mode)
    disc = discount_factors(rates, model, mode)
    return AdaptedProcess(value.values / disc, model.es.G, Level.optional, name="S")


def predefault_price(claim: DefaultableClaim, model: DefaultModel, rates: RatesSpec,
                     mode: Optional[DiscountMode] = None) -> AdaptedProcess:
    """
    S̃(X)_n = E[P disc_T 1_{τ>T} + C_τ disc_τ 1_{n<τ<=T} | F_n] / (disc_n Z_n) при n < T;
    S̃_T = P (C_T там, где Z_T = 0); после T значение заморожено.

    Raises:
        SingularityError: Z_n = 0 при n < T.
    """
    payment, recovery = _claim_on(claim, model)
    disc = discount_factors(rates, model, mode)
    tree, exact, T = model.tree, model.exact, claim.maturity
    Z = model.ad.Z.values
    _check_positive(Z, tree, T, "Z_n")

    tau = model.tau
    leaves = np.arange(tree.size)
    at = np.minimum(tau.value, T)
    out = num.zeros(Z.shape, exact)
    for n in range(T):
        window = (tau.value > n) & (tau.value <= T)
        Y = np.where(window, recovery[at, leaves] * disc[at, leaves], 0 * disc[T])
        Y = np.where(tau.value > T, payment * disc[T], Y)
        out[n] = condition(num.coerce(Y, exact), n, tree) / (disc[n] * Z[n])
    out[T] = np.where(Z[T] > 0, payment, recovery[T])
    return AdaptedProcess(_freeze_after(out, T), tree, Level.optional, name="S~")


def masking_gap(brute: AdaptedProcess, pre: AdaptedProcess, model: DefaultModel, maturity: int) -> float:
    """max_{n<=T} |1_{τ>n} (S_n - S̃_n)|."""
    alive = ~model.tau.le()[: maturity + 1]
    diff = (brute.values - pre.values)[: maturity + 1]
    return num.max_abs(diff[alive])


def classic_price(claim: DefaultableClaim, model: DefaultModel, rates: RatesSpec,
                  mode: Optional[DiscountMode] = None) -> AdaptedProcess:
    """
    Цена с дисконтом R + Λ, discrete-exact:
    E[Σ_{k>n} C_k disc_k Sv_{k-1} h_k + P disc_T Sv_T | F_n] / (disc_n Sv_n);
    paper-exponential: e^{R̃_n} E[Σ_{k>n} C_k e^{-R̃_k} h_k + P e^{-R̃_T} | F_n].

    Raises:
        ContractViolation: возмещение не предсказуемо или A^τ != a^τ
            (заряженные шоки); используйте price_via_Qtau.
    """
    mode = _mode(rates, mode)
    payment, recovery = _claim_on(claim, model)
    tree, exact, T = model.tree, model.exact, claim.maturity
    try:
        AdaptedProcess(recovery, tree, Level.predictable, name="C")
    except ContractViolation as e:
        raise ContractViolation("Классическая формула требует предсказуемого возмещения; используйте price_via_Qtau") from e
    tol = 0.0 if exact else EPS_MART
    if num.max_abs(model.ad.Adual.values - model.ad.adual.values) > tol:
        raise ContractViolation("Классическая формула требует A^τ = a^τ (нет заряженных шоков); используйте price_via_Qtau")

    disc = discount_factors(rates, model, mode)
    sv = survival_factors(model, mode)
    h = model.intensity.hazard
    if mode == DiscountMode.exponential:
        h, recovery, payment = num.to_float(h), num.to_float(recovery), num.to_float(payment)
        sv_left = sv
    else:
        sv_left = np.vstack([sv[:1], sv[:-1]])
    _check_positive(sv, tree, T, "Π(1 - h)")

    terms = recovery * disc * sv_left * h
    terms[0] = 0 * terms[0]
    X = _tail(terms, T) + (payment * disc[T] * sv[T])[None, :]
    out = num.zeros(X.shape, exact) if mode != DiscountMode.exponential else np.zeros(X.shape)
    for n in range(T):
        out[n] = condition(X[n], n, tree) / (disc[n] * sv[n])
    out[T] = np.where(sv[T] != 0, payment, recovery[T])
    return AdaptedProcess(_freeze_after(out, T), tree, Level.optional, name="S~classic")


# ========== Мера Q^τ ==========

@dataclass(frozen=True, eq=False)
class MeasureChange:
    D: AdaptedProcess
    weights: np.ndarray
    horizon: int
    mode: DiscountMode
    martingale: MartingaleCheck
    exponential_gap: float

    def expectation(self, x: Any, n: int) -> np.ndarray:
        """E^Q[x | F_n] = E[D_T x | F_n] / D_n (0 там, где D_n = 0)."""
        filt = self.D.filtration
        num_ = condition(self.D.values[self.horizon] * np.asarray(x), n, filt)
        return num.safe_div(num_, self.D.values[n], filt.exact)


def measure_change(model: DefaultModel, horizon: Optional[int] = None,
                   mode: DiscountMode = DiscountMode.discrete_exact) -> MeasureChange:
    """
    D = Z / Π(1 - h) (discrete-exact) или D = Z e^{Λ} (paper-exponential),
    остановленный в horizon. В точном режиме D сверяется со стохастической
    экспонентой ∫ dm / (Z_- (1 - h)).

    Raises:
        SingularityError: 1 - h_k = 0 при k <= horizon на живой ветви.
        ContractViolation: D < 0.
    """
    mode = DiscountMode(mode)
    tree, exact = model.tree, model.exact
    T = model.horizon if horizon is None else horizon
    Z = model.ad.Z.values
    h = model.intensity.hazard

    if mode == DiscountMode.exponential:
        D = num.to_float(Z) * np.exp(np.cumsum(num.to_float(h), axis=0))
        exp_gap = 0.0
    else:
        for k in range(1, T + 1):
            bad = np.flatnonzero((h[k] == 1) & (Z[k - 1] > 0))
            if bad.size:
                raise SingularityError("1 - ΔΛ_k = 0 (дефолт на шаге неизбежен)", node=(k, int(tree.labels(k - 1)[bad[0]])))
        D = num.safe_div(Z, survival_factors(model, mode), exact)
        dm = increments(model.ad.m.values)
        stoch = num.ones(Z.shape, exact)
        for k in range(1, Z.shape[0]):
            step = num.safe_div(dm[k], Z[k - 1] * (1 - h[k]), exact)
            stoch[k] = stoch[k - 1] * (1 + step)
        exp_gap = num.max_abs((D - stoch)[: T + 1])
    D = _freeze_after(D, T)
    if np.any(D < 0):
        raise ContractViolation("Плотность D отрицательна: Z обращается в 0")
    process = AdaptedProcess(D, tree, Level.optional, name="D")
    check = is_martingale(process, tree, 0.0 if exact else EPS_MART)
    weights = D[T] * tree.prob
    logger.info(
        f"Мера Q^τ ({mode.value}): E[D_T] = {num.fmt(weights.sum())}, "
        f"мартингальность {'да' if check else 'нет'} ({check.worst_error:.3e})"
    )
    return MeasureChange(D=process, weights=weights, horizon=T, mode=mode, martingale=check, exponential_gap=exp_gap)


# ========== Цена через Q^τ ==========

@dataclass(frozen=True, eq=False)
class QtauPrice:
    price: AdaptedProcess
    naive: AdaptedProcess
    anchor: np.ndarray
    h_shock: Tuple[np.ndarray, ...]
    h_idio: np.ndarray
    kappa_tilde: Tuple[np.ndarray, ...]
    h_from_loss: Tuple[np.ndarray, ...]
    measure: MeasureChange
    sampling: str

    @property
    def naive_gap(self) -> np.ndarray:
        return self.naive.values - self.price.values


def recovery_anchor(recovery: np.ndarray, model: DefaultModel) -> np.ndarray:
    """Ĉ_k = E[C_k | F_{k-1}, шока в момент k нет]; E[C_k | F_{k-1}], если событие пусто."""
    tree, exact = model.tree, model.exact
    out = recovery.copy()
    for k in range(1, recovery.shape[0]):
        quiet = np.ones(tree.size, dtype=bool)
        for T in model.sd.shocks:
            quiet &= T.value != k
        for idx in tree.atoms(k - 1):
            sub = idx[quiet[idx]]
            use = sub if sub.size else idx
            w = tree.prob[use]
            out[k, idx] = (w * recovery[k, use]).sum() / w.sum()
    return out


@dataclass(frozen=True, eq=False)
class RecoveryTerms:
    """Якорь Ĉ и поправки h^i, h^0 вместе с суммами Σ h^i w^i и h^0 Δa^0."""
    anchor: np.ndarray
    h_shock: Tuple[np.ndarray, ...]
    h_idio: np.ndarray
    shock_sum: np.ndarray
    idio_sum: np.ndarray
    kappa_tilde: Tuple[np.ndarray, ...]
    h_from_loss: Tuple[np.ndarray, ...]


def recovery_terms(claim: DefaultableClaim, model: DefaultModel) -> RecoveryTerms:
    """
    h^i_k = Ĉ_k - E[C_k p^i_k 1_{T^i=k} | F_{k-1}] / w^i_k,
    h^0_k = Ĉ_k - E[C_k ΔA^0_k | F_{k-1}] / Δa^0_k (0 там, где знаменатель 0).
    """
    _, recovery = _claim_on(claim, model)
    tree, exact, ad = model.tree, model.exact, model.ad
    anchor = recovery_anchor(recovery, model)
    h_shock, kappa_tilde, h_from_loss = [], [], []
    shock_sum = num.zeros(recovery.shape, exact)
    for i, s in enumerate(ad.shocks, start=1):
        hit = num.indicator(s.time.eq(), exact)
        paid = condition_rows(recovery * s.p.values * hit, tree, 1)
        hi = num.safe_div(anchor * s.w - paid, s.w, exact)
        hi[0] = 0 * hi[0]
        h_shock.append(hi)
        shock_sum = shock_sum + hi * s.w
        kt, ph = _h_from_loss(claim, model, i, s)
        kappa_tilde.append(kt)
        h_from_loss.append(ph)

    da0 = increments(ad.a0.values)
    dA0 = increments(ad.A0.values)
    h_idio = num.safe_div(anchor * da0 - condition_rows(recovery * dA0, tree, 1), da0, exact)
    h_idio[0] = 0 * h_idio[0]
    return RecoveryTerms(
        anchor=anchor,
        h_shock=tuple(h_shock),
        h_idio=h_idio,
        shock_sum=shock_sum,
        idio_sum=h_idio * da0,
        kappa_tilde=tuple(kappa_tilde),
        h_from_loss=tuple(h_from_loss),
    )


def price_via_Qtau(claim: DefaultableClaim, model: DefaultModel, rates: RatesSpec,
                   mode: Optional[DiscountMode] = None) -> QtauPrice:
    """
    Цена до дефолта под мерой Q^τ (discrete-exact):
    S̃_n = (disc_n Sv_n)^{-1} E^Q[Σ_{k>n} disc_k Sv_{k-1} ρ_k + P disc_T Sv_T | F_n],
    ρ_k = Ĉ_k h_k - Σ_i h^i_k w^i_k / Z_{k-1} - h^0_k Δa^0_k / Z_{k-1},
    h^i_k = Ĉ_k - E[C_k p^i_k 1_{T^i=k} | F_{k-1}] / w^i_k,
    h^0_k = Ĉ_k - E[C_k ΔA^0_k | F_{k-1}] / Δa^0_k.

    Наивная версия без слагаемых h^i (только компенсатор) возвращается рядом.
    """
    mode = _mode(rates, mode)
    payment, recovery = _claim_on(claim, model)
    tree, exact, T = model.tree, model.exact, claim.maturity
    ad = model.ad
    Z = ad.Z.values
    _check_positive(Z, tree, T, "Z_n")
    disc = discount_factors(rates, model, mode)
    sv = survival_factors(model, mode)
    _check_positive(sv, tree, T, "Π(1 - h)")
    mc = measure_change(model, T, mode)
    h = model.intensity.hazard
    Z_prev = np.vstack([Z[:1], Z[:-1]])

    rt = recovery_terms(claim, model)
    anchor, shock_sum, idio_term = rt.anchor, rt.shock_sum, rt.idio_sum

    if mode == DiscountMode.exponential:
        left = np.vstack([recovery[:1], recovery[:-1]])
        base = num.to_float(left) * num.to_float(h)
        sv_left = sv
        corrections = num.safe_div(num.to_float(shock_sum + idio_term), num.to_float(Z_prev), False)
        shocks_only = num.safe_div(num.to_float(shock_sum), num.to_float(Z_prev), False)
        payment = num.to_float(payment)
    else:
        base = anchor * h
        sv_left = np.vstack([sv[:1], sv[:-1]])
        corrections = num.safe_div(shock_sum + idio_term, Z_prev, exact)
        shocks_only = num.safe_div(shock_sum, Z_prev, exact)

    def priced(rho: np.ndarray) -> np.ndarray:
        terms = disc * sv_left * rho
        terms[0] = 0 * terms[0]
        X = _tail(terms, T) + (payment * disc[T] * sv[T])[None, :]
        out = np.zeros(X.shape) if mode == DiscountMode.exponential else num.zeros(X.shape, exact)
        for n in range(T + 1):
            out[n] = mc.expectation(X[n], n) / (disc[n] * sv[n])
        return _freeze_after(out, T)

    price = AdaptedProcess(priced(base - corrections), tree, Level.optional, name="S~Q")
    naive = AdaptedProcess(priced(base - corrections + shocks_only), tree, Level.optional, name="S~naive")
    logger.info(
        f"Цена через Q^τ: S~_0 = {num.fmt(price.values[0, 0])}, "
        f"наивная = {num.fmt(naive.values[0, 0])}"
    )
    return QtauPrice(
        price=price,
        naive=naive,
        anchor=anchor,
        h_shock=rt.h_shock,
        h_idio=rt.h_idio,
        kappa_tilde=rt.kappa_tilde,
        h_from_loss=rt.h_from_loss,
        measure=mc,
        sampling="left-survival" if mode == DiscountMode.discrete_exact else "current",
    )


def _h_from_loss(claim: DefaultableClaim, model: DefaultModel, i: int, s) -> Tuple[np.ndarray, np.ndarray]:
    """
    κ̃^i ΔΛ^i = E[κ^i p^i_k 1_{T^i=k} | F_{k-1}] и h^i = c^i + κ̃^i/(p^i_- + v^i)
    по разложению возмещения; нули, если разложение не задано или шок не найден в нём.
    """
    tree, exact = model.tree, model.exact
    zeros = num.zeros(s.w.shape, exact)
    decomposition = claim.decomposition
    if decomposition is None:
        return zeros, zeros
    jump = next(
        (j for j in decomposition.jumps
         if np.array_equal(tree.lift(j.time.value, j.time.tree), s.time.value)),
        None,
    )
    if jump is None:
        return zeros, zeros
    hit = num.indicator(s.time.eq(), exact)
    kappa = tree.lift(jump.kappa, jump.time.tree)[None, :]
    jumps = s.comp.jumps
    kt = num.safe_div(condition_rows(kappa * s.p.values * hit, tree, 1), jumps, exact)
    prev = np.vstack([s.p.values[:1], s.p.values[:-1]])
    loss = tree.lift(jump.loss, jump.time.tree)
    ph = loss + num.safe_div(kt, prev + s.v, exact)
    live = jumps != 0
    return kt * live, ph * live


# ========== Потери и предсказуемая часть ==========

@dataclass(frozen=True)
class LossVerdict:
    loss_holds: bool
    predictable_part: Optional[np.ndarray]

    @property
    def passed(self) -> bool:
        return self.predictable_part is None

    @property
    def verdict(self) -> str:
        return "PASS" if self.passed else "FAIL"


def loss_condition(price: AdaptedProcess, tau: RandomTime) -> bool:
    """(L): Δprice_τ < 0 на каждом листе с τ <= N."""
    hit = np.flatnonzero(tau.finite)
    if not hit.size:
        return True
    t = tau.value[hit]
    jump = price.values[t, hit] - price.values[t - 1, hit]
    return bool(np.all(jump < 0))


def loss_no_predictable_check(price: AdaptedProcess, es: EnlargedSpace, **search) -> LossVerdict:
    """
    Raises:
        ContractViolation: price не мартингал в G.
    """
    check = is_martingale(price, es.G, 0.0 if es.exact else EPS_MART)
    if not check:
        raise ContractViolation(
            f"Цена не мартингал в G: ошибка {check.worst_error:.3e} в узле {check.node}"
        )
    holds = loss_condition(price, es.tau)
    part = has_predictable_part(es.tau, es.G, **search)
    logger.info(
        f"Проверка потерь: (L) {'выполнено' if holds else 'нарушено'}, "
        f"предсказуемая часть {'не найдена' if part is None else 'найдена'}"
    )
    return LossVerdict(loss_holds=holds, predictable_part=part)
