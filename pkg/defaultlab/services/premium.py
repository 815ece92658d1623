# defaultlab/services/premium.py
"""
Премия за риск дефолта и кредитный спред.

Цена до дефолта S̃ раскладывается мультипликативно: ΔS̃_k / S̃_{k-1} = Δν_k + ΔM_k,
Δν предсказуем, M мартингал в F; премия Δπ = Δν - r Δt. Премия считается
двумя путями (прямо из S̃ и по формуле через h, Ĉ, h^i, φ^i) и раскладывается
на вклады шоков и идиосинкратическую часть.
"""
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np

from defaultlab.config import EPS_MART
from defaultlab.errors import ContractViolation, SingularityError
from defaultlab.models.claim import DefaultableClaim, DiscountMode, RatesSpec
from defaultlab.models.process import AdaptedProcess, Level
from defaultlab.services.kernel import MartingaleCheck, condition, condition_rows, expectation, increments, is_martingale
from defaultlab.services.pricing import (
    DefaultModel,
    predefault_price,
    recovery_terms,
)
from defaultlab.utils import numeric as num

logger = logging.getLogger(__name__)


def _tolerance(model: DefaultModel) -> float:
    return 0.0 if model.exact else EPS_MART


def _prev(values: np.ndarray) -> np.ndarray:
    return np.vstack([values[:1], values[:-1]])


def _window(model: DefaultModel, maturity: int) -> np.ndarray:
    """Маска строк k = 1..T."""
    rows = np.arange(model.horizon + 1)
    return ((rows >= 1) & (rows <= maturity))[:, None] & np.ones(model.tree.size, dtype=bool)[None, :]


# ========== Ортогональное разложение ==========

@dataclass(frozen=True, eq=False)
class OrthogonalDecomposition:
    """
    M = M_0 + Σ_i ∫ f^i dN^i + Σ_i θ^i 1_{T^i <= ·} + M̂, где N^i - мартингал
    шока T^i, E[θ^i | F_{T^i -}] = 0, а M̂ сильно ортогонален всем N^i.
    """
    mu_shock: Tuple[np.ndarray, ...]
    mu_quiet: np.ndarray
    f: Tuple[np.ndarray, ...]
    theta: Tuple[np.ndarray, ...]
    Mhat: AdaptedProcess
    reconstruction_gap: float
    orthogonality_gap: float
    martingales: Dict[str, MartingaleCheck] = field(default_factory=dict)


def orthogonal_decomposition(M: Union[AdaptedProcess, np.ndarray], model: DefaultModel) -> OrthogonalDecomposition:
    """
    μ^i_k = E[ΔM_k | F_{k-1}, T^i = k], μ^c_k = E[ΔM_k | F_{k-1}, шока нет],
    f^i = μ^i - μ^c, θ^i_k = 1_{T^i=k}(ΔM_k - μ^i_k), ΔM̂_k = 1_{шока нет}(ΔM_k - μ^c_k).

    Raises:
        ContractViolation: M не мартингал в F или графики шоков пересекаются.
    """
    tree, exact = model.tree, model.exact
    values = M.values if isinstance(M, AdaptedProcess) else num.coerce(M, exact)
    tol = _tolerance(model)
    check = is_martingale(values, tree, tol)
    if not check:
        raise ContractViolation(f"M не мартингал в F: ошибка {check.worst_error:.3e} в узле {check.node}")

    dM = increments(values)
    dM[0] = 0 * dM[0]
    hits = [num.indicator(s.time.eq(), exact) for s in model.ad.shocks]
    if hits and np.any(sum(num.to_float(h) for h in hits) > 1):
        raise ContractViolation("Графики шоков пересекаются")
    quiet = num.ones(dM.shape, exact)
    for hit in hits:
        quiet = quiet - hit

    mu_quiet = num.safe_div(condition_rows(dM * quiet, tree, 1), condition_rows(quiet, tree, 1), exact)
    mu_shock, f, theta, lam = [], [], [], []
    for hit in hits:
        li = condition_rows(hit, tree, 1)
        mi = num.safe_div(condition_rows(dM * hit, tree, 1), li, exact)
        mu_shock.append(mi)
        f.append((mi - mu_quiet) * num.indicator(li != 0, exact))
        theta.append(hit * (dM - mi))
        lam.append(li)

    dMhat = quiet * (dM - mu_quiet)
    Mhat = np.cumsum(dMhat, axis=0) + values[0][None, :]

    rebuilt = dMhat.copy()
    for fi, th, hit, li in zip(f, theta, hits, lam):
        rebuilt = rebuilt + fi * (hit - li) + th
    rebuilt = np.cumsum(rebuilt, axis=0) + values[0][None, :]
    gap = num.max_abs(rebuilt - values)

    ortho = 0.0
    for th, hit, li in zip(theta, hits, lam):
        ortho = max(ortho, num.max_abs(condition_rows(dMhat * (hit - li), tree, 1)))
        ortho = max(ortho, num.max_abs(condition_rows(th, tree, 1)))

    martingales = {"Mhat": is_martingale(Mhat, tree, tol)}
    for i, (fi, th, hit, li) in enumerate(zip(f, theta, hits, lam), start=1):
        martingales[f"f{i}dN{i}"] = is_martingale(np.cumsum(fi * (hit - li), axis=0), tree, tol)
        martingales[f"theta{i}"] = is_martingale(np.cumsum(th, axis=0), tree, tol)

    logger.debug(f"Ортогональное разложение: восстановление {gap:.3e}, ортогональность {ortho:.3e}")
    return OrthogonalDecomposition(
        mu_shock=tuple(mu_shock),
        mu_quiet=mu_quiet,
        f=tuple(f),
        theta=tuple(theta),
        Mhat=AdaptedProcess(Mhat, tree, Level.optional, name="M^"),
        reconstruction_gap=gap,
        orthogonality_gap=ortho,
        martingales=martingales,
    )


# ========== Премия за риск ==========

@dataclass(frozen=True, eq=False)
class PremiumReport:
    price: AdaptedProcess
    nu: np.ndarray
    M: AdaptedProcess
    dpi: np.ndarray
    dpi_formula: np.ndarray
    formula_defined: np.ndarray
    parts: Tuple[np.ndarray, ...]
    idiosyncratic: np.ndarray
    C_tilde: np.ndarray
    h_tilde: Tuple[np.ndarray, ...]
    h0_tilde: np.ndarray
    phi: Tuple[np.ndarray, ...]
    phi0: np.ndarray
    phi_alt: Tuple[np.ndarray, ...]
    sigma: Tuple[np.ndarray, ...]
    kappa_tilde: Tuple[np.ndarray, ...]
    decomposition: OrthogonalDecomposition
    mode: DiscountMode
    maturity: int
    gaps: Dict[str, float] = field(default_factory=dict)

    @property
    def pi(self) -> np.ndarray:
        """π_n = Σ_{k<=n} Δπ_k."""
        return np.cumsum(self.dpi, axis=0)

    def expectations(self) -> List[Dict[str, Any]]:
        """
        Строки E[Δπ_k], E[идиосинкратическая часть_k], E[вклад шока i_k] для k = 1..T;
        shock_id = 0 - строка идиосинкратической части.
        """
        filt = self.price.filtration
        rows = []
        for k in range(1, self.maturity + 1):
            total = expectation(self.dpi[k], filt)
            idio = expectation(self.idiosyncratic[k], filt)
            for i, part in enumerate((self.idiosyncratic,) + self.parts):
                rows.append({
                    "time_index": k,
                    "total_premium": total,
                    "idiosyncratic": idio,
                    "shock_id": i,
                    "shock_premium": expectation(part[k], filt),
                })
        return rows


def _direct_route(price: np.ndarray, model: DefaultModel, maturity: int, exact: bool) -> Tuple[np.ndarray, np.ndarray]:
    """Δν_k = E[ΔS̃_k | F_{k-1}] / S̃_{k-1} и ΔM_k = ΔS̃_k / S̃_{k-1} - Δν_k (k = 1..T)."""
    tree = model.tree
    for n in range(maturity):
        bad = np.flatnonzero(price[n] == 0)
        if bad.size:
            raise SingularityError("S~_n = 0 до погашения", node=(n, int(tree.labels(n)[bad[0]])))
    live = num.indicator(_window(model, maturity), exact)
    prev = _prev(price)
    dS = increments(price)
    dnu = num.safe_div(condition_rows(dS, tree, 1), prev, exact) * live
    dM = num.safe_div(dS, prev, exact) * live - dnu
    return dnu, dM


def _rate_steps(rates: RatesSpec, model: DefaultModel) -> np.ndarray:
    steps = model.tree.lift(rates.rate * rates.dt, rates.tree)
    steps = num.coerce(steps, model.exact)
    steps[0] = 0 * steps[0]
    return steps


def risk_premium(claim: DefaultableClaim, model: DefaultModel, rates: RatesSpec,
                 mode: Optional[DiscountMode] = None) -> PremiumReport:
    """
    Премия за риск дефолта двумя путями.

    Прямой путь: Δπ_k = E[ΔS̃_k | F_{k-1}] / S̃_{k-1} - r_k Δt.

    Формула (discrete-exact, при h_k != 1):
    Δπ_k = [(1 + r_k Δt - C̃_k) h_k + Σ_i (h̃^i_k + φ^i_k) w^i_k / Z_{k-1}
            + (h̃^0_k + φ^0_k) Δa^0_k / Z_{k-1}] / (1 - h_k),
    C̃ = Ĉ / S̃_-, h̃ = h / S̃_-, φ^i w^i = E[p^i_k 1_{T^i=k} ΔM_k | F_{k-1}],
    φ^0 Δa^0 = E[ΔA^0_k ΔM_k | F_{k-1}]. В режиме paper-exponential
    знаменатель 1 - h и слагаемое r Δt опускаются.

    Args:
        claim: требование на корневом дереве.
        model: модель момента дефолта; (H) обязательна.
        rates: ставки.
        mode: способ дисконтирования (по умолчанию из rates).

    Returns:
        PremiumReport с обоими путями, вкладами шоков и расхождениями.

    Raises:
        ContractViolation: иммерсия (H) не выполнена.
        SingularityError: S̃_n = 0 или Z_n = 0 до погашения.
    """
    mode = rates.mode if mode is None else DiscountMode(mode)
    if not model.ad.immersed:
        raise ContractViolation("Формула премии требует иммерсии (H)")
    tree, exact, T = model.tree, model.exact, claim.maturity
    expo = mode == DiscountMode.exponential
    price = predefault_price(claim, model, rates, mode)
    S = price.values
    if expo:
        S = num.to_float(S)
    ex = exact and not expo
    dnu, dM = _direct_route(S, model, T, ex)
    steps = _rate_steps(rates, model)
    if expo:
        steps = num.to_float(steps)
    live = _window(model, T)
    dpi = (dnu - steps) * num.indicator(live, ex)

    ad = model.ad
    Z = ad.Z.values if not expo else num.to_float(ad.Z.values)
    Z_prev = _prev(Z)
    S_prev = _prev(S)
    h = model.intensity.hazard if not expo else num.to_float(model.intensity.hazard)
    rt = recovery_terms(claim, model)

    def arr(x: np.ndarray) -> np.ndarray:
        return num.to_float(x) if expo else x

    C_tilde = num.safe_div(arr(rt.anchor), S_prev, ex)
    h0_tilde = num.safe_div(arr(rt.h_idio), S_prev, ex)
    da0 = arr(increments(ad.a0.values))
    dA0 = arr(increments(ad.A0.values))
    da0[0] = 0 * da0[0]
    dA0[0] = 0 * dA0[0]
    phi0 = num.safe_div(condition_rows(dA0 * dM, tree, 1), da0, ex)

    if expo:
        denom = np.ones(h.shape)
        base = 1 - C_tilde
    else:
        denom = 1 - h
        base = 1 + steps - C_tilde
    defined = live & (denom != 0)
    scale = num.safe_div(num.indicator(defined, ex), Z_prev * denom, ex)

    h_tilde, phi, phi_alt, sigma, parts = [], [], [], [], []
    od = orthogonal_decomposition(np.cumsum(dM, axis=0), model)
    f_lambda = 0 * dM
    for i, s in enumerate(ad.shocks):
        f_lambda = f_lambda + od.f[i] * arr(s.comp.jumps)
    formula = num.safe_div(base * h * num.indicator(defined, ex), denom, ex)
    for i, s in enumerate(ad.shocks):
        w = arr(s.w)
        p = arr(s.p.values)
        hit = num.indicator(s.time.eq(), ex)
        hi = num.safe_div(arr(rt.h_shock[i]), S_prev, ex)
        ph = num.safe_div(condition_rows(p * hit * dM, tree, 1), w, ex)
        jumps = arr(s.comp.jumps)
        paid_theta = condition_rows(p * od.theta[i], tree, 1)
        sg = num.safe_div(paid_theta, jumps, ex)
        alt = (od.f[i] - f_lambda + num.safe_div(paid_theta, w, ex)) * num.indicator(w != 0, ex)
        h_tilde.append(hi)
        phi.append(ph)
        phi_alt.append(alt)
        sigma.append(sg)
        parts.append((base + hi + ph) * w * scale)
        formula = formula + (hi + ph) * w * scale
    idio = (base + h0_tilde + phi0) * da0 * scale
    dpi_formula = formula + (h0_tilde + phi0) * da0 * scale

    split = idio
    for part in parts:
        split = split + part
    gaps = {
        "routes": num.max_abs((dpi - dpi_formula)[defined]),
        "split": num.max_abs((split - dpi_formula)[defined]),
        "reconstruction": num.max_abs(
            (num.safe_div(increments(S), S_prev, ex) - (steps + dpi_formula + dM))[defined]
        ),
        "phi_routes": max((num.max_abs(a - b) for a, b in zip(phi, phi_alt)), default=0.0),
        "decomposition": od.reconstruction_gap,
        "orthogonality": od.orthogonality_gap,
    }
    M = AdaptedProcess(np.cumsum(dM, axis=0), tree, Level.optional, name="M")
    logger.info(
        f"Премия за риск ({mode.value}): Δπ_1 = {num.fmt(dpi[1, 0])}, "
        f"расхождение путей {gaps['routes']:.3e}, разбиение {gaps['split']:.3e}"
    )
    return PremiumReport(
        price=price,
        nu=np.cumsum(dnu, axis=0),
        M=M,
        dpi=dpi,
        dpi_formula=dpi_formula,
        formula_defined=defined,
        parts=tuple(parts),
        idiosyncratic=idio,
        C_tilde=C_tilde,
        h_tilde=tuple(h_tilde),
        h0_tilde=h0_tilde,
        phi=tuple(phi),
        phi0=phi0,
        phi_alt=tuple(phi_alt),
        sigma=tuple(sigma),
        kappa_tilde=rt.kappa_tilde,
        decomposition=od,
        mode=mode,
        maturity=T,
        gaps=gaps,
    )


def shock_free_premium(claim: DefaultableClaim, model: DefaultModel, rates: RatesSpec,
                       mode: Optional[DiscountMode] = None) -> np.ndarray:
    """
    Замкнутая форма премии без заряженных шоков и с предсказуемым возмещением:
    Δπ_k = (1 + r_k Δt - C_k / S̃_{k-1}) h_k / (1 - h_k); paper-exponential: (1 - C_k / S̃_{k-1}) h_k.

    Raises:
        ContractViolation: A^τ != a^τ или возмещение не предсказуемо.
    """
    mode = rates.mode if mode is None else DiscountMode(mode)
    exact = model.exact and mode != DiscountMode.exponential
    if num.max_abs(model.ad.Adual.values - model.ad.adual.values) > _tolerance(model):
        raise ContractViolation("Замкнутая форма требует A^τ = a^τ")
    recovery = model.tree.lift(claim.recovery, claim.tree)
    try:
        AdaptedProcess(recovery, model.tree, Level.predictable, name="C")
    except ContractViolation as e:
        raise ContractViolation("Замкнутая форма требует предсказуемого возмещения") from e

    S = predefault_price(claim, model, rates, mode).values
    h = model.intensity.hazard
    if not exact:
        S, h, recovery = num.to_float(S), num.to_float(h), num.to_float(recovery)
    C_tilde = num.safe_div(recovery, _prev(S), exact)
    live = num.indicator(_window(model, claim.maturity), exact)
    if mode == DiscountMode.exponential:
        return (1 - C_tilde) * h * live
    steps = _rate_steps(rates, model)
    return num.safe_div((1 + steps - C_tilde) * h * live, 1 - h, exact)


# ========== Кредитный спред ==========

@dataclass(frozen=True, eq=False)
class CreditSpread:
    spread: np.ndarray
    defined: np.ndarray
    identity_gap: float
    zero_recovery: bool
    mode: DiscountMode


def credit_spread(claim: DefaultableClaim, model: DefaultModel, rates: RatesSpec,
                  mode: Optional[DiscountMode] = None) -> CreditSpread:
    """
    s_k = Δπ_k / Δt (discrete-exact) или s_k = (log(1 + Δν_k) - r_k Δt) / Δt
    (paper-exponential). Для нулевого возмещения
    S̃_n = E[P Π_{k=n+1}^{T} d_k | F_n] с d_k = (1 + (r_k + s_k) Δt)^{-1} или e^{-(r_k + s_k) Δt};
    identity_gap - расхождение этого тождества.
    """
    mode = rates.mode if mode is None else DiscountMode(mode)
    tree, T = model.tree, claim.maturity
    S = predefault_price(claim, model, rates, mode).values
    exact = model.exact and mode != DiscountMode.exponential
    if not exact:
        S = num.to_float(S)
    dnu, _ = _direct_route(S, model, T, exact)
    steps = _rate_steps(rates, model)
    dt = rates.dt
    live = _window(model, T)

    if mode == DiscountMode.exponential:
        grow = 1 + num.to_float(dnu)
        defined = live & (grow > 0)
        logs = np.log(np.where(defined, grow, 1.0))
        spread = np.where(defined, (logs - num.to_float(steps)) / float(dt), 0.0)
        factors = np.where(live, np.exp(-(num.to_float(steps) + spread * float(dt))), 1.0)
    else:
        defined = live.copy()
        spread = (dnu - steps) / dt * num.indicator(live, exact)
        factors = num.safe_div(num.ones(S.shape, exact), 1 + (steps + spread * dt) * num.indicator(live, exact), exact)

    payment = model.tree.lift(claim.payment, claim.tree)
    if not exact:
        payment = num.to_float(payment)
    rebuilt = []
    for n in range(T + 1):
        prod = payment
        for k in range(n + 1, T + 1):
            prod = prod * factors[k]
        rebuilt.append(condition(prod, n, tree))
    gap = num.max_abs(np.asarray(rebuilt) - S[: T + 1])
    zero_recovery = num.max_abs(claim.recovery) == 0
    logger.info(f"Кредитный спред ({mode.value}): s_1 = {num.fmt(spread[1, 0])}, тождество {gap:.3e}")
    return CreditSpread(spread=spread, defined=defined, identity_gap=gap, zero_recovery=zero_recovery, mode=mode)
