# defaultlab/services/enlargement.py
"""
Прогрессивное расширение G = F ∨ σ(τ∧n), проверка иммерсии (H) и аппарат
супермартингала Азема: Z, двойственные проекции A^τ и a^τ, компенсатор
момента дефолта в G, интенсивность и мартингал N̂.

Формулы через шоки (p^i, v^i, g^i, u^i) вычисляются как перекрёстные
проверки независимо найденных величин, а не как единственный способ их
получить.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from defaultlab.config import EPS_MART
from defaultlab.errors import ConsistencyError, ContractViolation, SingularityError
from defaultlab.models.process import AdaptedProcess, IncreasingProcess, Level, RandomTime, TimeLevel
from defaultlab.models.tree import Filtration, ScenarioTree, relabel
from defaultlab.services.kernel import (
    MartingaleCheck,
    condition,
    condition_rows,
    doob_meyer,
    dual_projection,
    increments,
    is_martingale,
)
from defaultlab.services.stopping import (
    CompensatorData,
    ShockDecomposition,
    compensator,
    decompose_default_time,
    is_predictable,
)
from defaultlab.utils import numeric as num

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class EnlargedSpace:
    """Дерево с F (перенесённой на листья), момент τ и фильтрация G."""
    tree: ScenarioTree
    tau: RandomTime
    G: Filtration

    @property
    def exact(self) -> bool:
        return self.tree.exact

    @property
    def horizon(self) -> int:
        return self.tree.horizon

    def lift(self, values, source: Optional[ScenarioTree] = None) -> np.ndarray:
        """F-адаптированный процесс с корневого дерева переносится без изменений."""
        return self.tree.lift(values, source)


@dataclass(frozen=True, eq=False)
class ShockTerms:
    """Величины одного шока T^i на F: компенсатор, p^i, v^i и w^i = (p^i_- + v^i)ΔΛ^i."""
    time: RandomTime
    comp: CompensatorData
    p: AdaptedProcess
    v: np.ndarray
    w: np.ndarray


@dataclass(frozen=True, eq=False)
class AzemaData:
    Z: AdaptedProcess
    Adual: IncreasingProcess
    adual: IncreasingProcess
    mu: AdaptedProcess
    m: AdaptedProcess
    Nhat: AdaptedProcess
    shocks: Tuple[ShockTerms, ...]
    A0: IncreasingProcess
    a0: IncreasingProcess
    Z0: AdaptedProcess
    decomposition: ShockDecomposition
    immersed: bool


@dataclass(frozen=True, eq=False)
class PProcesses:
    """p^i_n = P(τ = T^i | F_n), g^i_n = P(τ = T^i | G_n) и разрыв остановленности."""
    p: Tuple[AdaptedProcess, ...]
    g: Tuple[AdaptedProcess, ...]
    stopped_gap: Tuple[float, ...]


@dataclass(frozen=True, eq=False)
class IntensityData:
    hazard: np.ndarray
    Lambda: IncreasingProcess
    N: AdaptedProcess
    g: Tuple[AdaptedProcess, ...]
    u: Tuple[np.ndarray, ...]
    Lambda0: np.ndarray
    assembly: np.ndarray
    f_form: np.ndarray
    gaps: Dict[str, float] = field(default_factory=dict)


# ========== Расширение ==========

def enlarge(tree: ScenarioTree, tau: RandomTime) -> EnlargedSpace:
    """
    Атомы G_n: атомы F_n, разбитые по значению τ∧(n+1), то есть событиями
    {τ = 1}, ..., {τ = n}, {τ > n}.

    Raises:
        ContractViolation: τ задан не на дереве или принимает значение 0.
    """
    if tau.tree is not tree:
        raise ContractViolation("Момент τ задан не на всех листьях дерева")
    if np.any(tau.value == 0):
        raise ContractViolation("Момент дефолта должен быть не меньше 1")

    partitions = []
    for n in range(tree.horizon + 1):
        capped = np.minimum(tau.value, n + 1)
        partitions.append(relabel(list(zip(tree.labels(n).tolist(), capped.tolist()))))
    G = tree.with_partitions(partitions, name="G")
    logger.debug(
        f"Расширение: атомов F_N {tree.atom_count(tree.horizon)}, атомов G_N {G.atom_count(tree.horizon)}"
    )
    return EnlargedSpace(tree=tree, tau=tau.with_level(TimeLevel.g_stopping), G=G)


def check_immersion(es: EnlargedSpace, eps: float = EPS_MART) -> MartingaleCheck:
    """
    Иммерсия F в G двумя независимыми тестами:
    P(τ <= s | F_n) = P(τ <= s | F_N) при s <= n, и мартингальность в G
    процессов P(b | F_k) для каждого атома b из F_N.

    Raises:
        ConsistencyError: тесты дали разные ответы.
    """
    tree, tol = es.tree, (0.0 if es.exact else eps)
    ind = es.tau.indicator()
    horizon = tree.horizon

    worst, node = 0.0, None
    for s in range(horizon + 1):
        terminal = condition(ind[s], horizon, tree)
        for n in range(s, horizon + 1):
            gap = num.to_float(np.abs(condition(ind[s], n, tree) - terminal))
            k = int(np.argmax(gap))
            if gap[k] > worst:
                worst, node = float(gap[k]), (n, int(tree.labels(n)[k]))
    by_law = worst <= tol

    by_martingales = True
    for idx in tree.atoms(horizon):
        atom = num.indicator(np.isin(np.arange(tree.size), idx), es.exact)
        rows = np.array([condition(atom, n, tree) for n in range(horizon + 1)])
        if not is_martingale(rows, es.G, eps if not es.exact else 0.0):
            by_martingales = False
            break

    if by_law != by_martingales:
        raise ConsistencyError("Два теста иммерсии разошлись", node=node, gap=worst)
    if not by_law:
        logger.info(f"Иммерсия нарушена: расхождение {worst:.3e} в узле {node}")
    return MartingaleCheck(ok=by_law, worst_error=worst, node=None if by_law else node)


# ========== Супермартингал Азема ==========

def _shock_terms(es: EnlargedSpace, sd: ShockDecomposition) -> List[ShockTerms]:
    tree, exact = es.tree, es.exact
    out = []
    for i, shock in enumerate(sd.shocks, start=1):
        comp = compensator(shock, tree)
        p_rows = condition_rows(np.tile(num.indicator(sd.coincidence(i), exact), (tree.horizon + 1, 1)), tree)
        p = AdaptedProcess(p_rows, tree, Level.optional, name=f"p{i}")
        jumps = comp.jumps
        cov = increments(p_rows) * increments(comp.N.values)
        cov[0] = 0 * cov[0]
        v = num.safe_div(condition_rows(cov, tree, 1), jumps, exact)
        prev = np.vstack([p_rows[:1], p_rows[:-1]])
        w = (prev + v) * jumps
        w[0] = 0 * w[0]
        out.append(ShockTerms(time=shock, comp=comp, p=p, v=v, w=w))
    return out


def azema_data(es: EnlargedSpace, sd: Optional[ShockDecomposition] = None) -> AzemaData:
    """
    Z_n = P(τ > n | F_n), A^τ и a^τ как двойственные проекции 1_{τ<=·},
    μ = A^τ + Z, m = Z + a^τ (разложение Дуба-Мейера), шоковые процессы
    p^i, v^i и идиосинкратические A^0, a^0, Z^0, а также
    N̂ = Σ_i [∫(p^i_- + v^i)dN^i + (Δp^i - v^i)_{T^i} 1_{T^i<=·}] + A^0 - a^0.

    Формулы через шоки требуют (H) и проверяются, только если она выполнена.
    """
    tree, exact = es.tree, es.exact
    if sd is None:
        sd = decompose_default_time(es.tau, es)
    ind = es.tau.indicator()
    ones = num.ones(ind.shape, exact)

    Z = AdaptedProcess(condition_rows(ones - ind, tree), tree, Level.optional, name="Z")
    Adual = dual_projection(ind, "optional", tree)
    adual = dual_projection(ind, "predictable", tree)
    dm = doob_meyer(Z, tree)
    gap = num.max_abs(dm.compensator.values - adual.values)
    if gap > (0.0 if exact else EPS_MART):
        raise ConsistencyError("Компенсатор Дуба-Мейера Z не совпал с a^τ", gap=gap)

    shocks = _shock_terms(es, sd)

    idio = sd.coincidence(0)[None, :] & es.tau.eq()
    idio = num.indicator(idio, exact)
    A0 = IncreasingProcess(np.cumsum(condition_rows(idio, tree, 0), axis=0), tree, Level.optional, name="A0")
    a0 = IncreasingProcess(np.cumsum(condition_rows(idio, tree, 1), axis=0), tree, Level.predictable, name="a0")
    Z0 = AdaptedProcess(ones - condition_rows(np.cumsum(idio, axis=0), tree), tree, Level.optional, name="Z0")

    nhat = A0.values - a0.values
    for s in shocks:
        prev = np.vstack([s.p.values[:1], s.p.values[:-1]])
        dN = increments(s.comp.N.values)
        dN[0] = 0 * dN[0]
        at_shock = num.indicator(s.time.eq(), exact) * (increments(s.p.values) - s.v)
        at_shock[0] = 0 * at_shock[0]
        nhat = nhat + np.cumsum((prev + s.v) * dN + at_shock, axis=0)

    immersed = bool(check_immersion(es))
    logger.info(f"Данные Азема: шоков {len(shocks)}, иммерсия {'есть' if immersed else 'нет'}")
    return AzemaData(
        Z=Z,
        Adual=Adual,
        adual=adual,
        mu=AdaptedProcess(Adual.values + Z.values, tree, Level.optional, name="μ"),
        m=dm.martingale,
        Nhat=AdaptedProcess(nhat, tree, Level.optional, name="N̂"),
        shocks=tuple(shocks),
        A0=A0,
        a0=a0,
        Z0=Z0,
        decomposition=sd,
        immersed=immersed,
    )


def survival_from_shocks(ad: AzemaData) -> np.ndarray:
    """1 - Σ_i p^i_{T^i} 1_{T^i<=n} - A^0_n."""
    out = num.ones(ad.Z.values.shape, ad.Z.filtration.exact) - ad.A0.values
    for s in ad.shocks:
        hit = s.time.finite
        at_shock = num.zeros(s.time.tree.size, s.time.tree.exact)
        at_shock[hit] = s.p.values[s.time.value[hit], hit]
        out = out - s.time.indicator() * at_shock[None, :]
    return out


def azema_gaps(ad: AzemaData) -> Dict[str, float]:
    """
    Разрывы тождеств для данных Азема (узловой максимум):
    survival (Z + A^τ = 1), shock_survival (Z через шоки), a_assembly
    (Δa^τ = Σ w^i + Δa^0), nhat (1 - N̂ - a^τ = Z), idiosyncratic (Z^0 + A^0 = 1),
    и мартингальность μ, m, N̂.
    """
    exact = ad.Z.filtration.exact
    tree = ad.Z.filtration
    ones = num.ones(ad.Z.values.shape, exact)
    assembled = increments(ad.a0.values)
    for s in ad.shocks:
        assembled = assembled + s.w
    gaps = {
        "survival": num.max_abs(ad.Z.values + ad.Adual.values - ones),
        "shock_survival": num.max_abs(ad.Z.values - survival_from_shocks(ad)),
        "a_assembly": num.max_abs(increments(ad.adual.values) - assembled),
        "nhat": num.max_abs(ones - ad.Nhat.values - ad.adual.values - ad.Z.values),
        "idiosyncratic": num.max_abs(ad.Z0.values + ad.A0.values - ones),
        "nhat_identity": num.max_abs(ad.Nhat.values - (ad.Adual.values - ad.adual.values)),
    }
    for name, proc in (("mu_martingale", ad.mu), ("m_martingale", ad.m), ("nhat_martingale", ad.Nhat)):
        gaps[name] = is_martingale(proc, tree, EPS_MART).worst_error
    return gaps


# ========== Процессы p^i и g^i ==========

def stopped_gap(p: np.ndarray, T: RandomTime) -> float:
    """max_n |p_n - p_{n∧T}|."""
    idx = np.minimum(np.arange(p.shape[0])[:, None], T.value[None, :])
    stopped = np.take_along_axis(p, idx, axis=0)
    return num.max_abs(p - stopped)


def p_processes(es: EnlargedSpace, sd: ShockDecomposition) -> PProcesses:
    """
    Raises:
        ContractViolation: иммерсия не выполнена (формулы через p^i теряют смысл).
    """
    check = check_immersion(es)
    if not check:
        raise ContractViolation(
            f"Гипотеза (H) не выполнена (расхождение {check.worst_error:.3e} в узле {check.node}); "
            f"процессы p^i определены только при иммерсии"
        )
    tree, exact = es.tree, es.exact
    ps, gs, gaps = [], [], []
    for i, shock in enumerate(sd.shocks, start=1):
        rows = np.tile(num.indicator(sd.coincidence(i), exact), (tree.horizon + 1, 1))
        p = AdaptedProcess(condition_rows(rows, tree), tree, Level.optional, name=f"p{i}")
        g = AdaptedProcess(condition_rows(rows, es.G), es.G, Level.optional, name=f"g{i}")
        ps.append(p)
        gs.append(g)
        gaps.append(stopped_gap(p.values, shock))
    return PProcesses(p=tuple(ps), g=tuple(gs), stopped_gap=tuple(gaps))


# ========== Компенсатор в G и интенсивность ==========

def g_compensator_and_intensity(
    es: EnlargedSpace,
    sd: ShockDecomposition,
    ad: AzemaData,
) -> IntensityData:
    """
    ΔΛ_k = Δa^τ_k / Z_{k-1} на {τ >= k}; N = 1_{τ<=·} - Λ - мартингал в G.

    Сборка через шоки: ΔΛ_k = Σ_i (g^i_{k-1} + u^i_k) ΔΛ^i_k 1_{τ>=k} + ΔΛ^0_k,
    и F-форма интенсивности Σ_i (p^i_{k-1} + v^i_k)/Z_{k-1} ΔΛ^i_k 1_{T^i>=k}
    + Δa^0_k / Z_{k-1}. Обе сверяются с прямым вычислением.

    Raises:
        SingularityError: Z_{k-1} = 0 на живой ветви.
        ConsistencyError: прямой компенсатор не совпал с компенсатором τ в G.
    """
    tree, exact = es.tree, es.exact
    tol = 0.0 if exact else EPS_MART
    Z = ad.Z.values
    da = increments(ad.adual.values)
    live = es.tau.ge()

    hazard = num.zeros(Z.shape, exact)
    for k in range(1, Z.shape[0]):
        dead = (Z[k - 1] == 0) & live[k]
        if dead.any():
            leaf = int(np.flatnonzero(dead)[0])
            raise SingularityError("Z_(n-1) = 0 на живой ветви", node=(k, int(tree.labels(k - 1)[leaf])))
        hazard[k] = num.safe_div(da[k], Z[k - 1], exact)

    steps = hazard * num.indicator(live, exact)
    steps[0] = 0 * steps[0]
    Lambda = IncreasingProcess(np.cumsum(steps, axis=0), es.G, Level.predictable, name="Λ")
    N = AdaptedProcess(es.tau.indicator() - Lambda.values, es.G, Level.optional, name="N")

    direct = compensator(es.tau, es.G)
    gap = num.max_abs(direct.Lambda.values - Lambda.values)
    if gap > tol:
        raise ConsistencyError("Компенсатор Δa/Z_- не совпал с компенсатором τ в G", gap=gap)

    rows0 = num.indicator(sd.coincidence(0)[None, :] & es.tau.eq(), exact)
    dLambda0 = condition_rows(rows0, es.G, 1)
    dLambda0[0] = 0 * dLambda0[0]

    assembly = dLambda0.copy()
    da0 = increments(ad.a0.values)
    f_form = num.zeros(Z.shape, exact)
    for k in range(1, Z.shape[0]):
        f_form[k] = num.safe_div(da0[k], Z[k - 1], exact)

    gs, us = [], []
    for i, s in enumerate(ad.shocks, start=1):
        rows = np.tile(num.indicator(sd.coincidence(i), exact), (tree.horizon + 1, 1))
        g = condition_rows(rows, es.G)
        dN = increments(s.comp.N.values)
        cov = increments(g) * dN
        cov[0] = 0 * cov[0]
        u = num.safe_div(condition_rows(cov, es.G, 1), s.comp.jumps, exact)
        g_prev = np.vstack([g[:1], g[:-1]])
        term = (g_prev + u) * s.comp.jumps * num.indicator(live, exact)
        term[0] = 0 * term[0]
        assembly = assembly + term
        for k in range(1, Z.shape[0]):
            f_form[k] = f_form[k] + num.safe_div(s.w[k], Z[k - 1], exact)
        gs.append(AdaptedProcess(g, es.G, Level.optional, name=f"g{i}"))
        us.append(u)

    gaps = {
        "n_martingale": is_martingale(N, es.G, EPS_MART).worst_error,
        "shock_assembly": num.max_abs(assembly - steps),
        "intensity_f_form": num.max_abs(f_form - hazard),
    }
    logger.info(
        f"Интенсивность в G: сборка через шоки {gaps['shock_assembly']:.3e}, "
        f"F-форма {gaps['intensity_f_form']:.3e}"
    )
    return IntensityData(
        hazard=hazard,
        Lambda=Lambda,
        N=N,
        g=tuple(gs),
        u=tuple(us),
        Lambda0=np.cumsum(dLambda0, axis=0),
        assembly=assembly,
        f_form=f_form,
        gaps=gaps,
    )


# ========== Проекции стохастических интегралов ==========

def check_projection_identities(es: EnlargedSpace, ad: AzemaData, intensity: IntensityData,
                                H: Optional[np.ndarray] = None) -> Dict[str, float]:
    """
    Проекции на F интегралов по мартингалам (при (H) выполняются точно):
    (i) o(Σ 1_{τ>k-1} Δμ_k) = Σ Z_{k-1} Δμ_k для F-мартингала μ;
    (ii) o(Σ H_k ΔN_k) = Σ H_k ΔN̂_k для F-предсказуемого H (по умолчанию H_k = Z_{k-1}).

    Raises:
        ContractViolation: H не предсказуем.
    """
    tree, exact = es.tree, es.exact
    alive = num.ones(ad.Z.values.shape, exact) - es.tau.indicator()
    alive_prev = np.vstack([num.ones((1, tree.size), exact), alive[:-1]])
    Z_prev = np.vstack([num.ones((1, tree.size), exact), ad.Z.values[:-1]])

    d_mu = increments(ad.mu.values)
    d_mu[0] = 0 * d_mu[0]
    lhs_i = condition_rows(np.cumsum(alive_prev * d_mu, axis=0), tree)
    rhs_i = np.cumsum(Z_prev * d_mu, axis=0)

    dN = increments(intensity.N.values)
    dN[0] = 0 * dN[0]
    dNhat = increments(ad.Nhat.values)
    dNhat[0] = 0 * dNhat[0]
    if H is None:
        H = Z_prev
    else:
        H = AdaptedProcess(num.coerce(H, exact), tree, Level.predictable, name="H").values
    lhs_ii = condition_rows(np.cumsum(H * dN, axis=0), tree)
    rhs_ii = np.cumsum(H * dNhat, axis=0)
    return {
        "optional_integral": num.max_abs(lhs_i - rhs_i),
        "compensated_integral": num.max_abs(lhs_ii - rhs_ii),
    }


def projections_coincide(ad: AzemaData) -> Tuple[bool, bool]:
    """
    (A^τ = a^τ, все заряженные шоки F-предсказуемы). При (H) и
    предсказуемой непрерывной части A оба значения совпадают.
    """
    tol = 0.0 if ad.Z.filtration.exact else EPS_MART
    equal = num.max_abs(ad.Adual.values - ad.adual.values) <= tol
    predictable = all(is_predictable(s.time, s.comp.Lambda.filtration) for s in ad.shocks)
    return equal, predictable
