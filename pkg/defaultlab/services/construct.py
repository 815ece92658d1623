# defaultlab/services/construct.py
"""
Конструкции момента дефолта на расширенном пространстве:

- cox_construct: порог τ = inf{n : A_n >= Θ};
- family_construct: τ = T^S для семейства F-моментов и закона S;
- construct_tau: общий построитель с заданным A, τ = T^S, где T^0 строится
  по процессу a и Θ, а S имеет условный закон q.

Θ дискретизирована на сетке средних точек, поэтому точные тождества
проверяются на фикстурах, где значения a лежат на этой сетке. Остаточная
масса 1 - A_N уходит на сентинел-шок (τ = ∞ после горизонта).
"""
import logging
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Any, List, Optional, Sequence, Tuple

import numpy as np

from defaultlab.config import DEFAULT_THETA_LEVELS, EPS_MART, EPS_SUM
from defaultlab.errors import ConstructionError, ContractViolation
from defaultlab.models.process import INF, IncreasingProcess, Level, RandomTime, TimeLevel
from defaultlab.models.tree import ScenarioTree
from defaultlab.services.enlargement import stopped_gap
from defaultlab.services.kernel import condition, condition_rows, extend_with_uniform, increments, is_martingale
from defaultlab.services.stopping import is_stopping_time
from defaultlab.utils import numeric as num

logger = logging.getLogger(__name__)

SENTINEL = -1


class ConstructionMode(str, Enum):
    discrete_exact = "discrete-exact"
    exponential = "paper-exponential"


class SamplingIndex(str, Enum):
    previous = "previous"
    current = "current"


class BuildKind(str, Enum):
    cox = "cox"
    family = "family"
    general = "general"


@dataclass(frozen=True, eq=False)
class ShockSpec:
    """Назначенный шок: F-момент T^i и размер скачка ΔA_{T^i} (F_T-измеримый)."""
    time: RandomTime
    jump: np.ndarray


@dataclass(frozen=True, eq=False)
class ConstructionSpec:
    """
    Целевой процесс A = A^c + Σ_i ΔA_{T^i} 1_{T^i<=·} на корневом дереве.
    """
    tree: ScenarioTree
    A_c: np.ndarray
    shocks: Tuple[ShockSpec, ...] = ()

    def __post_init__(self):
        tree, exact = self.tree, self.tree.exact
        object.__setattr__(self, "A_c", num.coerce(self.A_c, exact))
        IncreasingProcess(self.A_c, tree, Level.optional, name="A^c")
        shocks = []
        for i, shock in enumerate(self.shocks, start=1):
            T = shock.time
            if T.tree is not tree:
                raise ContractViolation(f"Шок T{i} задан не на корневом дереве")
            if not is_stopping_time(T, tree):
                raise ContractViolation(f"Шок T{i} не является F-моментом остановки")
            if np.any(T.value == 0):
                raise ContractViolation(f"Шок T{i} принимает значение 0")
            jump = num.coerce(np.broadcast_to(np.asarray(shock.jump, dtype=object), (tree.size,)), exact)
            jump[~T.finite] = 0 * jump[~T.finite]
            if np.any(jump < 0):
                raise ContractViolation(f"Скачок шока T{i} отрицателен")
            for n in range(tree.horizon + 1):
                for idx in tree.atoms(n):
                    hit = idx[T.value[idx] == n]
                    if hit.size and num.max_abs(jump[hit] - jump[hit[0]]) > 0:
                        raise ContractViolation(f"Скачок шока T{i} не измерим в момент T{i}")
            shocks.append(ShockSpec(time=T.with_level(TimeLevel.f_stopping), jump=jump))
        for i in range(len(shocks)):
            for j in range(i + 1, len(shocks)):
                both = shocks[i].time.finite & (shocks[i].time.value == shocks[j].time.value)
                if both.any():
                    raise ContractViolation(f"Шоки T{i + 1} и T{j + 1} совпадают с положительной вероятностью")
        object.__setattr__(self, "shocks", tuple(shocks))
        total = self.target()[-1]
        if np.any(total > 1 + (0 if exact else EPS_SUM)):
            raise ContractViolation("Целевой процесс A превышает 1")

    @property
    def horizon(self) -> int:
        return self.tree.horizon

    @property
    def components(self) -> Tuple[int, ...]:
        """Значения S: 0 - идиосинкратическая часть, i - шоки, -1 - сентинел."""
        return (0,) + tuple(range(1, len(self.shocks) + 1)) + (SENTINEL,)

    def target(self) -> np.ndarray:
        out = self.A_c.copy()
        for shock in self.shocks:
            out = out + shock.time.indicator() * shock.jump[None, :]
        return out

    def probabilities(self) -> np.ndarray:
        """
        Мартингалы p^c_n = E[масса компоненты c | F_n] в порядке components:
        p^0 = E[A^c_N|F_n], p^i = E[ΔA_{T^i} 1_{T^i<=N}|F_n], p^{-1} = E[1 - A_N|F_n].
        """
        tree = self.tree
        masses = [self.A_c[-1]] + [s.jump for s in self.shocks] + [1 - self.target()[-1]]
        return np.array([condition_rows(np.tile(m, (tree.horizon + 1, 1)), tree) for m in masses])

    @classmethod
    def from_target(cls, tree: ScenarioTree, A: Any, shock_times: Sequence[RandomTime]) -> "ConstructionSpec":
        """Выделить из A назначенные скачки в моменты shock_times; остаток - A^c."""
        A = num.coerce(A, tree.exact)
        IncreasingProcess(A, tree, Level.optional, name="A")
        shocks, A_c = [], A.copy()
        for T in shock_times:
            jump = num.zeros(tree.size, tree.exact)
            hit = np.flatnonzero(T.finite)
            jump[hit] = A[T.value[hit], hit] - A[T.value[hit] - 1, hit]
            shocks.append(ShockSpec(time=T, jump=jump))
            A_c = A_c - T.indicator() * jump[None, :]
        return cls(tree=tree, A_c=A_c, shocks=tuple(shocks))


@dataclass(frozen=True, eq=False)
class BuiltTime:
    """Результат конструкции: τ на расширенном дереве и внутренние процессы."""
    tree: ScenarioTree
    tau: RandomTime
    T0: RandomTime
    kind: BuildKind
    shocks: Tuple[RandomTime, ...] = ()
    spec: Optional[ConstructionSpec] = None
    p: Optional[np.ndarray] = None
    q: Optional[np.ndarray] = None
    a: Optional[np.ndarray] = None
    abar: Optional[np.ndarray] = None
    alpha: Optional[np.ndarray] = None
    nu: Optional[RandomTime] = None
    mode: Optional[ConstructionMode] = None
    sampling: Optional[SamplingIndex] = None
    theta_levels: int = 0
    stopped: Optional[bool] = None

    @property
    def root(self) -> ScenarioTree:
        return self.tree.root

    @property
    def p0(self) -> Optional[np.ndarray]:
        return None if self.p is None or self.kind != BuildKind.general else self.p[0]

    @property
    def candidates(self) -> Tuple[RandomTime, ...]:
        """Кандидаты в шоки для разложения τ (без сентинела)."""
        return self.shocks


# ========== Процесс a ==========

def build_a(
    spec: ConstructionSpec,
    mode: ConstructionMode = ConstructionMode.discrete_exact,
) -> Tuple[np.ndarray, RandomTime]:
    """
    Процесс a и момент взрыва ν = min{n : A^c_n = p^0_n}.

    discrete-exact: 1 - a_n = (1 - a_{n-1})(p^0_n - A^c_n)/(p^0_n - A^c_{n-1}),
    замораживание при нулевом знаменателе;
    paper-exponential: a_n = 1 - exp(-Σ_{k<=n∧ν} ΔA^c_k/(p^0_{k-1} - A^c_{k-1})).
    """
    mode = ConstructionMode(mode)
    tree, exact = spec.tree, spec.tree.exact
    p0 = spec.probabilities()[0]
    Ac = spec.A_c
    slack = p0 - Ac

    tol = 0 if exact else EPS_SUM
    reached = num.to_float(np.abs(slack)) <= tol
    nu_value = np.where(reached.any(axis=0), reached.argmax(axis=0), INF)
    nu = RandomTime(value=nu_value, tree=tree, level=TimeLevel.f_stopping, name="ν")

    if mode == ConstructionMode.exponential:
        ac, p0f = num.to_float(Ac), num.to_float(p0)
        cum = np.zeros(ac.shape)
        for k in range(1, ac.shape[0]):
            den = p0f[k - 1] - ac[k - 1]
            live = (k <= nu_value) & (den > EPS_SUM)
            step = np.zeros(tree.size)
            step[live] = (ac[k, live] - ac[k - 1, live]) / den[live]
            cum[k] = cum[k - 1] + step
        a = 1.0 - np.exp(-cum)
        logger.debug(f"Процесс a (экспоненциальная форма): a_N в [{a[-1].min():.6g}, {a[-1].max():.6g}]")
        return a, nu

    b = num.ones(Ac.shape, exact)
    for k in range(1, Ac.shape[0]):
        den = p0[k] - Ac[k - 1]
        b[k] = b[k - 1]
        live = den != 0
        if np.any(live):
            b[k, live] = b[k - 1, live] * (p0[k, live] - Ac[k, live]) / den[live]
    a = 1 - b
    if np.any(a < 0) or np.any(a > 1):
        raise ConstructionError("Процесс a вышел из [0, 1]: p^0 - A^c отрицателен")
    return a, nu


def theta_levels(m: int, exact: bool) -> np.ndarray:
    """Средние точки (2j-1)/(2m)."""
    if exact:
        return num.coerce([Fraction(2 * j - 1, 2 * m) for j in range(1, m + 1)], True)
    return (2 * np.arange(1, m + 1) - 1) / (2 * m)


def theta_staircase(a: np.ndarray, m: int, exact: bool, strict: bool = True) -> np.ndarray:
    """ā_n = #{j : θ_j < a_n}/m (или θ_j <= a_n при strict=False)."""
    grid = theta_levels(m, exact)
    counts = np.zeros(a.shape, dtype=np.int64)
    for theta in grid:
        counts += (a > theta) if strict else (a >= theta)
    if exact:
        return num.coerce([Fraction(int(c), m) for c in counts.ravel()], True).reshape(a.shape)
    return counts / m


# ========== Условный закон S ==========

def s_conditional_law(
    spec: ConstructionSpec,
    a: np.ndarray,
    sampling: SamplingIndex = SamplingIndex.previous,
    eps: float = EPS_SUM,
) -> np.ndarray:
    """
    q^c_n = p^c_0 + Σ_{l<=n} Δp^c_l / (1 - a_{l*}), l* = l-1 (previous) или l (current).

    Raises:
        ConstructionError: 1 - a = 0 при ненулевом Δp^c, отрицательный q
            в достижимом узле или Σ_c q^c != 1.
    """
    sampling = SamplingIndex(sampling)
    exact = spec.tree.exact
    p = spec.probabilities()
    if not exact:
        p = num.to_float(p)
    tol = 0 if exact else eps
    horizon = spec.horizon

    q = p.copy()
    for l in range(1, horizon + 1):
        at = a[l - 1] if sampling == SamplingIndex.previous else a[l]
        survive = 1 - at
        dp = p[:, l] - p[:, l - 1]
        blocked = (survive[None, :] == 0) & (num.to_float(np.abs(dp)) > tol)
        if blocked.any():
            c, k = np.argwhere(blocked)[0]
            raise ConstructionError(
                f"Компонента S={spec.components[c]} меняется после исчерпания идиосинкратической массы",
                node=(l, int(spec.tree.labels(l)[k])),
            )
        step = num.safe_div(dp, np.broadcast_to(survive, dp.shape), exact)
        q[:, l] = q[:, l - 1] + step

    reachable = np.zeros(a.shape, dtype=bool)
    reachable[1:] = (a[1:] - a[:-1]) > 0
    reachable[-1] |= (1 - a[-1]) > 0
    negative = (q < -tol) & reachable[None, :, :]
    if negative.any():
        c, n, k = np.argwhere(negative)[0]
        raise ConstructionError(
            f"Отрицательный условный закон q для S={spec.components[c]}",
            node=(int(n), int(spec.tree.labels(n)[k])),
            gap=float(q[c, n, k]),
        )
    total_gap = num.max_abs(q.sum(axis=0) - 1)
    if total_gap > tol:
        raise ConstructionError("Условный закон S не суммируется в 1", gap=total_gap)
    return q


def conditional_law(spec: ConstructionSpec, a: np.ndarray, q: np.ndarray) -> np.ndarray:
    """
    P(τ <= n | F_N) при непрерывной Θ:
    Σ_{k<=n} δa_k q^0_k + Σ_i 1_{T^i<=n} [Σ_{k<=N} δa_k q^i_k + (1 - a_N) q^i_N].
    """
    da = increments(a)
    da[0] = 0 * da[0]
    out = np.cumsum(da * q[0], axis=0)
    for i, shock in enumerate(spec.shocks, start=1):
        weight = (da * q[i]).sum(axis=0) + (1 - a[-1]) * q[i, -1]
        out = out + shock.time.indicator() * weight[None, :]
    return out


def target_gap(spec: ConstructionSpec, law: np.ndarray) -> float:
    """max |E[law_n | F_n] - A_n|."""
    return num.max_abs(condition_rows(law, spec.tree) - spec.target())


def built_gap(built: BuiltTime) -> float:
    """max |P(τ <= n | F_n) - A_n| на построенном дереве."""
    tree = built.tree
    law = condition_rows(built.tau.indicator(), tree)
    if built.kind == BuildKind.general:
        target = tree.lift(built.spec.target())
    elif built.kind == BuildKind.cox:
        target = tree.lift(theta_staircase(built.a, built.theta_levels, tree.exact, strict=False))
    else:
        target = num.zeros(law.shape, tree.exact)
        for i, T in enumerate(built.shocks):
            hit = T.finite
            at_shock = num.zeros(tree.size, tree.exact)
            at_shock[hit] = tree.lift(built.p[i])[T.value[hit], hit]
            target = target + T.indicator() * at_shock[None, :]
    return num.max_abs(law - target)


# ========== Построители ==========

def _first_hit(level: np.ndarray, theta: np.ndarray, strict: bool) -> np.ndarray:
    hit = (level > theta[None, :]) if strict else (level >= theta[None, :])
    return np.where(hit.any(axis=0), hit.argmax(axis=0), INF)


def construct_tau(
    spec: ConstructionSpec,
    m: int = DEFAULT_THETA_LEVELS,
    mode: ConstructionMode = ConstructionMode.discrete_exact,
    sampling: Optional[SamplingIndex] = None,
) -> BuiltTime:
    """
    Общий построитель: T^0 = inf{n : a_n > Θ}, S с условным законом q в момент
    T^0∧N, τ = T^S. В режиме discrete-exact на сетке Θ выполняется
    P(τ <= n | F_n) = A_n точно.
    """
    mode = ConstructionMode(mode)
    if sampling is None:
        sampling = SamplingIndex.previous if mode == ConstructionMode.discrete_exact else SamplingIndex.current
    sampling = SamplingIndex(sampling)
    tree, exact = spec.tree, spec.tree.exact
    if exact and mode == ConstructionMode.exponential:
        raise ContractViolation("Экспоненциальная форма a требует дерева с арифметикой double")

    ext1 = extend_with_uniform(tree, m)
    a, nu = build_a(spec, mode)
    abar = theta_staircase(a, m, exact)
    q = s_conditional_law(spec, abar, sampling)
    p = spec.probabilities()
    alpha = p[0] - q[0] * (1 - abar)

    theta = ext1.coords["theta"]
    t0_ext1 = _first_hit(ext1.lift(a), theta, strict=True)
    at = np.minimum(t0_ext1, tree.horizon)
    root = ext1.root_index
    law = q if exact else np.clip(q, 0.0, None)
    weights = np.array([[law[c, at[k], root[k]] for c in range(q.shape[0])] for k in range(ext1.size)], dtype=object)
    ids = np.tile(np.array(spec.components, dtype=object), (ext1.size, 1))
    ext2 = ext1.extend("shock", ids, weights)

    S = ext2.coords["shock"]
    T0 = RandomTime(value=ext2.lift(t0_ext1, ext1), tree=ext2, name="T0")
    shocks = tuple(s.time.lift_to(ext2) for s in spec.shocks)
    tau_value = np.full(ext2.size, INF, dtype=np.int64)
    tau_value[S == 0] = T0.value[S == 0]
    for i, T in enumerate(shocks, start=1):
        tau_value[S == i] = T.value[S == i]
    tau = RandomTime(value=tau_value, tree=ext2, name="τ")

    logger.info(
        f"Построен момент дефолта ({mode.value}, выборка {sampling.value}): "
        f"шоков {len(shocks)}, уровней Θ {m}, листьев {ext2.size}"
    )
    return BuiltTime(
        tree=ext2,
        tau=tau,
        T0=T0,
        kind=BuildKind.general,
        shocks=shocks,
        spec=spec,
        p=p,
        q=q,
        a=a,
        abar=abar,
        alpha=alpha,
        nu=nu,
        mode=mode,
        sampling=sampling,
        theta_levels=m,
    )


def cox_construct(tree: ScenarioTree, A: Any, m: int = DEFAULT_THETA_LEVELS) -> BuiltTime:
    """
    τ = inf{n : A_n >= Θ}. P(τ <= n | F_n) равна ступенчатой функции A на сетке Θ.

    Raises:
        RangeError: m < 2.
        ContractViolation: A не возрастающий адаптированный процесс в [0, 1].
    """
    A = num.coerce(A, tree.exact)
    IncreasingProcess(A, tree, Level.optional, name="A")
    if np.any(A[-1] > 1):
        raise ContractViolation("Процесс A превышает 1")
    ext = extend_with_uniform(tree, m)
    value = _first_hit(ext.lift(A), ext.coords["theta"], strict=False)
    tau = RandomTime(value=value, tree=ext, name="τ")
    logger.info(f"Построен момент Кокса: уровней Θ {m}, P(τ <= N) = {num.fmt(condition(tau.indicator()[-1], -1, ext)[0])}")
    return BuiltTime(tree=ext, tau=tau, T0=tau, kind=BuildKind.cox, a=A, theta_levels=m)


def family_construct(tree: ScenarioTree, times: Sequence[RandomTime], law: Any) -> BuiltTime:
    """
    τ = T^S, где S принимает значение i с условным законом law[i]. Иммерсия
    выполняется тогда и только тогда, когда каждый law[i] остановлен в T^i.

    Raises:
        ContractViolation: закон не суммируется в 1, выходит из [0, 1],
            не мартингал; моменты не F-моменты остановки.
    """
    exact = tree.exact
    law = num.coerce(law, exact)
    expected = (len(times), tree.horizon + 1, tree.size)
    if law.shape != expected:
        raise ContractViolation(f"Форма закона S {law.shape}, ожидалась {expected}")
    if np.any(law < 0) or np.any(law > 1):
        raise ContractViolation("Условные вероятности S вне [0, 1]")
    total_gap = num.max_abs(law.sum(axis=0) - 1)
    if total_gap > (0 if exact else EPS_SUM):
        raise ContractViolation(f"Условные вероятности S не суммируются в 1 (расхождение {total_gap:.3e})")
    for i, T in enumerate(times, start=1):
        if not is_stopping_time(T, tree):
            raise ContractViolation(f"Момент T{i} не является F-моментом остановки")
        if np.any(T.value == 0):
            raise ContractViolation(f"Момент T{i} принимает значение 0")
        check = is_martingale(law[i - 1], tree, 0.0 if exact else EPS_MART)
        if not check:
            raise ContractViolation(f"Закон p{i} не мартингал: ошибка {check.worst_error:.3e} в узле {check.node}")

    ids = np.tile(np.arange(1, len(times) + 1, dtype=object), (tree.size, 1))
    ext = tree.extend("shock", ids, law[:, -1, :].T)
    S = ext.coords["shock"]
    shocks = tuple(T.lift_to(ext).with_level(TimeLevel.f_stopping) for T in times)
    value = np.full(ext.size, INF, dtype=np.int64)
    for i, T in enumerate(shocks, start=1):
        value[S == i] = T.value[S == i]
    tau = RandomTime(value=value, tree=ext, name="τ")
    tol = 0 if exact else EPS_MART
    stopped = all(stopped_gap(law[i], times[i]) <= tol for i in range(len(times)))
    logger.info(f"Построен момент по семейству из {len(times)} моментов; законы остановлены: {stopped}")
    return BuiltTime(tree=ext, tau=tau, T0=RandomTime(np.full(ext.size, INF), ext, name="T0"),
                     kind=BuildKind.family, shocks=shocks, p=law, stopped=stopped)


# ========== Сходимость экспоненциальной формы ==========

@dataclass(frozen=True)
class RefinementRung:
    horizon: int
    max_error: float
    ratio: Optional[float]


def refinement_spec(horizon: int) -> ConstructionSpec:
    """Тривиальное дерево, A^c_n = n/(2N), шок массы 1/2 в момент N/2."""
    if horizon < 2 or horizon % 2:
        raise ContractViolation("Горизонт лестницы должен быть чётным и не меньше 2")
    tree = ScenarioTree.trivial(horizon, exact=False)
    A_c = np.array([[n / (2 * horizon)] for n in range(horizon + 1)])
    shock = RandomTime(value=np.array([horizon // 2]), tree=tree, name="T1")
    return ConstructionSpec(tree=tree, A_c=A_c, shocks=(ShockSpec(time=shock, jump=np.array([0.5])),))


def refinement_study(ladder: Sequence[int] = (8, 16, 32, 64)) -> List[RefinementRung]:
    """
    Ошибка max |P(τ <= n | F_n) - A_n| экспоненциальной формы при непрерывной Θ
    на последовательности горизонтов; ratio - отношение к ошибке предыдущей ступени.
    """
    rungs: List[RefinementRung] = []
    for horizon in ladder:
        spec = refinement_spec(horizon)
        a, _ = build_a(spec, ConstructionMode.exponential)
        q = s_conditional_law(spec, a, SamplingIndex.current)
        error = target_gap(spec, conditional_law(spec, a, q))
        ratio = rungs[-1].max_error / error if rungs and error > 0 else None
        rungs.append(RefinementRung(horizon=horizon, max_error=error, ratio=ratio))
        logger.info(f"Лестница N={horizon}: ошибка {error:.6e}" + (f", отношение {ratio:.4f}" if ratio else ""))
    return rungs
