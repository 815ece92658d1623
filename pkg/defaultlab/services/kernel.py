# defaultlab/services/kernel.py
"""
Ядро: условные ожидания, опциональная/предсказуемая проекции, двойственные
проекции, разложение Дуба-Мейера и дискретные стохастические интегралы.

Словарь дискретного времени: X_{t-} -> X_{n-1}, ΔX_n = X_n - X_{n-1},
<X,Y>_n = Σ_{k<=n} E[ΔX_k ΔY_k | F_{k-1}], F_{-1} тривиальна.
Все функции чистые: входы не изменяются, результаты - новые объекты.
"""
import logging
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Any, Optional, Tuple, Union

import numpy as np

from defaultlab.config import EPS_MART
from defaultlab.errors import ContractViolation, RangeError
from defaultlab.models.process import AdaptedProcess, IncreasingProcess, Level
from defaultlab.models.tree import Filtration, ScenarioTree
from defaultlab.utils import numeric as num

logger = logging.getLogger(__name__)

ProcessLike = Union[AdaptedProcess, np.ndarray]


class ProjectionMode(str, Enum):
    optional = "optional"
    predictable = "predictable"


class Sampling(str, Enum):
    left = "left"
    as_written = "as-written"


@dataclass(frozen=True)
class MartingaleCheck:
    """Результат проверки мартингальности; истинен, если проверка пройдена."""
    ok: bool
    worst_error: float
    node: Optional[Tuple[int, int]] = None

    def __bool__(self) -> bool:
        return self.ok


@dataclass(frozen=True, eq=False)
class DoobMeyer:
    martingale: AdaptedProcess
    compensator: IncreasingProcess


def values_of(x: ProcessLike) -> np.ndarray:
    return x.values if isinstance(x, AdaptedProcess) else np.asarray(x)


def increments(values: np.ndarray) -> np.ndarray:
    """ΔX_n по строкам; ΔX_0 = X_0."""
    out = values.copy()
    out[1:] = values[1:] - values[:-1]
    return out


def expectation(x: Any, filt: Filtration) -> Any:
    """E[x] для величины на листьях."""
    return (filt.prob * np.asarray(x)).sum()


def condition(x: Any, n: int, filt: Filtration) -> np.ndarray:
    """E[x | F_n] на листьях (n = -1 - тривиальная σ-алгебра)."""
    x = np.asarray(x)
    out = num.zeros(filt.size, filt.exact)
    for idx in filt.atoms(n):
        w = filt.prob[idx]
        out[idx] = (w * x[idx]).sum() / w.sum()
    return out


def condition_rows(values: np.ndarray, filt: Filtration, lag: int = 0) -> np.ndarray:
    """Строка n условно на F_{n-lag}."""
    out = num.zeros(values.shape, filt.exact)
    for n in range(values.shape[0]):
        out[n] = condition(values[n], n - lag, filt)
    return out


def cond_exp(x: Any, n: int, tree: Filtration) -> np.ndarray:
    """
    E[X | F_n] по атомам F_n: взвешенное среднее X по листьям атома.

    Raises:
        RangeError: n вне 0..N.
    """
    if not (0 <= n <= tree.horizon):
        raise RangeError(f"Индекс времени {n} вне диапазона [0, {tree.horizon}]")
    x = np.asarray(x)
    if x.shape != (tree.size,):
        raise ContractViolation(f"Величина задана не на всех листьях: {x.shape}")
    leafwise = condition(x, n, tree)
    return num.coerce([leafwise[idx[0]] for idx in tree.atoms(n)], tree.exact)


def projection(X: ProcessLike, mode: Union[str, ProjectionMode], tree: Filtration) -> AdaptedProcess:
    """Опциональная (E[X_n|F_n]) или предсказуемая (E[X_n|F_{n-1}]) проекция."""
    mode = ProjectionMode(mode)
    values = num.coerce(values_of(X), tree.exact)
    if mode == ProjectionMode.optional:
        return AdaptedProcess(condition_rows(values, tree, 0), tree, Level.optional, name="oX")
    return AdaptedProcess(condition_rows(values, tree, 1), tree, Level.predictable, name="pX")


def dual_projection(A: ProcessLike, mode: Union[str, ProjectionMode], tree: Filtration) -> IncreasingProcess:
    """
    Двойственная проекция сырого возрастающего процесса:
    ΔA^o_n = E[ΔA_n | F_n], ΔA^p_n = E[ΔA_n | F_{n-1}].

    Raises:
        ContractViolation: A убывает или A_0 != 0.
    """
    mode = ProjectionMode(mode)
    raw = IncreasingProcess(num.coerce(values_of(A), tree.exact), tree, Level.raw, name="A")
    lag = 0 if mode == ProjectionMode.optional else 1
    steps = condition_rows(increments(raw.values), tree, lag)
    level = Level.optional if lag == 0 else Level.predictable
    return IncreasingProcess(np.cumsum(steps, axis=0), tree, level, name=f"A^{mode.value[0]}")


def doob_meyer(X: ProcessLike, tree: Filtration, eps: float = EPS_MART) -> DoobMeyer:
    """
    Разложение супермартингала X = M - a, Δa_n = X_{n-1} - E[X_n | F_{n-1}].

    Raises:
        ContractViolation: X не супермартингал (с указанием узла).
    """
    values = num.coerce(values_of(X), tree.exact)
    steps = num.zeros(values.shape, tree.exact)
    for n in range(1, values.shape[0]):
        steps[n] = values[n - 1] - condition(values[n], n - 1, tree)
        bad = np.flatnonzero(steps[n] < -eps)
        if bad.size:
            atom = int(tree.labels(n - 1)[bad[0]])
            raise ContractViolation(
                f"Процесс не супермартингал: E[X_n|F_(n-1)] > X_(n-1) в узле n={n}, атом={atom}"
            )
    a = np.cumsum(steps, axis=0)
    return DoobMeyer(
        martingale=AdaptedProcess(values + a, tree, Level.optional, name="M"),
        compensator=IncreasingProcess(a, tree, Level.predictable, name="a"),
    )


def bracket(X: ProcessLike, Y: ProcessLike, tree: Filtration) -> AdaptedProcess:
    """Предсказуемая ковариация <X,Y>_n = Σ_{k<=n} E[ΔX_k ΔY_k | F_{k-1}]."""
    dx = increments(num.coerce(values_of(X), tree.exact))
    dy = increments(num.coerce(values_of(Y), tree.exact))
    prod = dx * dy
    prod[0] = 0 * prod[0]
    return AdaptedProcess(np.cumsum(condition_rows(prod, tree, 1), axis=0), tree, Level.predictable, name="<X,Y>")


def stochastic_integral(H: ProcessLike, X: ProcessLike, sampling: Union[str, Sampling] = Sampling.left):
    """
    Дискретный интеграл: left - Σ_{k<=n} H_{k-1} ΔX_k, as-written - Σ_{k<=n} H_k ΔX_k.
    Значение в 0 равно 0. Для AdaptedProcess на входе возвращается AdaptedProcess.
    """
    sampling = Sampling(sampling)
    h, x = values_of(H), values_of(X)
    if h.shape != x.shape:
        raise ContractViolation(f"Формы H {h.shape} и X {x.shape} не совпадают")
    dx = increments(x)
    terms = dx.copy()
    terms[0] = 0 * dx[0]
    if sampling == Sampling.left:
        terms[1:] = h[:-1] * dx[1:]
    else:
        terms[1:] = h[1:] * dx[1:]
    out = np.cumsum(terms, axis=0)
    if isinstance(X, AdaptedProcess):
        adapted = isinstance(H, AdaptedProcess) and H.level != Level.raw and X.level != Level.raw
        return AdaptedProcess(out, X.filtration, Level.optional if adapted else Level.raw, name="∫HdX")
    return out


def is_martingale(M: ProcessLike, tree: Filtration, eps: float = EPS_MART) -> MartingaleCheck:
    """Проверка |E[M_n | F_{n-1}] - M_{n-1}| <= eps во всех узлах."""
    values = values_of(M)
    worst, node = 0.0, None
    for n in range(1, values.shape[0]):
        gap = num.to_float(np.abs(condition(values[n], n - 1, tree) - values[n - 1]))
        k = int(np.argmax(gap))
        if gap[k] > worst:
            worst, node = float(gap[k]), (n, int(tree.labels(n - 1)[k]))
    ok = worst <= eps
    if not ok:
        logger.debug(f"Мартингальность нарушена: ошибка {worst:.3e} в узле {node}")
    return MartingaleCheck(ok=ok, worst_error=worst, node=node if not ok else None)


def extend_with_uniform(tree: ScenarioTree, m: int) -> ScenarioTree:
    """
    Произведение с независимой координатой Θ на сетке средних точек
    (2j-1)/(2m), j = 1..m, масса 1/m. F не раскрывает Θ.

    Raises:
        RangeError: m < 2.
    """
    if m < 2:
        raise RangeError(f"Число уровней Θ должно быть не меньше 2, получено {m}")
    if tree.exact:
        values = [Fraction(2 * j - 1, 2 * m) for j in range(1, m + 1)]
        weights = [Fraction(1, m)] * m
    else:
        values = [(2 * j - 1) / (2 * m) for j in range(1, m + 1)]
        weights = [1.0 / m] * m
    logger.debug(f"Расширение дерева ({tree.size} листьев) координатой Θ с {m} уровнями")
    return tree.extend("theta", values, weights)


def check_duality(A: ProcessLike, X: ProcessLike, mode: Union[str, ProjectionMode], tree: Filtration) -> Tuple[Any, Any]:
    """
    Обе части тождества двойственности:
    E[Σ_n (proj X)_n ΔA_n] и E[Σ_n X_n ΔA^proj_n].
    """
    a = num.coerce(values_of(A), tree.exact)
    x = num.coerce(values_of(X), tree.exact)
    proj_x = projection(x, mode, tree).values
    proj_a = dual_projection(a, mode, tree).values
    lhs = expectation((proj_x * increments(a)).sum(axis=0), tree)
    rhs = expectation((x * increments(proj_a)).sum(axis=0), tree)
    return lhs, rhs
