# defaultlab/models/process.py
"""Процессы и случайные моменты на листьях дерева сценариев."""
from dataclasses import dataclass
from enum import Enum
from typing import Any, List, Optional, Tuple

import numpy as np

from defaultlab.config import EPS_MART, INF_TIME
from defaultlab.errors import ContractViolation
from defaultlab.models.tree import Filtration, ScenarioTree
from defaultlab.utils import numeric as num

INF = INF_TIME


class Level(str, Enum):
    optional = "optional"
    predictable = "predictable"
    raw = "raw"


class TimeLevel(str, Enum):
    f_stopping = "F-stopping-time"
    g_stopping = "G-stopping-time"
    raw = "raw-random-time"

    @classmethod
    def stopping_in(cls, filtration: Filtration) -> "TimeLevel":
        return cls.f_stopping if filtration.name == "F" else cls.g_stopping


def measurability_gap(values: np.ndarray, filtration: Filtration, lag: int) -> Tuple[float, Optional[Tuple[int, int]]]:
    """
    Наибольший разброс значений values[n] внутри атомов F_{n-lag}.

    Возвращает (разброс, узел) - узел (n, атом) с худшим разбросом или None.
    """
    worst, node = 0.0, None
    for n in range(values.shape[0]):
        for a, idx in enumerate(filtration.atoms(n - lag)):
            row = values[n, idx]
            spread = num.max_abs(row - row[0])
            if spread > worst:
                worst, node = spread, (n, a)
    return worst, node


@dataclass(frozen=True, eq=False)
class AdaptedProcess:
    """
    Процесс X_n(ω) на сетке 0..N. Уровень измеримости проверяется при создании:
    optional - X_n постоянен на атомах F_n, predictable - на атомах F_{n-1}.
    """
    values: np.ndarray
    filtration: Filtration
    level: Level = Level.optional
    name: str = ""

    def __post_init__(self):
        expected = (self.filtration.horizon + 1, self.filtration.size)
        if self.values.shape != expected:
            raise ContractViolation(f"Процесс {self.name!r}: форма {self.values.shape}, ожидалась {expected}")
        if self.level == Level.raw:
            return
        lag = 0 if self.level == Level.optional else 1
        tol = 0.0 if self.filtration.exact else EPS_MART
        gap, node = measurability_gap(self.values, self.filtration, lag)
        if gap > tol:
            raise ContractViolation(
                f"Процесс {self.name!r} не {self.level.value}: разброс {gap:.3e} в узле {node}"
            )

    @property
    def horizon(self) -> int:
        return self.values.shape[0] - 1

    def at(self, n: int) -> List[Any]:
        """Значения в момент n по атомам F_n (или F_{n-1} для предсказуемых)."""
        lag = 1 if self.level == Level.predictable else 0
        return [self.values[n, idx[0]] for idx in self.filtration.atoms(n - lag)]

    def table(self) -> List[Tuple[int, int, Any]]:
        """Строки (n, атом F_n, значение)."""
        rows = []
        for n in range(self.horizon + 1):
            for a, idx in enumerate(self.filtration.atoms(n)):
                rows.append((n, a, self.values[n, idx[0]]))
        return rows


@dataclass(frozen=True, eq=False)
class IncreasingProcess(AdaptedProcess):
    """Возрастающий процесс с нулевым начальным значением (возможно, raw)."""

    def __post_init__(self):
        super().__post_init__()
        if np.any(self.values[0] != 0):
            raise ContractViolation(f"Возрастающий процесс {self.name!r}: значение в 0 должно быть 0")
        if self.values.shape[0] > 1:
            steps = self.values[1:] - self.values[:-1]
            tol = 0 if self.filtration.exact else EPS_MART
            if np.any(steps < -tol):
                n, k = np.argwhere(steps < -tol)[0]
                raise ContractViolation(
                    f"Процесс {self.name!r} убывает на шаге n={n + 1} (лист {k})"
                )


@dataclass(frozen=True, eq=False)
class RandomTime:
    """
    Случайный момент со значениями в 0..N или сентинел INF ("после горизонта").
    Соглашение: 1_{T<=n} = 0 при T = INF для всех n.
    """
    value: np.ndarray
    tree: ScenarioTree
    level: TimeLevel = TimeLevel.raw
    name: str = ""

    def __post_init__(self):
        value = np.asarray(self.value)
        if value.shape != (self.tree.size,):
            raise ContractViolation(
                f"Момент {self.name!r} задан не на всех листьях: {value.shape} вместо ({self.tree.size},)"
            )
        ok = ((value >= 0) & (value <= self.tree.horizon)) | (value == INF)
        if not np.all(ok):
            raise ContractViolation(f"Момент {self.name!r} принимает значения вне сетки и не равен INF")
        object.__setattr__(self, "value", value.astype(np.int64))

    @property
    def finite(self) -> np.ndarray:
        return self.value <= self.tree.horizon

    def _grid(self) -> np.ndarray:
        return np.arange(self.tree.horizon + 1)[:, None]

    def le(self) -> np.ndarray:
        """Маска (N+1, K) события {T <= n}."""
        return self.value[None, :] <= self._grid()

    def eq(self) -> np.ndarray:
        return self.value[None, :] == self._grid()

    def ge(self) -> np.ndarray:
        return self.value[None, :] >= self._grid()

    def indicator(self) -> np.ndarray:
        """1_{T<=n} в арифметике дерева."""
        return num.indicator(self.le(), self.tree.exact)

    def with_level(self, level: TimeLevel) -> "RandomTime":
        return RandomTime(value=self.value, tree=self.tree, level=level, name=self.name)

    def lift_to(self, tree: ScenarioTree) -> "RandomTime":
        """Перенести момент на расширение дерева (уровень F сохраняется)."""
        return RandomTime(value=tree.lift(self.value, self.tree), tree=tree, level=self.level, name=self.name)
