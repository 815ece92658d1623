# defaultlab/models/tree.py
"""
Конечное фильтрованное вероятностное пространство.

Листья несут вероятности, фильтрация задаётся метками атомов на каждом шаге:
partitions[n][k] - номер атома F_n, содержащего лист k. Номера атомов идут
в порядке первого появления, поэтому вывод детерминирован.
"""
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from defaultlab.config import EPS_SUM
from defaultlab.errors import ContractViolation, RangeError
from defaultlab.utils import numeric as num

logger = logging.getLogger(__name__)


def relabel(keys: Sequence[Any]) -> np.ndarray:
    """Перенумеровать произвольные хешируемые ключи в порядке первого появления."""
    mapping: Dict[Any, int] = {}
    out = np.empty(len(keys), dtype=np.int64)
    for k, key in enumerate(keys):
        if key not in mapping:
            mapping[key] = len(mapping)
        out[k] = mapping[key]
    return out


@dataclass(frozen=True, eq=False)
class Filtration:
    """Возрастающая последовательность разбиений множества листьев."""
    prob: np.ndarray
    partitions: Tuple[np.ndarray, ...]
    exact: bool = True
    name: str = "F"
    _atoms: Dict[int, List[np.ndarray]] = field(default_factory=dict, init=False, repr=False)

    @property
    def horizon(self) -> int:
        return len(self.partitions) - 1

    @property
    def size(self) -> int:
        return len(self.prob)

    def check_time(self, n: int, allow_prior: bool = False) -> None:
        low = -1 if allow_prior else 0
        if not (low <= n <= self.horizon):
            raise RangeError(f"Индекс времени {n} вне диапазона [{low}, {self.horizon}]")

    def labels(self, n: int) -> np.ndarray:
        """Метки атомов F_n; F_{-1} тривиальна."""
        self.check_time(n, allow_prior=True)
        if n == -1:
            return np.zeros(self.size, dtype=np.int64)
        return self.partitions[n]

    def atoms(self, n: int) -> List[np.ndarray]:
        """Индексы листьев каждого атома F_n."""
        if n not in self._atoms:
            labels = self.labels(n)
            count = int(labels.max()) + 1 if labels.size else 0
            order = np.argsort(labels, kind="stable")
            bounds = np.searchsorted(labels[order], np.arange(count + 1))
            self._atoms[n] = [order[bounds[a]:bounds[a + 1]] for a in range(count)]
        return self._atoms[n]

    def atom_count(self, n: int) -> int:
        return len(self.atoms(n))

    def atom_prob(self, n: int) -> List[Any]:
        return [self.prob[idx].sum() for idx in self.atoms(n)]

    def with_partitions(self, partitions: Sequence[np.ndarray], name: str) -> "Filtration":
        return Filtration(prob=self.prob, partitions=tuple(partitions), exact=self.exact, name=name)


@dataclass(frozen=True, eq=False)
class ScenarioTree(Filtration):
    """
    Дерево сценариев: листья, их вероятности и фильтрация F.

    coords - дополнительные координаты расширений (например, theta, shock);
    parent/parent_index связывают расширение с исходным деревом, так что
    F-адаптированные процессы переносятся без изменений.
    """
    coords: Dict[str, np.ndarray] = field(default_factory=dict)
    parent: Optional["ScenarioTree"] = None
    parent_index: Optional[np.ndarray] = None
    leaf_names: Tuple[str, ...] = ()
    _fibers: Dict[str, np.ndarray] = field(default_factory=dict, init=False, repr=False)

    # ========== Построение ==========

    @classmethod
    def from_paths(
        cls,
        paths: Sequence[Sequence[Any]],
        probs: Sequence[Any],
        exact: bool = True,
    ) -> "ScenarioTree":
        """
        Дерево по списку путей одинаковой длины N и их вероятностям.

        Атом F_n - множество путей с общим префиксом длины n. Пути нулевой
        вероятности отбрасываются.

        Raises:
            ContractViolation: отрицательные вероятности, сумма не равна 1,
                пути разной длины.
        """
        if len(paths) != len(probs) or not paths:
            raise ContractViolation("Число путей и вероятностей должно совпадать и быть положительным")
        horizon = len(paths[0])
        if any(len(p) != horizon for p in paths):
            raise ContractViolation("Все пути должны иметь длину горизонта")

        prob = num.coerce(list(probs), exact)
        if np.any(prob < 0):
            raise ContractViolation("Отрицательная вероятность листа")
        check_total(prob, exact)

        keep = np.flatnonzero(prob > 0)
        if len(keep) < len(prob):
            logger.debug(f"Отброшено листьев нулевой вероятности: {len(prob) - len(keep)}")
        kept_paths = [tuple(paths[k]) for k in keep]
        partitions = tuple(relabel([p[:n] for p in kept_paths]) for n in range(horizon + 1))
        names = tuple("".join(str(x) for x in p) for p in kept_paths)
        return cls(prob=prob[keep], partitions=partitions, exact=exact, leaf_names=names)

    @classmethod
    def trivial(cls, horizon: int, exact: bool = True) -> "ScenarioTree":
        """Одна траектория: F_n тривиальна при всех n."""
        return cls.from_paths([tuple("." * horizon)], [1], exact=exact)

    def extend(self, name: str, values: Any, weights: Any) -> "ScenarioTree":
        """
        Расширение дерева новой координатой с условным законом weights.

        values/weights имеют форму (m,) (общий закон) или (K, m) (закон на
        каждом листе). Фильтрация F переносится без изменений: новая
        координата в F не раскрывается.
        """
        if name in self.coords:
            raise ContractViolation(f"Координата {name!r} уже есть в дереве")
        values = np.asarray(values, dtype=object)
        weights = num.coerce(weights, self.exact)
        if weights.ndim == 1:
            weights = np.tile(weights, (self.size, 1))
        if values.ndim == 1:
            values = np.tile(values, (self.size, 1))
        if weights.shape[0] != self.size or values.shape != weights.shape:
            raise ContractViolation("Размеры значений и весов расширения не согласованы")
        if np.any(weights < 0):
            raise ContractViolation(f"Отрицательный вес в расширении {name!r}")
        for k in range(self.size):
            check_total(weights[k], self.exact)

        leaves, coord = [], []
        for k in range(self.size):
            for j in range(weights.shape[1]):
                if weights[k, j] > 0:
                    leaves.append((k, j))
                    coord.append(values[k, j])
        parent_index = np.array([k for k, _ in leaves], dtype=np.int64)
        prob = np.array([self.prob[k] * weights[k, j] for k, j in leaves] + [None], dtype=object)[:-1]
        if not self.exact:
            prob = prob.astype(float)

        coords = {key: arr[parent_index] for key, arr in self.coords.items()}
        coords[name] = np.array(coord + [None], dtype=object)[:-1]
        if all(isinstance(v, (int, np.integer)) for v in coord):
            coords[name] = coords[name].astype(np.int64)

        names = tuple(
            f"{self.leaf_names[k] if self.leaf_names else k}|{name}={values[k, j]}" for k, j in leaves
        )
        return ScenarioTree(
            prob=prob,
            partitions=tuple(p[parent_index] for p in self.partitions),
            exact=self.exact,
            name=self.name,
            coords=coords,
            parent=self,
            parent_index=parent_index,
            leaf_names=names,
        )

    def reweighted(self, factors: Any) -> "ScenarioTree":
        """Эквивалентная замена меры: вероятности листов умножаются на положительные множители."""
        factors = num.coerce(factors, self.exact)
        if np.any(factors <= 0):
            raise ContractViolation("Множители замены меры должны быть положительными")
        prob = self.prob * factors
        prob = prob / prob.sum()
        return ScenarioTree(
            prob=prob,
            partitions=self.partitions,
            exact=self.exact,
            name=self.name,
            coords=self.coords,
            parent=self.parent,
            parent_index=self.parent_index,
            leaf_names=self.leaf_names,
        )

    # ========== Связь с исходным деревом ==========

    @property
    def root(self) -> "ScenarioTree":
        tree = self
        while tree.parent is not None:
            tree = tree.parent
        return tree

    def index_from(self, ancestor: "ScenarioTree") -> np.ndarray:
        """Для каждого листа - индекс его предка в дереве ancestor."""
        index = np.arange(self.size)
        tree = self
        while tree is not ancestor:
            if tree.parent is None:
                raise ContractViolation("Дерево не является расширением указанного предка")
            index = tree.parent_index[index]
            tree = tree.parent
        return index

    @property
    def root_index(self) -> np.ndarray:
        return self.index_from(self.root)

    def lift(self, values: Any, source: Optional["ScenarioTree"] = None) -> np.ndarray:
        """Перенести значения с листьев source (по умолчанию корня) на листья этого дерева."""
        source = self.root if source is None else source
        arr = np.asarray(values)
        if arr.shape[-1] != source.size:
            raise ContractViolation(
                f"Последняя ось ({arr.shape[-1]}) не совпадает с числом листьев источника ({source.size})"
            )
        return arr[..., self.index_from(source)]

    def fibers(self, along: str = "theta") -> np.ndarray:
        """
        Метки Θ-слоёв: листья с общим корневым листом и одинаковыми
        координатами, кроме along.
        """
        if along not in self._fibers:
            others = sorted(k for k in self.coords if k != along)
            root_index = self.root_index
            keys = [
                (int(root_index[k]),) + tuple(self.coords[c][k] for c in others)
                for k in range(self.size)
            ]
            self._fibers[along] = relabel(keys)
        return self._fibers[along]


def check_total(prob: np.ndarray, exact: bool) -> None:
    """Сумма вероятностей равна 1 (точно или с допуском EPS_SUM)."""
    total = prob.sum()
    if exact:
        if total != 1:
            raise ContractViolation(f"Сумма вероятностей равна {total}, а не 1")
    elif abs(float(total) - 1.0) > EPS_SUM:
        raise ContractViolation(f"Сумма вероятностей равна {float(total)!r}, а не 1")


def binomial_paths(horizon: int, up_prob: Any = Fraction(1, 2)) -> Tuple[List[Tuple[str, ...]], List[Any]]:
    """Все пути u/d длины horizon и их вероятности при независимых шагах."""
    paths: List[Tuple[str, ...]] = [()]
    probs: List[Any] = [Fraction(1)]
    up = num.exact_scalar(up_prob) if not isinstance(up_prob, float) else up_prob
    for _ in range(horizon):
        paths = [p + (m,) for p in paths for m in ("u", "d")]
        probs = [q * (up if m == "u" else 1 - up) for q in probs for m in ("u", "d")]
    return paths, probs
