# defaultlab/services/stopping.py
"""
Алгебра моментов остановки: сужение, предсказуемость, разбиение на
достижимую и вполне недостижимую части, компенсаторы и разложение момента
дефолта на макроэкономические шоки и идиосинкратическую часть.

Дискретный критерий предсказуемости: {T = n} ∈ F_{n-1}. На чисто
F-измеримых конечных деревьях каждый момент достижим; вполне недостижимая
часть представлена моментами, конечная часть которых несётся координатой Θ.
"""
import logging
from dataclasses import dataclass
from typing import TYPE_CHECKING, List, Optional, Sequence, Tuple

import numpy as np

from defaultlab.config import CAPACITY_LIMIT
from defaultlab.errors import CapacityError, ConsistencyError, ContractViolation
from defaultlab.models.process import INF, AdaptedProcess, IncreasingProcess, Level, RandomTime, TimeLevel
from defaultlab.models.tree import Filtration, ScenarioTree
from defaultlab.services.kernel import condition
from defaultlab.utils import numeric as num

if TYPE_CHECKING:
    from defaultlab.services.enlargement import EnlargedSpace

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class StoppingClassification:
    """Разбиение {T < ∞} на достижимую (A) и вполне недостижимую (B) части."""
    predictable_part: Optional[np.ndarray]
    accessible: np.ndarray
    inaccessible: np.ndarray
    flags: Tuple[bool, ...]
    sampled: bool = False


@dataclass(frozen=True, eq=False)
class CompensatorData:
    """Λ - предсказуемый компенсатор, N = 1_{T<=·} - Λ_{·∧T}."""
    time: RandomTime
    hazard: np.ndarray
    Lambda: IncreasingProcess
    N: AdaptedProcess

    @property
    def jumps(self) -> np.ndarray:
        """ΔΛ_n 1_{T>=n}."""
        return self.Lambda.values - np.vstack([self.Lambda.values[:1] * 0, self.Lambda.values[:-1]])


@dataclass(frozen=True, eq=False)
class ShockDecomposition:
    """
    τ = Σ_i T^i 1_{T^i = τ} + T^0 1_{T^0 = τ}.

    attribution[k]: -1 - дефолта нет, 0 - идиосинкратическая часть, i - шок T^i.
    """
    tau: RandomTime
    shocks: Tuple[RandomTime, ...]
    idiosyncratic: RandomTime
    attribution: np.ndarray

    def coincidence(self, i: int) -> np.ndarray:
        """Событие {τ = T^i} (i >= 1) или {τ = T^0} (i = 0)."""
        return self.attribution == i

    def reassemble(self) -> np.ndarray:
        """Потраекторная сборка τ из частей."""
        out = np.full(self.tau.tree.size, INF, dtype=np.int64)
        idio = self.attribution == 0
        out[idio] = self.idiosyncratic.value[idio]
        for i, shock in enumerate(self.shocks, start=1):
            hit = self.attribution == i
            out[hit] = shock.value[hit]
        return out


# ========== Измеримость ==========

def _constant_on_atoms(mask: np.ndarray, filt: Filtration, n: int) -> bool:
    for idx in filt.atoms(n):
        row = mask[idx]
        if row.any() and not row.all():
            return False
    return True


def is_stopping_time(T: RandomTime, filt: Filtration) -> bool:
    """{T = n} состоит из атомов F_n при всех n."""
    eq = T.eq()
    return all(_constant_on_atoms(eq[n], filt, n) for n in range(filt.horizon + 1))


def predictability_flags(T: RandomTime, filt: Filtration) -> Tuple[bool, ...]:
    """Для каждого n: {T = n} ∈ F_{n-1}."""
    eq = T.eq()
    return tuple(_constant_on_atoms(eq[n], filt, n - 1) for n in range(filt.horizon + 1))


def restrict(T: RandomTime, E: np.ndarray, filtration: Optional[Filtration] = None) -> RandomTime:
    """
    Сужение T_E = T на E и ∞ вне E. Уровень результата - момент остановки,
    если E измеримо в момент T, иначе сырой случайный момент.
    """
    E = np.asarray(E, dtype=bool)
    if E.shape != T.value.shape:
        raise ContractViolation("Событие задано не на всех листьях")
    filt = T.tree if filtration is None else filtration
    value = np.where(E, T.value, INF)
    out = RandomTime(value=value, tree=T.tree, name=f"{T.name}_E")
    level = TimeLevel.stopping_in(filt) if is_stopping_time(out, filt) else TimeLevel.raw
    return out.with_level(level)


def is_predictable(T: RandomTime, filt: Filtration) -> bool:
    """
    Raises:
        ContractViolation: T не момент остановки фильтрации filt.
    """
    if not is_stopping_time(T, filt):
        raise ContractViolation(f"{T.name or 'T'} не является моментом остановки фильтрации {filt.name}")
    return all(predictability_flags(T, filt))


# ========== Достижимость ==========

def _elementary_times(filt: Filtration) -> List[Tuple[int, int]]:
    """Элементарные предсказуемые моменты (n, E): E - атом F_{n-1}."""
    return [(n, a) for n in range(filt.horizon + 1) for a in range(filt.atom_count(n - 1))]


def _select(candidates: List[Tuple[int, int]], sampled: bool, rng, limit: int) -> Tuple[set, bool]:
    if len(candidates) <= limit:
        return set(candidates), False
    if not sampled:
        raise CapacityError(
            f"Перебор {len(candidates)} предсказуемых моментов превышает предел {limit}; "
            f"используйте режим выборки (sampled=True)"
        )
    if rng is None:
        raise ContractViolation("Режим выборки требует генератор случайных чисел")
    picked = rng.choice(len(candidates), size=limit, replace=False)
    logger.info(f"Режим выборки: {limit} из {len(candidates)} предсказуемых моментов")
    return {candidates[i] for i in sorted(picked)}, True


def _fiber_labels(tree: ScenarioTree) -> np.ndarray:
    if "theta" in tree.coords:
        return tree.fibers("theta")
    return np.arange(tree.size)


def classify(
    T: RandomTime,
    filt: Filtration,
    *,
    sampled: bool = False,
    rng=None,
    limit: int = CAPACITY_LIMIT,
) -> StoppingClassification:
    """
    Разбиение {T < ∞} = A ∪ B перебором элементарных предсказуемых моментов.

    Лист ω с T(ω) = n покрыт графиком (n, E), если ω ∈ E, весь Θ-слой ω
    лежит в E и T ≡ n на этом слое. B - непокрытые конечные листья.

    Raises:
        CapacityError: перебор больше limit и sampled=False.
    """
    if not is_stopping_time(T, filt):
        raise ContractViolation(f"{T.name or 'T'} не является моментом остановки фильтрации {filt.name}")
    selected, was_sampled = _select(_elementary_times(filt), sampled, rng, limit)

    fibers = _fiber_labels(T.tree)
    finite = T.finite
    covered = np.zeros(T.tree.size, dtype=bool)
    members = {}
    for k, f in enumerate(fibers):
        members.setdefault(int(f), []).append(k)
    for k in np.flatnonzero(finite):
        n = int(T.value[k])
        labels = filt.labels(n - 1)
        fiber = members[int(fibers[k])]
        if (n, int(labels[k])) not in selected:
            continue
        if all(T.value[j] == n and labels[j] == labels[k] for j in fiber):
            covered[k] = True

    return StoppingClassification(
        predictable_part=has_predictable_part(T, filt, sampled=sampled, rng=rng, limit=limit),
        accessible=finite & covered,
        inaccessible=finite & ~covered,
        flags=predictability_flags(T, filt),
        sampled=was_sampled,
    )


def has_predictable_part(
    T: RandomTime,
    filt: Filtration,
    *,
    sampled: bool = False,
    rng=None,
    limit: int = CAPACITY_LIMIT,
) -> Optional[np.ndarray]:
    """
    Наибольшее событие E положительной вероятности, на котором сужение T_E
    предсказуемо и конечно: объединение атомов F_{n-1}, целиком лежащих в {T = n}.
    None, если такого события нет.
    """
    selected, _ = _select(_elementary_times(filt), sampled, rng, limit)
    eq = T.eq()
    part = np.zeros(T.tree.size, dtype=bool)
    for n, a in sorted(selected):
        idx = filt.atoms(n - 1)[a]
        if eq[n, idx].all():
            part[idx] = True
    if not part.any():
        return None
    logger.debug(f"Найдена предсказуемая часть: {int(part.sum())} листьев")
    return part


# ========== Компенсаторы ==========

def compensator(T: RandomTime, filt: Filtration) -> CompensatorData:
    """
    ΔΛ_k = P(T = k | F_{k-1}) / P(T >= k | F_{k-1}) (0/0 = 0),
    Λ_n = Σ_{k<=n} ΔΛ_k 1_{T>=k}, N = 1_{T<=n} - Λ_n.
    """
    exact = filt.exact
    eq = num.indicator(T.eq(), exact)
    ge = num.indicator(T.ge(), exact)
    hazard = num.zeros(eq.shape, exact)
    for k in range(1, eq.shape[0]):
        hazard[k] = num.safe_div(condition(eq[k], k - 1, filt), condition(ge[k], k - 1, filt), exact)
    steps = hazard * ge
    steps[0] = 0 * steps[0]
    Lambda = IncreasingProcess(np.cumsum(steps, axis=0), filt, Level.predictable, name=f"Λ[{T.name}]")
    N = AdaptedProcess(T.indicator() - Lambda.values, filt, Level.optional, name=f"N[{T.name}]")
    return CompensatorData(time=T, hazard=hazard, Lambda=Lambda, N=N)


# ========== Разложение момента дефолта ==========

def _charged_order(shocks: List[RandomTime], attribution: np.ndarray, tau: RandomTime) -> List[int]:
    keys = []
    for i, _ in enumerate(shocks, start=1):
        hit = np.flatnonzero(attribution == i)
        keys.append((int(tau.value[hit].min()), int(hit[tau.value[hit].argmin()])))
    return sorted(range(len(shocks)), key=lambda j: keys[j])


def _charged_shocks(tau: RandomTime, f_carried: np.ndarray) -> List[RandomTime]:
    """
    Шоки как F-моменты, заряжаемые A^τ. Для каждого n берётся оболочка H_n -
    объединение атомов F_n корневого дерева, где τ = n на F-несомом листе;
    кусок "n на H_n" добавляется к первому шоку, носитель которого не
    содержит заряженных листьев, иначе открывает новый шок. Кусок n
    попадает ровно в один шок, поэтому шоки не совпадают.
    """
    tree = tau.tree
    root = tree.root
    root_index = tree.root_index
    charged = {}
    for k in np.flatnonzero(f_carried):
        charged.setdefault(int(tau.value[k]), set()).add(int(root_index[k]))

    values: List[np.ndarray] = []
    for n in sorted(charged):
        leaves = np.array(sorted(charged[n]), dtype=np.int64)
        hull = np.isin(root.labels(n), np.unique(root.labels(n)[leaves]))
        for value in values:
            if np.all(value[leaves] == INF):
                value[hull & (value == INF)] = n
                break
        else:
            value = np.full(root.size, INF, dtype=np.int64)
            value[hull] = n
            values.append(value)

    shocks = []
    for r, value in enumerate(values, start=1):
        shock = RandomTime(value=value, tree=root, name=f"T{r}")
        shocks.append(shock.with_level(TimeLevel.f_stopping))
    logger.debug(f"Найдено шоков по оболочкам атомов: {len(shocks)}")
    return shocks


def decompose_default_time(
    tau: RandomTime,
    es: "EnlargedSpace",
    candidates: Optional[Sequence[RandomTime]] = None,
) -> ShockDecomposition:
    """
    Разложение τ на шоки T^i (F-моменты, заряжаемые A^τ) и идиосинкратическую
    часть T^0, равную ∞ на объединении {τ = T^i}.

    Лист несётся Θ, если τ меняется на его Θ-слое; иначе он F-несомый и
    совпадает с одним из шоков. Без кандидатов шоки строятся по оболочкам
    атомов (_charged_shocks) и существуют для любого G-момента остановки.
    Кандидат, который A^τ не заряжает, отбрасывается; F-несомые листья без
    подходящего кандидата остаются в T^0.

    Raises:
        ContractViolation: τ не G-момент остановки.
        ConsistencyError: переданные кандидаты совпадают.
    """
    tree = es.tree
    if tau.tree is not tree:
        raise ContractViolation("Момент τ задан не на дереве расширенного пространства")
    if not is_stopping_time(tau, es.G):
        raise ContractViolation("τ не является G-моментом остановки")

    fibers = _fiber_labels(tree)
    spread = {}
    for k, f in enumerate(fibers):
        spread.setdefault(int(f), set()).add(int(tau.value[k]))
    varies = np.array([len(spread[int(f)]) > 1 for f in fibers], dtype=bool)
    finite = tau.finite
    f_carried = finite & ~varies

    attribution = np.where(finite, 0, -1).astype(np.int64)
    if candidates is None:
        found = [s.lift_to(tree) for s in _charged_shocks(tau, f_carried)]
    else:
        found = [c if c.tree is tree else c.lift_to(tree) for c in candidates]

    shocks: List[RandomTime] = []
    for cand in found:
        hit = f_carried & (cand.value == tau.value) & (attribution == 0)
        if not hit.any():
            logger.debug(f"Кандидат {cand.name!r} не заряжается A^τ и отброшен")
            continue
        shocks.append(cand)
        attribution[hit] = len(shocks)

    for i in range(len(shocks)):
        for j in range(i + 1, len(shocks)):
            both = shocks[i].finite & (shocks[i].value == shocks[j].value)
            if both.any():
                raise ConsistencyError(f"Шоки T{i + 1} и T{j + 1} совпадают с положительной вероятностью")

    order = _charged_order(shocks, attribution, tau)
    remap = np.zeros(len(shocks) + 1, dtype=np.int64)
    for new, old in enumerate(order, start=1):
        remap[old + 1] = new
    attribution = np.where(attribution >= 0, remap[attribution.clip(min=0)], -1)
    shocks = [shocks[old] for old in order]

    idio = RandomTime(value=np.where(attribution == 0, tau.value, INF), tree=tree, name="T0")
    if is_stopping_time(idio, es.G):
        idio = idio.with_level(TimeLevel.g_stopping)
    else:
        logger.warning(
            "Идиосинкратическая часть T0 не является G-моментом остановки: "
            "она делит шаг сетки с шоком на одном атоме"
        )

    logger.info(
        f"Разложение τ: шоков {len(shocks)}, "
        f"листьев с идиосинкратическим дефолтом {int((attribution == 0).sum())}"
    )
    return ShockDecomposition(tau=tau, shocks=tuple(shocks), idiosyncratic=idio, attribution=attribution)
