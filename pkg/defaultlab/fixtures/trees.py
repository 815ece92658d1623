# defaultlab/fixtures/trees.py
"""Генераторы деревьев сценариев и вспомогательных процессов для фикстур."""
import logging
from fractions import Fraction
from typing import Any, Optional, Sequence, Tuple

import numpy as np

from defaultlab.errors import ContractViolation
from defaultlab.models.process import INF, AdaptedProcess, Level, RandomTime
from defaultlab.models.tree import ScenarioTree, binomial_paths
from defaultlab.services.enlargement import EnlargedSpace
from defaultlab.services.kernel import condition_rows
from defaultlab.utils import numeric as num

logger = logging.getLogger(__name__)

COUPON_DEFAULT_PROBS = (Fraction(1, 5), Fraction(3, 10), Fraction(1, 4))


def binomial_tree(horizon: int, up_prob: Any = Fraction(1, 2), exact: bool = True) -> ScenarioTree:
    paths, probs = binomial_paths(horizon, up_prob)
    return ScenarioTree.from_paths(paths, probs, exact=exact)


def first_step_up(tree: ScenarioTree) -> np.ndarray:
    """Маска листьев, у которых первый шаг - u."""
    return np.array([name[:1] == "u" for name in tree.leaf_names], dtype=bool)


def step_up(tree: ScenarioTree, n: int) -> np.ndarray:
    """Маска листьев с шагом u на шаге n (1..N)."""
    return np.array([name[n - 1] == "u" for name in tree.leaf_names], dtype=bool)


def deterministic_time(tree: ScenarioTree, value: int, name: str = "") -> RandomTime:
    return RandomTime(value=np.full(tree.size, value, dtype=np.int64), tree=tree, name=name)


def time_on(tree: ScenarioTree, mask: np.ndarray, value: int, name: str = "") -> RandomTime:
    """Момент, равный value на mask и INF вне её."""
    return RandomTime(value=np.where(mask, value, INF), tree=tree, name=name)


# ========== Облигация с купонами ==========

def coupon_tree(default_probs: Sequence[Any] = COUPON_DEFAULT_PROBS, exact: bool = True) -> Tuple[ScenarioTree, RandomTime]:
    """
    Купонные даты 1..n, в каждую дату независимый бернуллиевский флаг дефолта
    с вероятностью default_probs[i-1]; τ - первая дата с флагом 1, иначе INF.
    F раскрывает флаги по мере наступления дат, поэтому τ - F-момент остановки.
    """
    probs = [num.exact_scalar(p) if exact else float(p) for p in default_probs]
    if any(p < 0 or p > 1 for p in probs):
        raise ContractViolation("Вероятности дефолта в купонные даты вне [0, 1]")
    paths, weights = [()], [Fraction(1) if exact else 1.0]
    for p in probs:
        paths = [path + (flag,) for path in paths for flag in ("0", "1")]
        weights = [w * (p if flag == "1" else 1 - p) for w in weights for flag in ("0", "1")]
    tree = ScenarioTree.from_paths(paths, weights, exact=exact)
    value = np.array([name.find("1") + 1 if "1" in name else INF for name in tree.leaf_names], dtype=np.int64)
    return tree, RandomTime(value=value, tree=tree, name="τ")


def coupon_bond_gains(es: EnlargedSpace, coupon: Any = 1, principal: Any = 10, recovery: Any = 0) -> AdaptedProcess:
    """
    Процесс полного дохода облигации E[Y | G_n], Y = coupon·#{купонов до τ}
    + principal·1_{τ>N} + recovery·1_{τ<=N}; мартингал в G.
    """
    tree, tau, exact = es.tree, es.tau, es.exact
    coupon, principal, recovery = (num.coerce(x, exact)[()] for x in (coupon, principal, recovery))
    paid = np.where(tau.finite, tau.value - 1, tree.horizon)
    Y = num.coerce(paid, exact) * coupon + np.where(tau.finite, recovery, principal)
    rows = np.tile(num.coerce(Y, exact), (tree.horizon + 1, 1))
    return AdaptedProcess(condition_rows(rows, es.G), es.G, Level.optional, name="gains")


# ========== Случайные деревья ==========

def random_tree(seed: int, horizon: int = 3, branching: int = 2, exact: bool = True) -> ScenarioTree:
    """
    Дерево с независимым случайным переходным законом в каждом узле.
    В точном режиме веса - целые 1..4, нормированные в Fraction.
    """
    rng = np.random.default_rng(seed)
    paths, weights = [()], [Fraction(1) if exact else 1.0]
    for _ in range(horizon):
        next_paths, next_weights = [], []
        for path, w in zip(paths, weights):
            if exact:
                raw = rng.integers(1, 5, size=branching)
                law = [Fraction(int(x), int(raw.sum())) for x in raw]
            else:
                law = list(rng.dirichlet(np.ones(branching)))
            for j, p in enumerate(law):
                next_paths.append(path + (str(j),))
                next_weights.append(w * p)
        paths, weights = next_paths, next_weights
    if not exact:
        total = sum(weights)
        weights = [w / total for w in weights]
    logger.debug(f"Случайное дерево: seed={seed}, горизонт {horizon}, ветвление {branching}")
    return ScenarioTree.from_paths(paths, weights, exact=exact)


def random_increasing(tree: ScenarioTree, rng: np.random.Generator, cap: Any,
                      force_one_at: Optional[int] = None) -> np.ndarray:
    """
    Адаптированный возрастающий процесс с A_0 = 0 и A_N < cap.

    force_one_at = n ставит A_n = 1 на первом атоме F_{n-1} (и далее на его
    листьях), создавая предсказуемую часть у построенного по A момента Кокса.
    """
    exact = tree.exact
    cap = num.coerce(cap, exact)[()]
    A = num.zeros((tree.horizon + 1, tree.size), exact)
    for n in range(1, tree.horizon + 1):
        for idx in tree.atoms(n):
            prev = A[n - 1, idx[0]]
            room = cap - prev
            u = Fraction(int(rng.integers(0, 4)), 8) if exact else float(rng.uniform(0, 0.5))
            A[n, idx] = prev + room * u
    if force_one_at is not None:
        idx = tree.atoms(force_one_at - 1)[0]
        A[force_one_at:, idx] = 1 + 0 * A[force_one_at:, idx]
    return A
