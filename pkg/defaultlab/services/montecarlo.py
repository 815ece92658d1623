# defaultlab/services/montecarlo.py
"""
Монте-Карло для построенных моментов дефолта.

Каждая траектория i получает собственный генератор default_rng([seed, i]),
поэтому ансамбль зависит только от (seed, число траекторий) и не зависит от
числа процессов. Θ здесь непрерывна: точные значения ядра совпадают с
ожиданиями оценок на фикстурах, где значения a лежат на сетке Θ.
"""
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial
from typing import Any, List, Optional, Tuple

import numpy as np

from defaultlab.errors import ContractViolation
from defaultlab.models.claim import DefaultableClaim, RatesSpec
from defaultlab.models.process import INF
from defaultlab.models.tree import ScenarioTree
from defaultlab.schemas.report import McEstimate
from defaultlab.services.construct import SENTINEL, BuildKind, BuiltTime
from defaultlab.utils import numeric as num

logger = logging.getLogger(__name__)

# Квантиль N(0,1) уровня 0.995
Z_99 = 2.5758293035489004


@dataclass(frozen=True, eq=False)
class PathEnsemble:
    seed: int
    horizon: int
    root: np.ndarray
    theta: np.ndarray
    shock: np.ndarray
    tau: np.ndarray

    def __len__(self) -> int:
        return len(self.tau)

    def same_as(self, other: "PathEnsemble") -> bool:
        return all(
            np.array_equal(getattr(self, f), getattr(other, f)) for f in ("root", "theta", "shock", "tau")
        )


def root_view(values: Any, tree: ScenarioTree) -> np.ndarray:
    """F-измеримые значения расширенного дерева на листьях корня (по первому потомку)."""
    values = np.asarray(values)
    root_index = tree.root_index
    first = np.empty(tree.root.size, dtype=np.int64)
    first[root_index[::-1]] = np.arange(tree.size)[::-1]
    return values[..., first]


@dataclass(frozen=True)
class _Sampler:
    kind: BuildKind
    horizon: int
    cum_prob: np.ndarray
    level: np.ndarray
    law: Optional[np.ndarray]
    components: Tuple[int, ...]
    times: np.ndarray

    def draw(self, seed: int, i: int) -> Tuple[int, float, int, int]:
        rng = np.random.default_rng([seed, i])
        u_leaf, theta, u_shock = rng.random(3)
        leaf = min(int(np.searchsorted(self.cum_prob, u_leaf, side="right")), len(self.cum_prob) - 1)
        path = self.level[:, leaf]
        if self.kind == BuildKind.cox:
            hit = np.flatnonzero(path >= theta)
            return leaf, theta, 0, int(hit[0]) if hit.size else INF

        if self.kind == BuildKind.family:
            t0, weights = INF, self.law[:, -1, leaf]
        else:
            hit = np.flatnonzero(path > theta)
            t0 = int(hit[0]) if hit.size else INF
            weights = self.law[:, min(t0, self.horizon), leaf]
        c = min(int(np.searchsorted(np.cumsum(weights), u_shock, side="right")), len(weights) - 1)
        shock = self.components[c]
        if shock == 0:
            return leaf, theta, 0, t0
        if shock == SENTINEL:
            return leaf, theta, SENTINEL, INF
        return leaf, theta, shock, int(self.times[shock - 1, leaf])


def _sampler(built: BuiltTime) -> _Sampler:
    root = built.root
    cum_prob = np.cumsum(num.to_float(root.prob))
    times = np.array([root_view(T.value, built.tree) for T in built.shocks], dtype=np.int64).reshape(
        len(built.shocks), root.size
    )
    if built.kind == BuildKind.cox:
        return _Sampler(built.kind, root.horizon, cum_prob, num.to_float(built.a), None, (0,), times)
    if built.kind == BuildKind.family:
        components = tuple(range(1, len(built.shocks) + 1))
        return _Sampler(built.kind, root.horizon, cum_prob, np.zeros((root.horizon + 1, root.size)),
                        num.to_float(built.p), components, times)
    return _Sampler(built.kind, root.horizon, cum_prob, num.to_float(built.a),
                    num.to_float(built.q), built.spec.components, times)


def _draw_chunk(sampler: _Sampler, seed: int, lo: int, hi: int) -> List[Tuple[int, float, int, int]]:
    return [sampler.draw(seed, i) for i in range(lo, hi)]


def simulate_paths(built: BuiltTime, n_paths: int, seed: int, workers: int = 1) -> PathEnsemble:
    """
    Выборка n_paths независимых траекторий (лист корня, Θ, S, τ).

    При workers > 1 отрезки траекторий считаются в отдельных процессах.

    Raises:
        ContractViolation: n_paths < 1.
    """
    if n_paths < 1:
        raise ContractViolation("Число траекторий должно быть не меньше 1")
    sampler = _sampler(built)
    workers = max(1, min(int(workers), n_paths))
    if workers == 1:
        rows = _draw_chunk(sampler, seed, 0, n_paths)
    else:
        bounds = np.linspace(0, n_paths, workers + 1).astype(int)
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(partial(_draw_chunk, sampler, seed), bounds[:-1].tolist(), bounds[1:].tolist()))
        rows = [row for part in parts for row in part]
    logger.info(f"Смоделировано траекторий: {n_paths} (процессов {workers}, зерно {seed})")
    return PathEnsemble(
        seed=seed,
        horizon=built.root.horizon,
        root=np.array([r[0] for r in rows], dtype=np.int64),
        theta=np.array([r[1] for r in rows], dtype=float),
        shock=np.array([r[2] for r in rows], dtype=np.int64),
        tau=np.array([r[3] for r in rows], dtype=np.int64),
    )


# ========== Оценки ==========

def estimate_mean(name: str, samples: np.ndarray, exact: Optional[Any] = None) -> McEstimate:
    """Выборочное среднее, стандартная ошибка и 99%-я полуширина."""
    samples = np.asarray(samples, dtype=float)
    n = len(samples)
    value = float(samples.mean())
    std_error = float(samples.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    within = None
    if exact is not None:
        within = abs(value - float(exact)) <= 3 * std_error + 1e-12
    return McEstimate(
        name=name,
        value=value,
        std_error=std_error,
        half_width=Z_99 * std_error,
        paths=n,
        exact=None if exact is None else float(exact),
        within_band=within,
    )


def estimate_default_probability(ens: PathEnsemble, n: int, exact: Optional[Any] = None) -> McEstimate:
    """P(τ <= n)."""
    return estimate_mean(f"P(tau<={n})", ens.tau <= n, exact)


def estimate_price(
    ens: PathEnsemble,
    claim: DefaultableClaim,
    rates: RatesSpec,
    exact: Optional[Any] = None,
) -> McEstimate:
    """S̃(X)_0 = E[P disc_T 1_{τ>T} + C_τ disc_τ 1_{τ<=T}] (τ >= 1, Z_0 = 1)."""
    disc = num.to_float(rates.discount())
    payment = num.to_float(claim.payment)
    recovery = num.to_float(claim.recovery)
    T = claim.maturity
    at = np.minimum(ens.tau, T)
    defaulted = ens.tau <= T
    values = np.where(
        defaulted,
        recovery[at, ens.root] * disc[at, ens.root],
        payment[ens.root] * disc[T, ens.root],
    )
    return estimate_mean("S_tilde_0", values, exact)


def estimate_premium(ens: PathEnsemble, premium_root: np.ndarray, maturity: int,
                     exact: Optional[Any] = None) -> McEstimate:
    """E[π(X)_T] по корневым значениям π."""
    values = num.to_float(premium_root)[maturity, ens.root]
    return estimate_mean("E[pi_T]", values, exact)
