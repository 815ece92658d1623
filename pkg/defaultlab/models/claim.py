# defaultlab/models/claim.py
"""Дефолтное требование и параметры ставок (на корневом дереве F)."""
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, List, Optional, Sequence

import numpy as np

from defaultlab.config import EPS_MART
from defaultlab.errors import ContractViolation, RangeError
from defaultlab.models.process import AdaptedProcess, Level, RandomTime
from defaultlab.models.tree import ScenarioTree
from defaultlab.utils import numeric as num


class DiscountMode(str, Enum):
    discrete_exact = "discrete-exact"
    exponential = "paper-exponential"


@dataclass(frozen=True, eq=False)
class RatesSpec:
    """Короткая ставка r_n (предсказуемая), шаг сетки dt и способ дисконтирования."""
    tree: ScenarioTree
    rate: np.ndarray
    dt: Any = 1
    mode: DiscountMode = DiscountMode.discrete_exact

    @classmethod
    def constant(cls, tree: ScenarioTree, rate: Any = 0, dt: Any = 1,
                 mode: DiscountMode = DiscountMode.discrete_exact) -> "RatesSpec":
        values = num.coerce(np.full((tree.horizon + 1, tree.size), rate, dtype=object), tree.exact)
        return cls(tree=tree, rate=values, dt=num.coerce(dt, tree.exact)[()], mode=mode)

    def check_predictable(self) -> None:
        try:
            AdaptedProcess(self.rate, self.tree, Level.predictable, name="r")
        except ContractViolation as e:
            raise ContractViolation(f"Ставка должна быть предсказуемой: {e}") from e

    def cumulated(self) -> np.ndarray:
        """R_n = Σ_{k<=n} r_k Δt, R_0 = 0."""
        steps = self.rate * self.dt
        steps[0] = 0 * steps[0]
        return np.cumsum(steps, axis=0)

    def discount(self, mode: Optional[DiscountMode] = None) -> np.ndarray:
        """Дисконт-фактор: Π(1 + r_k Δt)^{-1} или exp(-R_n)."""
        mode = self.mode if mode is None else DiscountMode(mode)
        if mode == DiscountMode.exponential:
            return np.exp(-num.to_float(self.cumulated()))
        factors = 1 + self.rate * self.dt
        if np.any(factors <= 0):
            raise ContractViolation("Дисконт-факторы должны быть положительными")
        out = num.ones(self.rate.shape, self.tree.exact)
        for n in range(1, self.rate.shape[0]):
            out[n] = out[n - 1] / factors[n]
        return out


@dataclass(frozen=True, eq=False)
class ShockLoss:
    """Скачок возмещения в момент шока: C падает на c_{T}+κ при T^i <= n."""
    time: RandomTime
    loss: np.ndarray
    kappa: np.ndarray


def _conditional_sums(x: np.ndarray, tree: ScenarioTree, n: int) -> List[Any]:
    return [(tree.prob[idx] * x[idx]).sum() for idx in tree.atoms(n)]


@dataclass(frozen=True, eq=False)
class RecoveryDecomposition:
    """
    C = Ĉ - Σ_i (c^i_{T^i} + κ^i) 1_{T^i <= ·}.

    c^i предсказуем, κ^i F_{T^i}-измерим и E[κ^i | F_{T^i-}] = 0,
    Ĉ не прыгает в моменты T^i.
    """
    base: np.ndarray
    jumps: List[ShockLoss] = field(default_factory=list)

    def validate(self, tree: ScenarioTree) -> None:
        """
        Raises:
            ContractViolation: нарушено одно из условий разложения.
        """
        exact = tree.exact
        tol = 0 if exact else EPS_MART
        AdaptedProcess(self.base, tree, Level.optional, name="Ĉ")
        for i, jump in enumerate(self.jumps, start=1):
            T = jump.time
            if T.tree is not tree:
                raise ContractViolation(f"Шок T{i} разложения возмещения задан не на дереве требования")
            try:
                AdaptedProcess(jump.loss, tree, Level.predictable, name=f"c{i}")
            except ContractViolation as e:
                raise ContractViolation(f"Потеря c{i} должна быть предсказуемой: {e}") from e
            if num.max_abs(jump.kappa[~T.finite]) > tol:
                raise ContractViolation(f"κ{i} отлична от нуля вне {{T{i} < ∞}}")
            eq = T.eq()
            for n in range(1, tree.horizon + 1):
                hit = np.flatnonzero(eq[n])
                if not hit.size:
                    continue
                for idx in tree.atoms(n):
                    sub = idx[eq[n, idx]]
                    if sub.size and num.max_abs(jump.kappa[sub] - jump.kappa[sub[0]]) > tol:
                        raise ContractViolation(f"κ{i} не измерима в момент T{i} (n={n})")
                gap = num.max_abs(_conditional_sums(jump.kappa * eq[n], tree, n - 1))
                if gap > tol:
                    raise ContractViolation(
                        f"Условное среднее κ{i} в момент T{i} = {n} не равно нулю: {gap:.3e}"
                    )
                jump_base = num.max_abs(self.base[n, hit] - self.base[n - 1, hit])
                if jump_base > tol:
                    raise ContractViolation(f"Ĉ прыгает в момент шока T{i} = {n}")

    def reassemble(self) -> np.ndarray:
        out = self.base.copy()
        for jump in self.jumps:
            exact = jump.time.tree.exact
            at_shock = num.zeros(jump.time.tree.size, exact)
            hit = np.flatnonzero(jump.time.finite)
            at_shock[hit] = jump.loss[jump.time.value[hit], hit]
            size = at_shock + jump.kappa
            out = out - num.indicator(jump.time.le(), jump.time.tree.exact) * size[None, :]
        return out


@dataclass(frozen=True, eq=False)
class DefaultableClaim:
    """
    Требование X = (P, T, C): обещанная выплата P в момент T при отсутствии
    дефолта и возмещение C_τ в момент дефолта τ <= T.
    """
    tree: ScenarioTree
    payment: np.ndarray
    maturity: int
    recovery: np.ndarray
    decomposition: Optional[RecoveryDecomposition] = None
    name: str = ""

    def __post_init__(self):
        if not (1 <= self.maturity <= self.tree.horizon):
            raise RangeError(f"Срок погашения {self.maturity} вне горизонта 1..{self.tree.horizon}")
        if np.any(self.payment < 0) or np.any(self.recovery < 0):
            raise ContractViolation("Выплата и возмещение должны быть неотрицательными")
        AdaptedProcess(self.recovery, self.tree, Level.optional, name="C")
        spread = max(
            num.max_abs(self.payment[idx] - self.payment[idx[0]]) for idx in self.tree.atoms(self.maturity)
        )
        if spread > 0:
            raise ContractViolation("Выплата P должна быть F_T-измеримой")
        if self.decomposition is not None:
            self.decomposition.validate(self.tree)
            gap = num.max_abs(self.decomposition.reassemble() - self.recovery)
            if gap > 0:
                raise ContractViolation(f"Разложение возмещения (R) не совпадает с C: расхождение {gap:.3e}")

    @classmethod
    def build(
        cls,
        tree: ScenarioTree,
        payment: Any,
        maturity: int,
        base_recovery: Any = 0,
        shocks: Sequence[RandomTime] = (),
        losses: Sequence[Any] = (),
        kappas: Sequence[Any] = (),
        name: str = "",
    ) -> "DefaultableClaim":
        """
        Требование с постоянной выплатой и возмещением Ĉ, уменьшающимся на
        c^i + κ^i после каждого шока T^i. κ^i - значения на листьях
        (по умолчанию 0).
        """
        exact = tree.exact
        shape = (tree.horizon + 1, tree.size)
        if len(kappas) > len(shocks):
            raise ContractViolation("Значений κ больше, чем шоков")
        payment_arr = num.coerce(np.broadcast_to(np.asarray(payment, dtype=object), (tree.size,)), exact)
        base = num.coerce(np.broadcast_to(np.asarray(base_recovery, dtype=object), shape), exact)
        jumps = []
        for i, (t, c) in enumerate(zip(shocks, losses)):
            kappa = num.zeros(tree.size, exact)
            if i < len(kappas):
                kappa = num.coerce(np.broadcast_to(np.asarray(kappas[i], dtype=object), (tree.size,)), exact)
            jumps.append(ShockLoss(time=t, loss=num.coerce(np.full(shape, c, dtype=object), exact), kappa=kappa))
        decomposition = RecoveryDecomposition(base=base, jumps=jumps)
        return cls(
            tree=tree,
            payment=payment_arr,
            maturity=maturity,
            recovery=decomposition.reassemble(),
            decomposition=decomposition,
            name=name,
        )
