# defaultlab/schemas/report.py
"""
Pydantic схемы отчёта о прогоне. Структурированный формат (json-lines)
хранит каждую запись с полем kind и восстанавливается без потерь.
"""
from enum import Enum
from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, Field


class CheckStatus(str, Enum):
    passed = "PASS"
    failed = "FAIL"
    skipped = "SKIP"


class CheckResult(BaseModel):
    """Результат одной проверки тождества"""
    kind: Literal["check"] = "check"
    name: str = Field(..., description="Имя проверки из реестра")
    status: CheckStatus
    max_error: Optional[float] = Field(None, description="Наибольшее узловое расхождение")
    tolerance: float = Field(0.0, description="Допуск (0 - точная арифметика)")
    node: Optional[str] = Field(None, description="Худший узел (n, атом), если известен")
    detail: Optional[str] = Field(None, description="Пояснение, в том числе причина неприменимости")

    @property
    def ok(self) -> bool:
        return self.status != CheckStatus.failed


class TableRow(BaseModel):
    time_index: int
    atom_id: int
    value: float
    exact: Optional[str] = Field(None, description="Точное значение p/q в рациональном режиме")


class ProcessTable(BaseModel):
    """Таблица процесса по атомам фильтрации"""
    kind: Literal["table"] = "table"
    name: str
    filtration: str = "F"
    rows: List[TableRow] = Field(default_factory=list)


class PremiumRow(BaseModel):
    """Строка разложения премии: ожидания E[Δπ_n] и их частей"""
    kind: Literal["premium"] = "premium"
    time_index: int
    total_premium: float
    idiosyncratic: float
    shock_id: int
    shock_premium: float


class LadderRung(BaseModel):
    kind: Literal["rung"] = "rung"
    horizon: int = Field(..., ge=2)
    max_error: float
    ratio: Optional[float] = None


class McEstimate(BaseModel):
    """Оценка Монте-Карло с 99%-й полушириной"""
    kind: Literal["mc"] = "mc"
    name: str
    value: float
    std_error: float = Field(..., ge=0)
    half_width: float = Field(..., ge=0, description="Полуширина 99%-го доверительного интервала")
    paths: int = Field(..., ge=1)
    exact: Optional[float] = Field(None, description="Точное значение ядра, если известно")
    within_band: Optional[bool] = Field(None, description="|оценка - точное| <= 3σ")


class RunReport(BaseModel):
    """Отчёт о прогоне эксперимента"""
    kind: Literal["run"] = "run"
    name: str = ""
    config: Dict[str, Any] = Field(default_factory=dict, description="Эхо разобранной конфигурации")
    backend: str = "exact"
    seed: Optional[int] = None
    sampling: Optional[str] = Field(None, description="Индекс выборки закона S в конструкции")
    summary: Dict[str, float] = Field(default_factory=dict)
    checks: List[CheckResult] = Field(default_factory=list)
    tables: List[ProcessTable] = Field(default_factory=list)
    premium: List[PremiumRow] = Field(default_factory=list)
    ladder: List[LadderRung] = Field(default_factory=list)
    monte_carlo: List[McEstimate] = Field(default_factory=list)
    timing: Dict[str, float] = Field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.checks)

    @property
    def failed(self) -> List[CheckResult]:
        return [c for c in self.checks if not c.ok]

    @property
    def skipped(self) -> List[CheckResult]:
        return [c for c in self.checks if c.status == CheckStatus.skipped]
