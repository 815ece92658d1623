# defaultlab/schemas/experiment.py
"""
Pydantic схемы документа эксперимента (TOML или JSON).

Числа модели можно задавать строками вида "1/4": в точной арифметике они
читаются как Fraction без потери точности.
"""
from enum import Enum
from fractions import Fraction
from typing import Annotated, List, Optional, Union

from pydantic import AfterValidator, BaseModel, ConfigDict, Field, field_validator, model_validator


def _check_number(value: Union[int, float, str]) -> Union[int, float, str]:
    if isinstance(value, str):
        try:
            Fraction(value.strip())
        except (ValueError, ZeroDivisionError) as e:
            raise ValueError(f"не число: {value!r}") from e
    return value


Number = Annotated[Union[int, float, str], AfterValidator(_check_number)]


class Backend(str, Enum):
    exact = "exact"
    mc = "mc"


class ReportFormat(str, Enum):
    json_lines = "json-lines"
    csv = "csv"
    text = "text"


class TreeKind(str, Enum):
    trivial = "trivial"
    binomial = "binomial"
    random = "random"


class BuildKindSpec(str, Enum):
    cox = "cox"
    general = "general"


# ========== Модель ==========

class TreeSpec(BaseModel):
    """Дерево сценариев"""
    model_config = ConfigDict(extra="forbid")

    kind: TreeKind = TreeKind.binomial
    horizon: int = Field(2, ge=1, le=64, description="Число шагов N")
    up_prob: Number = Field("1/2", description="Вероятность шага u (binomial)")
    branching: int = Field(2, ge=2, le=8, description="Ветвление (random)")
    seed: int = Field(0, ge=0, description="Зерно генератора (random)")
    exact: bool = Field(True, description="Точная рациональная арифметика")


class ShockConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    time: int = Field(..., ge=1, description="Детерминированный момент шока")
    jump: Number = Field(..., description="Размер скачка ΔA в момент шока")


class ConstructionConfig(BaseModel):
    """Конструкция момента дефолта"""
    model_config = ConfigDict(extra="forbid")

    kind: BuildKindSpec = BuildKindSpec.general
    target: List[Number] = Field(..., description="A^c_n (или A_n для cox), n = 0..N, одинаково на всех атомах")
    shocks: List[ShockConfig] = Field(default_factory=list)
    theta_levels: int = Field(4, ge=2, description="Число уровней Θ")
    mode: str = Field("discrete-exact", description="discrete-exact | paper-exponential")
    sampling: Optional[str] = Field(None, description="previous | current (по умолчанию по режиму)")

    @field_validator("mode")
    @classmethod
    def check_mode(cls, v: str) -> str:
        if v not in ("discrete-exact", "paper-exponential"):
            raise ValueError("mode должен быть discrete-exact или paper-exponential")
        return v

    @field_validator("sampling")
    @classmethod
    def check_sampling(cls, v: Optional[str]) -> Optional[str]:
        if v is not None and v not in ("previous", "current"):
            raise ValueError("sampling должен быть previous или current")
        return v

    @model_validator(mode="after")
    def cox_has_no_shocks(self):
        if self.kind == BuildKindSpec.cox and self.shocks:
            raise ValueError("конструкция cox не принимает шоков")
        return self


class ClaimConfig(BaseModel):
    """Требование X = (P, T, C)"""
    model_config = ConfigDict(extra="forbid")

    payment: Number = Field(1, description="Обещанная выплата P")
    maturity: int = Field(..., ge=1, description="Срок T")
    recovery: Number = Field(0, description="Базовое возмещение Ĉ")
    losses: List[Number] = Field(default_factory=list, description="Потери возмещения c^i в моменты шоков")


class RatesConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    rate: Number = Field(0, description="Постоянная короткая ставка r")
    dt: Number = Field(1, description="Шаг сетки Δt")
    mode: str = Field("discrete-exact", description="discrete-exact | paper-exponential")


class ModelSpec(BaseModel):
    """Модель: именованная фикстура или явное описание"""
    model_config = ConfigDict(extra="forbid")

    fixture: Optional[str] = Field(None, description="Имя фикстуры (list-fixtures)")
    name: Optional[str] = None
    tree: TreeSpec = Field(default_factory=TreeSpec)
    construction: Optional[ConstructionConfig] = None
    claim: Optional[ClaimConfig] = None
    rates: RatesConfig = Field(default_factory=RatesConfig)

    @model_validator(mode="after")
    def fixture_or_construction(self):
        if self.fixture is None and self.construction is None:
            raise ValueError("нужно указать model.fixture или model.construction")
        return self


# ========== Прогон и вывод ==========

class RunSpec(BaseModel):
    """Управление прогоном"""
    model_config = ConfigDict(extra="forbid")

    backend: Backend = Backend.exact
    paths: int = Field(20000, ge=1, description="Число траекторий Монте-Карло")
    seed: Optional[int] = Field(None, ge=0, description="Зерно генератора")
    workers: int = Field(1, ge=1, description="Процессы для выборки траекторий")
    ladder: List[int] = Field(default_factory=list, description="Горизонты лестницы сходимости")
    checks: Optional[List[str]] = Field(
        None, description="Проверки; None - проверки фикстуры по умолчанию, [] - только таблицы"
    )

    @field_validator("ladder")
    @classmethod
    def check_ladder(cls, v: List[int]) -> List[int]:
        bad = [n for n in v if n < 2 or n % 2]
        if bad:
            raise ValueError(f"горизонты лестницы должны быть чётными и >= 2: {bad}")
        return v

    @field_validator("checks")
    @classmethod
    def unique_checks(cls, v: Optional[List[str]]) -> Optional[List[str]]:
        if v is not None and len(set(v)) != len(v):
            raise ValueError("проверки не должны повторяться")
        return v


class OutputSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    dir: str = Field("out", description="Каталог артефактов")
    format: ReportFormat = ReportFormat.json_lines
    tables: List[str] = Field(
        default_factory=lambda: ["Z", "A", "a", "price"],
        description="Процессы, выводимые таблицами по атомам",
    )


class TolerancesSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    eps_sum: float = Field(1e-12, gt=0)
    eps_mart: float = Field(1e-10, gt=0)


class ExperimentConfig(BaseModel):
    """Документ эксперимента"""
    model_config = ConfigDict(
        extra="forbid",
        json_schema_extra={
            "example": {
                "name": "jump",
                "model": {"fixture": "jump-recovery-shock"},
                "run": {"backend": "exact"},
                "output": {"format": "text"},
            }
        },
    )

    name: str = Field("experiment", min_length=1)
    model: ModelSpec
    run: RunSpec = Field(default_factory=RunSpec)
    output: OutputSpec = Field(default_factory=OutputSpec)
    tolerances: TolerancesSpec = Field(default_factory=TolerancesSpec)
