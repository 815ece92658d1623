# defaultlab/errors.py
"""Иерархия исключений пакета."""
from typing import Any, Optional, Tuple


class DefaultLabError(Exception):
    """Базовое исключение defaultlab."""


class ContractViolation(DefaultLabError, ValueError):
    """Нарушено предусловие операции."""


class RangeError(DefaultLabError, IndexError):
    """Индекс времени или число уровней вне допустимого диапазона."""


class CapacityError(DefaultLabError, RuntimeError):
    """Полный перебор превышает предел; используйте режим выборки."""


class SingularityError(DefaultLabError, ZeroDivisionError):
    """Деление на ноль на живой ветви."""

    def __init__(self, message: str, node: Optional[Tuple[int, int]] = None):
        super().__init__(message if node is None else f"{message} (узел n={node[0]}, атом={node[1]})")
        self.node = node


class ConsistencyError(DefaultLabError, RuntimeError):
    """Два независимых способа вычисления разошлись."""

    def __init__(self, message: str, node: Optional[Any] = None, gap: Optional[float] = None):
        details = []
        if node is not None:
            details.append(f"узел={node}")
        if gap is not None:
            details.append(f"расхождение={gap:.3e}")
        super().__init__(f"{message} ({', '.join(details)})" if details else message)
        self.node = node
        self.gap = gap


class ConstructionError(ConsistencyError):
    """Конструкция момента дефолта не выполнима при данных входах."""


class ConfigError(DefaultLabError, ValueError):
    """Ошибка разбора или валидации конфигурации эксперимента."""
