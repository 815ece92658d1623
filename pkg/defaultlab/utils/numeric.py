# defaultlab/utils/numeric.py
"""
Скалярные помощники для двух арифметик: точной (Fraction в object-массивах)
и двойной точности (float64).

В точном режиме все массивы имеют dtype=object и содержат только int/Fraction:
numpy-скаляры внутрь не попадают, иначе Fraction молча переходит во float.
"""
from fractions import Fraction
from typing import Any, Iterable

import numpy as np

from defaultlab.config import SIGNIFICANT_DIGITS


def exact_scalar(value: Any) -> Fraction:
    """Привести скаляр к Fraction. Float берётся по кратчайшему десятичному представлению."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, (bool, np.bool_)):
        return Fraction(int(value))
    if isinstance(value, (int, np.integer)):
        return Fraction(int(value))
    if isinstance(value, str):
        return Fraction(value.strip())
    return Fraction(str(float(value)))


def coerce(values: Any, exact: bool) -> np.ndarray:
    """Массив в нужной арифметике (копия)."""
    arr = np.asarray(values, dtype=object if exact else None)
    if not exact:
        if arr.dtype == object:
            return np.array([float(v) for v in arr.ravel()], dtype=float).reshape(arr.shape)
        return arr.astype(float)
    flat = [exact_scalar(v) for v in arr.ravel()]
    return np.array(flat + [None], dtype=object)[:-1].reshape(arr.shape)


def zeros(shape, exact: bool) -> np.ndarray:
    if exact:
        return np.full(shape, Fraction(0), dtype=object)
    return np.zeros(shape, dtype=float)


def ones(shape, exact: bool) -> np.ndarray:
    if exact:
        return np.full(shape, Fraction(1), dtype=object)
    return np.ones(shape, dtype=float)


def indicator(mask: np.ndarray, exact: bool) -> np.ndarray:
    """Индикатор события в арифметике дерева."""
    mask = np.asarray(mask, dtype=bool)
    if exact:
        out = np.full(mask.shape, Fraction(0), dtype=object)
        out[mask] = Fraction(1)
        return out
    return mask.astype(float)


def safe_div(num: np.ndarray, den: np.ndarray, exact: bool) -> np.ndarray:
    """Поэлементное деление с соглашением x/0 = 0 (без вычисления по нулям)."""
    num, den = np.broadcast_arrays(np.asarray(num), np.asarray(den))
    out = zeros(num.shape, exact)
    mask = den != 0
    if np.any(mask):
        out[mask] = num[mask] / den[mask]
    return out


def to_float(values: Any) -> np.ndarray:
    arr = np.asarray(values)
    if arr.dtype == object:
        return np.array([float(v) for v in arr.ravel()], dtype=float).reshape(arr.shape)
    return arr.astype(float)


def max_abs(values: Any) -> float:
    """max |x| как float; 0 для пустого массива."""
    arr = np.asarray(values)
    if arr.size == 0:
        return 0.0
    return float(np.max(np.abs(arr)))


def is_zero(values: Any, tol: float, exact: bool) -> bool:
    if exact:
        return all(v == 0 for v in np.asarray(values).ravel())
    return max_abs(values) <= tol


def fmt(value: Any) -> str:
    """Десятичная запись с 17 значащими цифрами."""
    return f"{float(value):.{SIGNIFICANT_DIGITS}g}"


def fmt_all(values: Iterable[Any]) -> list:
    return [fmt(v) for v in values]
