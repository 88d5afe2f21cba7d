"""Reference-valued intervals used to carry ambiguity through impact calculations.

An :class:`Interval` holds a reference value together with lower and upper
bounds.  Arithmetic is closed over non-negative quantities, which is all the
impact model needs (energies, emissions, counts and factors are never
negative).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Union

Number = Union[int, float]


@dataclass(frozen=True)
class Interval:
    low: float
    ref: float
    high: float

    def __post_init__(self) -> None:
        if not (self.low <= self.ref <= self.high):
            raise ValueError(
                f"interval bounds out of order: low={self.low!r} ref={self.ref!r} high={self.high!r}"
            )

    @classmethod
    def point(cls, value: Number) -> "Interval":
        v = float(value)
        return cls(v, v, v)

    @classmethod
    def hull(cls, intervals: Iterable["Interval"], ref: float) -> "Interval":
        """Smallest interval containing every input, with an explicit reference."""
        items = list(intervals)
        if not items:
            raise ValueError("hull of an empty collection")
        low = min(i.low for i in items)
        high = max(i.high for i in items)
        return cls(min(low, ref), ref, max(high, ref))

    @property
    def is_point(self) -> bool:
        return self.low == self.ref == self.high

    @property
    def width(self) -> float:
        return self.high - self.low

    def contains(self, value: Number, rel_tol: float = 0.0) -> bool:
        slack = rel_tol * max(abs(self.low), abs(self.high))
        return self.low - slack <= value <= self.high + slack

    def map(self, fn) -> "Interval":
        """Apply a monotone non-decreasing function to all three values."""
        return Interval(fn(self.low), fn(self.ref), fn(self.high))

    def __add__(self, other: Union["Interval", Number]) -> "Interval":
        other = _coerce(other)
        return Interval(self.low + other.low, self.ref + other.ref, self.high + other.high)

    __radd__ = __add__

    def __mul__(self, other: Union["Interval", Number]) -> "Interval":
        if isinstance(other, Interval):
            if self.low < 0 or other.low < 0:
                raise ValueError("interval product is only defined for non-negative intervals")
            return Interval(self.low * other.low, self.ref * other.ref, self.high * other.high)
        k = float(other)
        if k >= 0:
            return Interval(self.low * k, self.ref * k, self.high * k)
        return Interval(self.high * k, self.ref * k, self.low * k)

    __rmul__ = __mul__

    def __truediv__(self, other: Number) -> "Interval":
        k = float(other)
        if k == 0:
            raise ZeroDivisionError("interval division by zero")
        return self * (1.0 / k)

    def __float__(self) -> float:
        return self.ref


def _coerce(value: Union[Interval, Number]) -> Interval:
    if isinstance(value, Interval):
        return value
    return Interval.point(value)


def ref_value(value: Union[Interval, Number]) -> float:
    return value.ref if isinstance(value, Interval) else float(value)
