"""Oriented coordinate boxes used for volume bookkeeping."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = ["Region"]


@dataclass(frozen=True)
class Region:
    """Box ``<a, b>`` with a per-axis orientation sign ``sign(b_k - a_k)``.

    Degenerate axes are rejected: a region is a unit of volume, and a
    zero-width axis would silently integrate to nothing.
    """

    a: tuple[float, ...]
    b: tuple[float, ...]

    def __post_init__(self):
        if len(self.a) != len(self.b) or not self.a:
            raise ValueError("corner dimensions must match and be nonempty")
        object.__setattr__(self, "a", tuple(float(x) for x in self.a))
        object.__setattr__(self, "b", tuple(float(x) for x in self.b))
        for k, (lo, hi) in enumerate(zip(self.a, self.b)):
            if lo == hi:
                raise ValueError(f"axis {k + 1} of region has zero length")
            if not (math.isfinite(lo) and math.isfinite(hi)):
                raise ValueError(f"axis {k + 1} of region is not finite")

    @property
    def dim(self) -> int:
        return len(self.a)

    @property
    def orientation(self) -> int:
        sign = 1
        for lo, hi in zip(self.a, self.b):
            if hi < lo:
                sign = -sign
        return sign

    def interval(self, k: int) -> tuple[float, float]:
        """Sorted bounds of 1-based axis ``k``."""
        lo, hi = self.a[k - 1], self.b[k - 1]
        return (lo, hi) if lo <= hi else (hi, lo)

    def intervals(self) -> list[tuple[float, float]]:
        return [self.interval(k) for k in range(1, self.dim + 1)]

    @property
    def center(self) -> np.ndarray:
        return (np.asarray(self.a) + np.asarray(self.b)) / 2.0

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(np.asarray(self.b) - np.asarray(self.a)))

    def contains(self, point, tol: float = 0.0, strict: bool = False) -> bool:
        point = np.asarray(point, dtype=float)
        if point.shape != (self.dim,):
            return False
        for x, (lo, hi) in zip(point, self.intervals()):
            if strict:
                if not (lo + tol < x < hi - tol):
                    return False
            elif not (lo - tol <= x <= hi + tol):
                return False
        return True

    def subbox(self, changes: dict[int, tuple[float, float]]) -> "Region":
        """Copy with 1-based axes replaced by new (a_k, b_k) pairs."""
        a = list(self.a)
        b = list(self.b)
        for k, (lo, hi) in changes.items():
            a[k - 1] = lo
            b[k - 1] = hi
        return Region(tuple(a), tuple(b))
