"""Adaptive composite Gauss-Legendre quadrature, iterated over axes.

The 1-D driver bisects panels until the whole-vs-halves defect of the
base rule drops below the tolerance allotted to the panel (tolerance is
distributed by length, and split evenly across nesting levels for
iterated integrals).  Integrands are vectorised: the driver hands every
panel's nodes to ``f`` as one array, and nested integrals batch all
outer nodes through the inner levels in a single broadcast call, so the
innermost function sees a full tensor grid.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss

__all__ = ["QuadratureSpec", "QuadratureError", "integrate_1d", "integrate_box"]


@dataclass(frozen=True)
class QuadratureSpec:
    """Absolute tolerance, panel-bisection depth limit and base rule order."""

    tol: float = 1e-10
    max_depth: int = 16
    order: int = 7

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("quadrature tolerance must be positive")
        if self.max_depth < 1:
            raise ValueError("max subdivision depth must be >= 1")
        if self.order < 2:
            raise ValueError("rule order must be >= 2")


class QuadratureError(Exception):
    """Tolerance not reached at max depth; carries the best estimate."""

    def __init__(self, message: str, estimate, error_estimate: float):
        super().__init__(f"{message} (estimate {estimate!r}, "
                         f"error ~{error_estimate:.3e})")
        self.estimate = estimate
        self.error_estimate = error_estimate


@lru_cache(maxsize=None)
def _rule(order: int) -> tuple[np.ndarray, np.ndarray]:
    nodes, weights = leggauss(order)
    return nodes, weights


def _panel(f: Callable, a: float, b: float, order: int):
    nodes, weights = _rule(order)
    half = (b - a) / 2.0
    x = a + (nodes + 1.0) * half
    values = np.asarray(f(x), dtype=float)
    return np.tensordot(weights, values, axes=(0, 0)) * half


def integrate_1d(f: Callable, a: float, b: float,
                 spec: QuadratureSpec = QuadratureSpec()):
    """Integrate a vectorised integrand from ``a`` to ``b`` (signed).

    ``f`` maps a node array of shape ``(k,)`` to an array of shape
    ``(k, *batch)``; the result has shape ``batch`` (a float when the
    batch is empty).  Raises :class:`QuadratureError` when the panel
    defect still exceeds its share of the tolerance at maximum depth.
    """
    if a == b:
        probe = np.asarray(f(np.asarray([a])), dtype=float)
        return np.zeros(probe.shape[1:]) if probe.ndim > 1 else 0.0
    total_len = abs(b - a)
    stack = [(float(a), float(b), 0, _panel(f, a, b, spec.order))]
    pieces = []
    worst = 0.0
    exhausted = False
    while stack:
        lo, hi, depth, whole = stack.pop()
        mid = (lo + hi) / 2.0
        left = _panel(f, lo, mid, spec.order)
        right = _panel(f, mid, hi, spec.order)
        refined = left + right
        err = float(np.max(np.abs(refined - whole)))
        budget = spec.tol * (abs(hi - lo) / total_len)
        if err <= budget or depth + 1 >= spec.max_depth:
            if err > budget:
                exhausted = True
                worst = max(worst, err)
            pieces.append(refined)
        else:
            stack.append((lo, mid, depth + 1, left))
            stack.append((mid, hi, depth + 1, right))
    value = pieces[0]
    for piece in pieces[1:]:
        value = value + piece
    if exhausted:
        raise QuadratureError("quadrature tolerance not reached at max depth",
                              value, worst)
    return value if isinstance(value, np.ndarray) else float(value)


def integrate_box(fn: Callable, bounds: Sequence[tuple[float, float]],
                  spec: QuadratureSpec = QuadratureSpec(),
                  batch: Sequence[np.ndarray] = ()):
    """Iterated integral of ``fn`` over a box, innermost axes batched.

    ``fn`` receives one broadcast coordinate array per axis of
    ``bounds`` (in order), followed by the arrays in ``batch`` expanded
    to the same shape, and must return an array of that shape.  With a
    nonempty ``batch`` of common shape ``S`` the result has shape ``S``;
    otherwise it is a float.  The tolerance is split evenly across the
    nesting levels.
    """
    bounds = list(bounds)
    batch = [np.asarray(arr, dtype=float) for arr in batch]
    base_shape = batch[0].shape if batch else ()
    axis_spec = replace(spec, tol=spec.tol / max(len(bounds), 1))

    def level(axis: int, fixed: list[np.ndarray], shape: tuple[int, ...]):
        if axis == len(bounds):
            broadcast = [np.broadcast_to(arr, shape) for arr in fixed]
            return np.asarray(fn(*broadcast), dtype=float)

        def integrand(t: np.ndarray):
            new_shape = (len(t),) + shape
            t_exp = np.broadcast_to(
                t.reshape((len(t),) + (1,) * len(shape)), new_shape)
            expanded = [np.broadcast_to(arr, new_shape) for arr in fixed]
            expanded.insert(axis, t_exp)
            return level(axis + 1, expanded, new_shape)

        lo, hi = bounds[axis]
        return integrate_1d(integrand, lo, hi, axis_spec)

    result = level(0, list(batch), base_shape)
    if base_shape == ():
        return float(result)
    return np.asarray(result)
