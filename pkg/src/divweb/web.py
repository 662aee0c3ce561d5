"""Webs in adapted coordinates and their differential invariants.

A chart holds the whole structure: the dimension, the ordered block
partition (one contiguous index range per foliation) and the positive
density ``h`` of the volume form in those coordinates.  Everything else
is derived from ``log h``: the nonuniformity tensor collects its
cross-block second partials, the diagonal connection form its in-block
first partials, and the curvature form is the exterior derivative of
the latter.  Triviality is equivalent to all cross-block entries
vanishing, and the trivializing map is built from one-dimensional
integrals of axis restrictions of ``h``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

from .expr import (Const, Expr, ZeroVerdict, differentiate, grid_bindings,
                   is_identically_zero, parse_expr, simplify, substitute)
from .quadrature import QuadratureSpec, integrate_1d
from .region import Region

__all__ = [
    "WebChart", "SymTensorField", "GeodesicPath", "TrivialityVerdict",
    "TrivializingMap", "NotTrivialError",
    "nonuniformity_tensor", "is_locally_trivial", "trivializing_map",
    "connection_form", "curvature_form", "ricci_offdiag", "refine_to_codim1",
    "integrate_geodesic",
]


class NotTrivialError(ValueError):
    """Raised when an operation requires a locally trivial web."""


@dataclass(frozen=True)
class WebChart:
    """A divergence-free web in adapted coordinates.

    ``blocks`` is the ordered partition of 1-based axis indices into
    contiguous ranges, one per foliation; ``density`` is the volume
    density ``h`` (positive on ``domain``, checked by sampling).
    """

    variables: tuple[str, ...]
    blocks: tuple[tuple[int, ...], ...]
    density: Expr
    domain: Region

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple(self.variables))
        object.__setattr__(self, "blocks",
                           tuple(tuple(int(i) for i in blk) for blk in self.blocks))
        m = len(self.variables)
        if m == 0 or len(set(self.variables)) != m:
            raise ValueError("variables must be nonempty and distinct")
        if self.domain.dim != m:
            raise ValueError("domain dimension does not match the chart")
        flat = [i for blk in self.blocks for i in blk]
        if flat != list(range(1, m + 1)) or any(not blk for blk in self.blocks):
            raise ValueError("blocks must be nonempty contiguous ranges "
                             "covering 1..m in order")
        unknown = self.density.variables() - set(self.variables)
        if unknown:
            raise ValueError(f"density uses undeclared variables {sorted(unknown)}")
        self._check_positive()

    def _check_positive(self, per_axis: int = 9):
        binding = grid_bindings(self.bounds(), per_axis)
        values = np.asarray(self.density.evaluate(binding), dtype=float)
        if values.ndim == 0:
            values = values.reshape(1)
        if not np.all(np.isfinite(values)) or np.min(values) <= 0.0:
            raise ValueError("density must be positive and finite on the domain")

    @classmethod
    def from_text(cls, density: str, variables: Sequence[str],
                  blocks: Sequence[Sequence[int]],
                  lows: Sequence[float], highs: Sequence[float]) -> "WebChart":
        variables = tuple(variables)
        return cls(variables, tuple(tuple(b) for b in blocks),
                   parse_expr(density, variables), Region(tuple(lows), tuple(highs)))

    @property
    def m(self) -> int:
        return len(self.variables)

    @property
    def n_foliations(self) -> int:
        return len(self.blocks)

    @property
    def codimension_one(self) -> bool:
        return all(len(blk) == 1 for blk in self.blocks)

    def block_of(self, axis: int) -> int:
        """0-based block index containing 1-based axis ``axis``."""
        for b, blk in enumerate(self.blocks):
            if axis in blk:
                return b
        raise ValueError(f"axis {axis} outside 1..{self.m}")

    def same_block(self, k: int, l: int) -> bool:
        return self.block_of(k) == self.block_of(l)

    def var(self, axis: int) -> str:
        return self.variables[axis - 1]

    def bounds(self) -> dict[str, tuple[float, float]]:
        return {self.var(k): self.domain.interval(k) for k in range(1, self.m + 1)}

    def binding(self, point) -> dict[str, float]:
        point = np.asarray(point, dtype=float)
        if point.shape != (self.m,):
            raise ValueError(f"point must have {self.m} coordinates")
        return {name: float(x) for name, x in zip(self.variables, point)}

    def density_at(self, point) -> float:
        return float(self.density.evaluate(self.binding(point)))


def _log_terms(e: Expr, coeff: float = 1.0) -> list[tuple[str, float, Expr]]:
    """Additive decomposition of ``log e`` for derivative purposes.

    Returns terms ``("log", c, f)`` contributing ``c * f'/f`` and
    ``("lin", c, u)`` contributing ``c * u'`` to the logarithmic
    derivative.  Splitting a product this way is the product rule for
    d(log h), so it is pointwise valid wherever ``h`` is positive, and
    it keeps factors in disjoint variables structurally separate (their
    cross partials then fold to the constant zero).
    """
    from . import expr as _e
    if isinstance(e, _e.Mul):
        return _log_terms(e.left, coeff) + _log_terms(e.right, coeff)
    if isinstance(e, _e.Div):
        return _log_terms(e.left, coeff) + _log_terms(e.right, -coeff)
    if isinstance(e, _e.Pow) and isinstance(e.right, Const):
        return _log_terms(e.left, coeff * e.right.value)
    if isinstance(e, _e.Sqrt):
        return _log_terms(e.arg, coeff * 0.5)
    if isinstance(e, _e.Exp):
        return [("lin", coeff, e.arg)]
    if isinstance(e, _e.Neg):
        return _log_terms(e.arg, coeff)
    if isinstance(e, Const):
        return []
    return [("log", coeff, e)]


@lru_cache(maxsize=512)
def _dlog_h(w: WebChart, axis: int) -> Expr:
    var = w.var(axis)
    total: Expr = Const(0.0)
    for kind, coeff, part in _log_terms(w.density):
        part_d = differentiate(part, var)
        if isinstance(part_d, Const) and part_d.value == 0.0:
            continue
        if kind == "lin":
            total = total + Const(coeff) * part_d
        else:
            total = total + Const(coeff) * part_d / part
    return simplify(total)


@lru_cache(maxsize=512)
def _d2log_h(w: WebChart, k: int, l: int) -> Expr:
    k, l = min(k, l), max(k, l)
    return simplify(differentiate(_dlog_h(w, k), w.var(l)))


@dataclass(frozen=True)
class SymTensorField:
    """Symmetric m x m field of expressions (upper triangle stored)."""

    variables: tuple[str, ...]
    blocks: tuple[tuple[int, ...], ...]
    upper: tuple[Expr, ...]  # row-major entries (k, l) with k <= l, 1-based

    @classmethod
    def from_entries(cls, variables, blocks, entry_fn) -> "SymTensorField":
        m = len(variables)
        upper = tuple(entry_fn(k, l)
                      for k in range(1, m + 1) for l in range(k, m + 1))
        return cls(tuple(variables), tuple(tuple(b) for b in blocks), upper)

    @property
    def m(self) -> int:
        return len(self.variables)

    def entry(self, k: int, l: int) -> Expr:
        if not (1 <= k <= self.m and 1 <= l <= self.m):
            raise ValueError(f"indices ({k},{l}) outside 1..{self.m}")
        if k > l:
            k, l = l, k
        offset = (k - 1) * self.m - (k - 1) * (k - 2) // 2 + (l - k)
        return self.upper[offset]

    def cross_block_pairs(self) -> list[tuple[int, int]]:
        pairs = []
        for k in range(1, self.m + 1):
            for l in range(k + 1, self.m + 1):
                if _block_of(self.blocks, k) != _block_of(self.blocks, l):
                    pairs.append((k, l))
        return pairs

    def matrix_at(self, binding) -> np.ndarray:
        out = np.zeros((self.m, self.m))
        for k in range(1, self.m + 1):
            for l in range(k, self.m + 1):
                value = float(self.entry(k, l).evaluate(binding))
                out[k - 1, l - 1] = value
                out[l - 1, k - 1] = value
        return out


def _block_of(blocks, axis: int) -> int:
    for b, blk in enumerate(blocks):
        if axis in blk:
            return b
    raise ValueError(f"axis {axis} outside the partition")


def nonuniformity_tensor(w: WebChart) -> SymTensorField:
    """Cross-block second partials of ``log h``; zero within blocks."""

    def entry(k: int, l: int) -> Expr:
        if w.same_block(k, l):
            return Const(0.0)
        return _d2log_h(w, k, l)

    return SymTensorField.from_entries(w.variables, w.blocks, entry)


@dataclass(frozen=True)
class TrivialityVerdict:
    trivial: bool
    symbolic: bool                     # every cross-block entry folded to 0
    max_abs: float
    witness_axes: tuple[int, int] | None = None
    witness_point: dict[str, float] | None = None
    entry_kinds: dict[tuple[int, int], str] = field(default_factory=dict)


def is_locally_trivial(w: WebChart, tol: float = 1e-9,
                       samples: int | None = None) -> TrivialityVerdict:
    """Two-tier triviality test: symbolic zeros first, sampling second.

    On failure the witness is the sampled point where ``|kappa|`` over
    all cross-block entries is largest.  The default sampling density is
    33 per axis, lowered to 13 for charts of dimension 4 and above to
    keep the product grid affordable.
    """
    if samples is None:
        samples = 33 if w.m <= 3 else 13
    tensor = nonuniformity_tensor(w)
    bounds = w.bounds()
    symbolic = True
    worst = 0.0
    witness_axes = None
    witness_point = None
    kinds: dict[tuple[int, int], str] = {}
    for (k, l) in tensor.cross_block_pairs():
        verdict = is_identically_zero(tensor.entry(k, l), bounds,
                                      samples=samples, tol=tol)
        kinds[(k, l)] = verdict.kind
        if verdict.kind != ZeroVerdict.SYMBOLIC:
            symbolic = False
        if verdict.max_abs > worst:
            worst = verdict.max_abs
            witness_axes = (k, l)
            witness_point = verdict.witness
    trivial = worst <= tol
    if trivial:
        witness_axes = None
        witness_point = None
    return TrivialityVerdict(trivial, symbolic, worst,
                             witness_axes, witness_point, kinds)


class TrivializingMap:
    """Forward equivalence onto the standard web with unit density.

    Per block the map is the identity on all but the last coordinate,
    which becomes the running integral of the block's axis-restricted,
    normalised density.  The Jacobian determinant therefore reproduces
    ``h`` pointwise, which is exactly the pullback condition.
    """

    def __init__(self, w: WebChart, anchor, spec: QuadratureSpec):
        self.chart = w
        self.anchor = np.asarray(anchor, dtype=float)
        self.spec = spec
        h_anchor = w.density_at(self.anchor)
        n = w.n_foliations
        scale = h_anchor ** ((n - 1) / n)
        self._factors: list[Expr] = []
        for blk in w.blocks:
            outside = {w.var(j): float(self.anchor[j - 1])
                       for j in range(1, w.m + 1) if j not in blk}
            restricted = simplify(substitute(w.density, outside))
            self._factors.append(simplify(restricted / Const(scale)))

    def block_factor(self, b: int, point) -> float:
        """Normalised axis-restricted density of block ``b`` at ``point``."""
        w = self.chart
        binding = {w.var(j): float(point[j - 1]) for j in w.blocks[b]}
        return float(self._factors[b].evaluate(binding))

    def __call__(self, point) -> np.ndarray:
        w = self.chart
        point = np.asarray(point, dtype=float)
        image = point.copy()
        for b, blk in enumerate(w.blocks):
            last = blk[-1]
            var_last = w.var(last)
            fixed = {w.var(j): float(point[j - 1]) for j in blk[:-1]}

            def factor(t, fixed=fixed, b=b, var_last=var_last):
                binding = dict(fixed)
                binding[var_last] = t
                vals = np.asarray(self._factors[b].evaluate(binding), dtype=float)
                return np.broadcast_to(vals, np.shape(t))

            image[last - 1] = integrate_1d(factor, float(self.anchor[last - 1]),
                                           float(point[last - 1]), self.spec)
        return image

    def jacobian_det(self, point) -> float:
        point = np.asarray(point, dtype=float)
        det = 1.0
        for b in range(self.chart.n_foliations):
            det *= self.block_factor(b, point)
        return det


def trivializing_map(w: WebChart, spec: QuadratureSpec | None = None,
                     anchor=None, tol: float = 1e-9) -> TrivializingMap:
    """Numeric equivalence pulling the unit density back to ``h``.

    Only defined for locally trivial webs; the integrals are anchored at
    the origin when the domain contains it, else at the domain center.
    """
    verdict = is_locally_trivial(w, tol=tol)
    if not verdict.trivial:
        raise NotTrivialError(
            f"web is not locally trivial (max |kappa| = {verdict.max_abs:.3e} "
            f"at axes {verdict.witness_axes})")
    if anchor is None:
        origin = np.zeros(w.m)
        anchor = origin if w.domain.contains(origin) else w.domain.center
    return TrivializingMap(w, anchor, spec or QuadratureSpec())


def connection_form(w: WebChart) -> tuple[tuple[Expr, ...], ...]:
    """Diagonal 1-form components, one per block.

    Block ``i`` yields the coefficients of ``dx_k`` for each in-block
    axis ``k``, namely the first partials of ``log h``.
    """
    return tuple(tuple(_dlog_h(w, k) for k in blk) for blk in w.blocks)


def curvature_form(w: WebChart) -> tuple[dict[tuple[int, int], Expr], ...]:
    """Curvature 2-form components per block.

    Block ``i`` maps ``(l, k)`` with ``k`` in the block and ``l``
    outside it to the coefficient of ``dx_l ^ dx_k`` (in that order;
    this fixes the sign convention), which equals the cross-block
    second partial of ``log h``.
    """
    forms = []
    for blk in w.blocks:
        component: dict[tuple[int, int], Expr] = {}
        for k in blk:
            for l in range(1, w.m + 1):
                if not w.same_block(k, l):
                    component[(l, k)] = _d2log_h(w, k, l)
        forms.append(component)
    return tuple(forms)


def ricci_offdiag(w: WebChart) -> SymTensorField:
    """Cross-block part of the Ricci tensor of the coordinate connection.

    The connection of the all-singleton refinement has the single family
    of Christoffel symbols ``G^k_kk = d(log h)/dx_k``; the curvature is
    contracted honestly from them and the same-block part is projected
    away afterwards.  The result must agree with the nonuniformity
    tensor, which the tests assert entrywise.
    """
    m = w.m
    zero = Const(0.0)

    def gamma(up: int, i: int, j: int) -> Expr:
        if up == i == j:
            return _dlog_h(w, up)
        return zero

    def riemann(l: int, i: int, j: int, k: int) -> Expr:
        term = differentiate(gamma(l, j, k), w.var(i))
        term = term - differentiate(gamma(l, i, k), w.var(j))
        for s in range(1, m + 1):
            g_is = gamma(l, i, s)
            if not _is_zero(g_is):
                term = term + g_is * gamma(s, j, k)
            g_js = gamma(l, j, s)
            if not _is_zero(g_js):
                term = term - g_js * gamma(s, i, k)
        return simplify(term)

    def entry(i: int, k: int) -> Expr:
        if w.same_block(i, k):
            return Const(0.0)
        total: Expr = Const(0.0)
        for j in range(1, m + 1):
            total = total + riemann(j, i, j, k)
        return simplify(total)

    return SymTensorField.from_entries(w.variables, w.blocks, entry)


def _is_zero(e: Expr) -> bool:
    return isinstance(e, Const) and e.value == 0.0


def refine_to_codim1(w: WebChart) -> WebChart:
    """Replace the block partition by singletons, in order."""
    singles = tuple((k,) for k in range(1, w.m + 1))
    if w.blocks == singles:
        return w
    return WebChart(w.variables, singles, w.density, w.domain)


@dataclass(eq=False)
class GeodesicPath:
    times: np.ndarray
    points: np.ndarray      # shape (N+1, m)
    velocities: np.ndarray  # shape (N+1, m)
    truncated: bool


def integrate_geodesic(w: WebChart, p, v, t_end: float,
                       steps: int = 1000) -> GeodesicPath:
    """Fixed-step RK4 for the canonical coordinate connection.

    The equation of motion per axis is ``x_k'' + d(log h)/dx_k * (x_k')^2
    = 0``.  If the path leaves the chart domain it is truncated at the
    last interior sample and flagged.
    """
    if steps < 1:
        raise ValueError("step count must be >= 1")
    if not w.codimension_one:
        raise ValueError("geodesics need an all-singleton block partition; "
                         "use refine_to_codim1 first")
    p = np.asarray(p, dtype=float)
    v = np.asarray(v, dtype=float)
    if not w.domain.contains(p):
        raise ValueError("initial point lies outside the chart domain")
    grads = [_dlog_h(w, k) for k in range(1, w.m + 1)]

    def accel(x: np.ndarray, xdot: np.ndarray) -> np.ndarray:
        binding = {name: float(c) for name, c in zip(w.variables, x)}
        return np.array([-float(g.evaluate(binding)) * xdot[k] ** 2
                         for k, g in enumerate(grads)])

    dt = t_end / steps
    times = [0.0]
    points = [p.copy()]
    velocities = [v.copy()]
    x, xdot = p.copy(), v.copy()
    truncated = False
    for step in range(steps):
        k1x, k1v = xdot, accel(x, xdot)
        k2x, k2v = xdot + 0.5 * dt * k1v, accel(x + 0.5 * dt * k1x,
                                                xdot + 0.5 * dt * k1v)
        k3x, k3v = xdot + 0.5 * dt * k2v, accel(x + 0.5 * dt * k2x,
                                                xdot + 0.5 * dt * k2v)
        k4x, k4v = xdot + dt * k3v, accel(x + dt * k3x, xdot + dt * k3v)
        x = x + dt / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x)
        xdot = xdot + dt / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
        if not w.domain.contains(x):
            truncated = True
            break
        times.append((step + 1) * dt)
        points.append(x.copy())
        velocities.append(xdot.copy())
    return GeodesicPath(np.asarray(times), np.asarray(points),
                        np.asarray(velocities), truncated)
