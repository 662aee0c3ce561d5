"""Density reconstruction, chart normalization and planar invariants.

A symmetric tensor with vanishing same-block entries and compatible
mixed third derivatives determines the density uniquely once its values
on the axis leaves are prescribed: the reconstruction walks grid points
in order of how many coordinates are nonzero, expressing each value
through three already-known ancestors and a double integral of one
tensor entry.  Normalization reparametrizes each block so the density
becomes 1 on the whole axis-leaf cross, which pins down the planar
canonical form and its two scalar invariants.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .expr import Const, Expr, differentiate, is_identically_zero, simplify, substitute
from .quadrature import QuadratureSpec, integrate_1d, integrate_box
from .web import (SymTensorField, WebChart, _block_of, _d2log_h,
                  nonuniformity_tensor)

__all__ = [
    "BoundaryData", "DensityGrid", "AdmissibilityVerdict", "ReconstructionError",
    "check_tensor_admissible", "reconstruct_density", "axes_including_zero",
    "roundtrip_error", "normalize_chart", "NormalizedChart",
    "planar_invariants", "PlanarInvariants",
    "canonical_form_report", "CanonicalFormReport",
]


class ReconstructionError(RuntimeError):
    """Inconsistent inputs surfaced during density reconstruction."""


@dataclass(frozen=True)
class BoundaryData:
    """Density restrictions to the axis leaves, one expression per block.

    Every expression depends only on its block's variables and all of
    them agree at the origin (that shared value is the density at the
    base point).
    """

    variables: tuple[str, ...]
    blocks: tuple[tuple[int, ...], ...]
    expressions: tuple[Expr, ...]

    def __post_init__(self):
        if len(self.expressions) != len(self.blocks):
            raise ValueError("one boundary expression per block is required")
        for blk, e in zip(self.blocks, self.expressions):
            allowed = {self.variables[k - 1] for k in blk}
            extra = e.variables() - allowed
            if extra:
                raise ValueError(f"boundary expression for block {blk} uses "
                                 f"out-of-block variables {sorted(extra)}")
        values = [float(e.evaluate({v: 0.0 for v in e.variables()}))
                  for e in self.expressions]
        base = values[0]
        if base <= 0:
            raise ValueError("boundary density must be positive at the origin")
        for v in values[1:]:
            if abs(v - base) > 1e-12 * max(1.0, abs(base)):
                raise ValueError("boundary expressions disagree at the origin")

    @property
    def base_value(self) -> float:
        e = self.expressions[0]
        return float(e.evaluate({v: 0.0 for v in e.variables()}))

    @classmethod
    def from_chart(cls, w: WebChart) -> "BoundaryData":
        exprs = []
        for blk in w.blocks:
            outside = {w.var(k): Const(0.0)
                       for k in range(1, w.m + 1) if k not in blk}
            exprs.append(simplify(substitute(w.density, outside)))
        return cls(w.variables, w.blocks, tuple(exprs))

    def leaf_value(self, block: int, point: Sequence[float]) -> float:
        binding = {self.variables[k - 1]: float(point[k - 1])
                   for k in self.blocks[block]}
        return float(self.expressions[block].evaluate(binding))


@dataclass(eq=False)
class DensityGrid:
    variables: tuple[str, ...]
    axes: tuple[np.ndarray, ...]
    values: np.ndarray

    def __post_init__(self):
        shape = tuple(len(ax) for ax in self.axes)
        if self.values.shape != shape:
            raise ValueError("grid values do not match the axes")
        for ax in self.axes:
            if not np.any(ax == 0.0):
                raise ValueError("every grid axis must contain the origin")
        if not np.all(self.values > 0.0):
            raise ValueError("density grid must be strictly positive")

    def meshgrid_binding(self) -> dict[str, np.ndarray]:
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return {name: grid for name, grid in zip(self.variables, mesh)}


def axes_including_zero(lows: Sequence[float], highs: Sequence[float],
                        per_axis: int) -> tuple[np.ndarray, ...]:
    """Per-axis sample coordinates guaranteed to contain 0 exactly."""
    axes = []
    for lo, hi in zip(lows, highs):
        pts = np.linspace(float(lo), float(hi), per_axis)
        nearest = int(np.argmin(np.abs(pts)))
        if pts[nearest] != 0.0:
            pts = np.sort(np.append(pts, 0.0))
        else:
            pts[nearest] = 0.0
        axes.append(pts)
    return tuple(axes)


@dataclass(frozen=True)
class AdmissibilityVerdict:
    ok: bool
    condition: int | None = None          # 2: same-block entry, 3: compatibility
    indices: tuple[int, ...] | None = None
    witness: dict[str, float] | None = None
    max_violation: float = 0.0


def check_tensor_admissible(tensor: SymTensorField,
                            bounds: Mapping[str, tuple[float, float]] | None = None,
                            samples: int = 21,
                            tol: float = 1e-9) -> AdmissibilityVerdict:
    """Verify the tensor identities a nonuniformity tensor must satisfy.

    Symmetry holds by construction of the field; checked here are the
    vanishing of same-block entries and the cross-derivative
    compatibility ``d_a A_bc = d_b A_ac`` whenever ``c`` lies in a block
    different from both ``a``'s and ``b``'s.
    """
    m = tensor.m
    if bounds is None:
        bounds = {v: (-1.0, 1.0) for v in tensor.variables}
    worst = AdmissibilityVerdict(True)
    for k in range(1, m + 1):
        for l in range(k, m + 1):
            if _block_of(tensor.blocks, k) != _block_of(tensor.blocks, l):
                continue
            verdict = is_identically_zero(tensor.entry(k, l), bounds,
                                          samples=samples, tol=tol)
            if not verdict.is_zero:
                return AdmissibilityVerdict(False, 2, (k, l), verdict.witness,
                                            verdict.max_abs)
    for a in range(1, m + 1):
        for b in range(a + 1, m + 1):
            for c in range(1, m + 1):
                if (_block_of(tensor.blocks, c) == _block_of(tensor.blocks, a)
                        or _block_of(tensor.blocks, c) == _block_of(tensor.blocks, b)):
                    continue
                lhs = differentiate(tensor.entry(b, c), tensor.variables[a - 1])
                rhs = differentiate(tensor.entry(a, c), tensor.variables[b - 1])
                verdict = is_identically_zero(simplify(lhs - rhs), bounds,
                                              samples=samples, tol=tol)
                if not verdict.is_zero:
                    return AdmissibilityVerdict(False, 3, (a, b, c),
                                                verdict.witness, verdict.max_abs)
    return worst


def reconstruct_density(tensor: SymTensorField, boundary: BoundaryData,
                        axes: Sequence[np.ndarray],
                        spec: QuadratureSpec = QuadratureSpec(),
                        validate: bool = True,
                        prefer_pair: tuple[int, int] | None = None) -> DensityGrid:
    """Rebuild the density on a grid from tensor and axis-leaf data.

    Each grid point with nonzero coordinates in at least two blocks is
    expressed through the three points obtained by zeroing one or both
    members of a cross-block pair ``(j, k)`` of nonzero coordinates,
    times the exponential of the double integral of the ``(j, k)``
    tensor entry over ``[0, x_j] x [0, x_k]``.  The pair is the
    lexicographically smallest valid one unless ``prefer_pair`` is given
    (the result must not depend on the choice; the tests assert this).
    """
    variables = tensor.variables
    blocks = tensor.blocks
    if boundary.variables != variables or boundary.blocks != blocks:
        raise ValueError("boundary data does not match the tensor layout")
    axes = tuple(np.asarray(ax, dtype=float) for ax in axes)
    if len(axes) != tensor.m:
        raise ValueError("one axis array per variable is required")
    for ax in axes:
        if not np.any(ax == 0.0):
            raise ReconstructionError("every grid axis must contain 0")
    if validate:
        bounds = {v: (float(ax.min()), float(ax.max()))
                  for v, ax in zip(variables, axes)}
        verdict = check_tensor_admissible(tensor, bounds)
        if not verdict.ok:
            raise ReconstructionError(
                f"tensor violates admissibility condition ({verdict.condition}) "
                f"at indices {verdict.indices}: |violation| = "
                f"{verdict.max_violation:.3e}")

    m = tensor.m
    memo: dict[tuple[float, ...], float] = {}

    def choose_pair(nonzero: list[int]) -> tuple[int, int]:
        candidates = [(j, k) for j in nonzero for k in nonzero
                      if j < k and _block_of(blocks, j) != _block_of(blocks, k)]
        if prefer_pair is not None:
            wanted = (min(prefer_pair), max(prefer_pair))
            if wanted in candidates:
                return wanted
        return candidates[0]

    def value(point: tuple[float, ...]) -> float:
        if point in memo:
            return memo[point]
        nonzero = [k for k in range(1, m + 1) if point[k - 1] != 0.0]
        hit = {_block_of(blocks, k) for k in nonzero}
        if len(hit) <= 1:
            block = hit.pop() if hit else 0
            v = boundary.leaf_value(block, point)
        else:
            j, k = choose_pair(nonzero)
            h_j = value(_zeroed(point, (j,)))
            h_k = value(_zeroed(point, (k,)))
            h_jk = value(_zeroed(point, (j, k)))
            frozen = {variables[s - 1]: point[s - 1]
                      for s in range(1, m + 1) if s not in (j, k)}
            entry = tensor.entry(j, k)

            def fn(tj, tk):
                binding = dict(frozen)
                binding[variables[j - 1]] = tj
                binding[variables[k - 1]] = tk
                vals = np.asarray(entry.evaluate(binding), dtype=float)
                return np.broadcast_to(vals, np.shape(tj))

            integral = integrate_box(
                fn, [(0.0, point[j - 1]), (0.0, point[k - 1])], spec)
            v = h_j * h_k / h_jk * math.exp(integral)
        if not (np.isfinite(v) and v > 0.0):
            raise ReconstructionError(
                f"non-positive intermediate density at {point}; "
                "tensor and boundary data are inconsistent")
        memo[point] = v
        return v

    shape = tuple(len(ax) for ax in axes)
    values = np.empty(shape)
    for index in itertools.product(*(range(s) for s in shape)):
        point = tuple(float(axes[d][i]) for d, i in enumerate(index))
        values[index] = value(point)
    return DensityGrid(variables, axes, values)


def _zeroed(point: tuple[float, ...], indices: tuple[int, ...]) -> tuple[float, ...]:
    out = list(point)
    for k in indices:
        out[k - 1] = 0.0
    return tuple(out)


def roundtrip_error(w: WebChart, axes: Sequence[np.ndarray],
                    spec: QuadratureSpec = QuadratureSpec()) -> float:
    """Sup relative error of density -> (tensor, boundary) -> density."""
    tensor = nonuniformity_tensor(w)
    boundary = BoundaryData.from_chart(w)
    grid = reconstruct_density(tensor, boundary, axes, spec)
    exact = np.asarray(w.density.evaluate(grid.meshgrid_binding()), dtype=float)
    exact = np.broadcast_to(exact, grid.values.shape)
    return float(np.max(np.abs(grid.values - exact) / np.abs(exact)))


# ---------------------------------------------------------------------------
# normalization

class NormalizedChart:
    """Chart transform making the density 1 on the axis-leaf cross.

    The leading coordinate of each block is replaced by the normalised
    running integral of the block's axis-restricted density; a final
    linear rescaling of the first coordinate absorbs the base value.
    ``forward``/``inverse`` evaluate the transform numerically and
    ``density`` the transformed density (which equals 1 on the cross and
    on all of space exactly when the web is trivial).
    """

    def __init__(self, w: WebChart, spec: QuadratureSpec):
        if not w.domain.contains(np.zeros(w.m), strict=True):
            raise ValueError("normalization is anchored at the origin, which "
                             "must be interior to the chart domain")
        self.chart = w
        self.spec = spec
        self.base = w.density_at(np.zeros(w.m))
        self._restricted: list[Expr] = []
        for blk in w.blocks:
            outside = {w.var(k): Const(0.0)
                       for k in range(1, w.m + 1) if k not in blk}
            self._restricted.append(simplify(substitute(w.density, outside)))
        self.scale = np.ones(w.m)
        self.scale[w.blocks[0][0] - 1] = self.base

    def _lead_integral(self, b: int, lead_value: float, rest: dict[str, float]) -> float:
        w = self.chart
        lead_var = w.var(w.blocks[b][0])

        def integrand(t):
            binding = dict(rest)
            binding[lead_var] = t
            vals = np.asarray(self._restricted[b].evaluate(binding), dtype=float)
            return np.broadcast_to(vals, np.shape(t))

        return float(integrate_1d(integrand, 0.0, lead_value, self.spec)) / self.base

    def forward(self, point) -> np.ndarray:
        w = self.chart
        point = np.asarray(point, dtype=float)
        image = point.copy()
        for b, blk in enumerate(w.blocks):
            rest = {w.var(k): float(point[k - 1]) for k in blk[1:]}
            image[blk[0] - 1] = self._lead_integral(b, float(point[blk[0] - 1]), rest)
        return image * self.scale

    def inverse(self, image) -> np.ndarray:
        w = self.chart
        image = np.asarray(image, dtype=float) / self.scale
        point = image.copy()
        for b, blk in enumerate(w.blocks):
            lead = blk[0]
            rest = {w.var(k): float(image[k - 1]) for k in blk[1:]}
            target = float(image[lead - 1])
            lo, hi = w.domain.interval(lead)
            f_lo = self._lead_integral(b, lo, rest) - target
            f_hi = self._lead_integral(b, hi, rest) - target
            if f_lo > 0 or f_hi < 0:
                raise ValueError("image point is outside the transformed domain")
            x = min(max(target * self.base /
                        max(self._block_density(b, 0.0, rest), 1e-300), lo), hi)
            for _ in range(100):
                f_x = self._lead_integral(b, x, rest) - target
                if abs(f_x) <= 1e-14 * max(1.0, abs(target)):
                    break
                if f_x > 0:
                    hi = x
                else:
                    lo = x
                slope = self._block_density(b, x, rest) / self.base
                x_new = x - f_x / slope if slope > 0 else 0.5 * (lo + hi)
                x = x_new if lo < x_new < hi else 0.5 * (lo + hi)
            point[lead - 1] = x
        return point

    def _block_density(self, b: int, lead_value: float,
                       rest: dict[str, float]) -> float:
        binding = dict(rest)
        binding[self.chart.var(self.chart.blocks[b][0])] = lead_value
        return float(self._restricted[b].evaluate(binding))

    def jacobian_det(self, point) -> float:
        """Determinant of the forward map at a source-chart point."""
        w = self.chart
        point = np.asarray(point, dtype=float)
        det = self.base  # the final linear rescaling
        for b, blk in enumerate(w.blocks):
            rest = {w.var(k): float(point[k - 1]) for k in blk[1:]}
            det *= self._block_density(b, float(point[blk[0] - 1]), rest) / self.base
        return det

    def density_at_source(self, point) -> float:
        """Transformed density evaluated at the preimage ``point``."""
        return self.chart.density_at(point) / self.jacobian_det(point)

    def density(self, image) -> float:
        """Transformed density at a point of the normalized chart."""
        return self.density_at_source(self.inverse(image))

    def cross_defect(self, per_axis: int = 9) -> float:
        """Max |transformed density - 1| sampled on the axis-leaf cross."""
        w = self.chart
        worst = 0.0
        for blk in w.blocks:
            grids = [np.linspace(*w.domain.interval(k), per_axis) for k in blk]
            for combo in itertools.product(*grids):
                point = np.zeros(w.m)
                for k, val in zip(blk, combo):
                    point[k - 1] = val
                worst = max(worst, abs(self.density_at_source(point) - 1.0))
        return worst


def normalize_chart(w: WebChart,
                    spec: QuadratureSpec = QuadratureSpec()) -> NormalizedChart:
    """Transform to coordinates in which the density is 1 on the cross."""
    return NormalizedChart(w, spec)


# ---------------------------------------------------------------------------
# planar canonical form

@dataclass(frozen=True)
class PlanarInvariants:
    kappa0: float
    a: float
    generic: bool
    factor_x: float
    factor_y: float


_GENERIC_EPS = 1e-8


def planar_invariants(w: WebChart, p) -> PlanarInvariants:
    """Scalar invariants of a planar web at ``p``.

    ``kappa0`` is the tensor entry over the density; ``a`` combines the
    covariant derivative factors of the entry, and the web is generic at
    ``p`` when both factors are nonzero.
    """
    if w.m != 2 or not w.codimension_one:
        raise ValueError("planar invariants need a 2-dimensional chart with "
                         "singleton blocks")
    binding = w.binding(p)
    kappa = _d2log_h(w, 1, 2)
    h = w.density
    hv = float(h.evaluate(binding))
    kv = float(kappa.evaluate(binding))
    fx = hv * float(differentiate(kappa, w.var(1)).evaluate(binding)) \
        - float(differentiate(h, w.var(1)).evaluate(binding)) * kv
    fy = hv * float(differentiate(kappa, w.var(2)).evaluate(binding)) \
        - float(differentiate(h, w.var(2)).evaluate(binding)) * kv
    a = math.sqrt(abs(fx * fy / hv ** 5))
    generic = abs(fx) > _GENERIC_EPS and abs(fy) > _GENERIC_EPS
    return PlanarInvariants(kv / hv, a, generic, fx, fy)


@dataclass(frozen=True)
class CanonicalFormReport:
    kappa0: float               # entry over density in the input chart
    a: float
    kappa0_canonical: float     # after the sign-normalizing rotations
    rotations: int              # quarter turns needed for positive slopes
    scale_c: float              # (cx, y/c) rescaling equalizing the slopes
    jet_error: float
    jet_ok: bool
    remainder_ratios: tuple[float, ...]
    remainder_ok: bool


def canonical_form_report(w: WebChart, tol: float = 1e-9) -> CanonicalFormReport:
    """Check the cubic jet of a normalized planar density.

    Requires the chart to be normalized (density 1 on both axes) and
    generic at the origin.  The jet of the density must then agree with
    ``1 + kappa0*x*y + (slope_x/2)*x^2*y + (slope_y/2)*x*y^2`` where the
    slopes are the gradient of the tensor entry; the reported rotation
    count and rescaling make both slopes equal and positive.  The
    remainder beyond the jet is verified to shrink like the fourth power
    of the distance to the origin.
    """
    if w.m != 2 or not w.codimension_one:
        raise ValueError("canonical form is defined for planar charts with "
                         "singleton blocks")
    x_var, y_var = w.var(1), w.var(2)
    lo1, hi1 = w.domain.interval(1)
    lo2, hi2 = w.domain.interval(2)
    ts = np.linspace(lo1, hi1, 33)
    on_x = np.asarray(w.density.evaluate({x_var: ts, y_var: np.zeros_like(ts)}))
    ts2 = np.linspace(lo2, hi2, 33)
    on_y = np.asarray(w.density.evaluate({x_var: np.zeros_like(ts2), y_var: ts2}))
    if np.max(np.abs(on_x - 1.0)) > tol or np.max(np.abs(on_y - 1.0)) > tol:
        raise ValueError("chart is not normalized: density is not 1 on the "
                         "axis leaves (run normalize_chart first)")

    inv = planar_invariants(w, (0.0, 0.0))
    if not inv.generic:
        raise ValueError("web is not generic at the origin: a gradient factor "
                         "of the tensor entry vanishes")
    origin = {x_var: 0.0, y_var: 0.0}
    kappa = _d2log_h(w, 1, 2)
    s_x = float(differentiate(kappa, x_var).evaluate(origin))
    s_y = float(differentiate(kappa, y_var).evaluate(origin))
    kappa0 = inv.kappa0
    rotations = 0
    sx, sy, k0 = s_x, s_y, kappa0
    while not (sx > 0 and sy > 0):
        sx, sy, k0 = -sy, sx, -k0
        rotations += 1
        if rotations > 3:
            raise RuntimeError("sign normalization did not terminate")
    scale_c = math.sqrt(sx / sy)

    def partial(expr: Expr, *vars_: str) -> float:
        out = expr
        for v in vars_:
            out = differentiate(out, v)
        return float(out.evaluate(origin))

    h = w.density
    t_xy = partial(h, x_var, y_var)
    t_xxy = partial(h, x_var, x_var, y_var)
    t_xyy = partial(h, x_var, y_var, y_var)
    pure = [partial(h, *combo) for combo in
            [(x_var,), (x_var, x_var), (x_var, x_var, x_var),
             (y_var,), (y_var, y_var), (y_var, y_var, y_var)]]
    kv0 = float(kappa.evaluate(origin))
    jet_error = max(abs(t_xy - kv0), abs(t_xxy - s_x), abs(t_xyy - s_y),
                    max(abs(v) for v in pure))
    jet_ok = jet_error <= 1e-8 * max(1.0, abs(kv0))

    # remainder beyond the cubic jet must vanish to fourth order
    margin = min(hi1, -lo1, hi2, -lo2)
    ratios = []
    for k in range(4):
        s = 0.5 * margin / 2 ** k
        px, py = 0.8 * s, 0.6 * s
        jet = 1.0 + t_xy * px * py + 0.5 * t_xxy * px ** 2 * py \
            + 0.5 * t_xyy * px * py ** 2
        value = float(h.evaluate({x_var: px, y_var: py}))
        ratios.append(abs(value - jet) / s ** 4)
    remainder_ok = ratios[-1] <= 1.5 * ratios[0] + 1e-6
    return CanonicalFormReport(kappa0, inv.a, k0, rotations, scale_c,
                               jet_error, jet_ok, tuple(ratios), remainder_ok)
