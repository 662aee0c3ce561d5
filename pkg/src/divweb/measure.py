"""Volumes of leaf-bounded regions and volume-preserving holonomy.

The reflection through the leaf of foliation ``i`` anchored at ``p``
sends ``q`` to the unique point ``q'`` on the other side of the leaf
for which the boxes ``<p,q>`` and ``<p,q'>`` have cancelling signed
volumes.  The root is isolated by monotone bracketing (the defect is
strictly monotone in the reflected coordinate because the density is
positive) and then polished with Newton steps safeguarded by bisection.
Four alternating reflections form a loop whose displacement from the
identity measures the nonuniformity tensor; the quantitative box test
compares ``bd - ac`` of the four subdivision volumes against the sign
of the tensor entry.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .quadrature import QuadratureSpec, integrate_1d, integrate_box
from .region import Region
from .web import WebChart, _d2log_h, _dlog_h, nonuniformity_tensor

__all__ = [
    "Region", "QuadratureSpec", "ReflectionResult", "RootFindError", "FitError",
    "region_volume", "subdivision_volumes", "check_product_condition",
    "ProductConditionReport", "equal_split", "EqualSplitResult",
    "reflect", "loop", "holonomy_defect",
    "fit_loop_curvature", "LoopCurvatureFit",
    "reflection_taylor_check", "ReflectionTaylorFit",
]


class RootFindError(RuntimeError):
    """Reflection solver could not bracket or polish its root."""


class FitError(RuntimeError):
    """Taylor-coefficient fit is ill-conditioned at the given scales."""


def _density_fn(w: WebChart):
    def fn(*arrays):
        binding = {name: arr for name, arr in zip(w.variables, arrays)}
        values = np.asarray(w.density.evaluate(binding), dtype=float)
        return np.broadcast_to(values, np.shape(arrays[0]))
    return fn


def _check_box_in_domain(w: WebChart, region: Region):
    if region.dim != w.m:
        raise ValueError("region dimension does not match the chart")
    for k in range(1, w.m + 1):
        lo, hi = region.interval(k)
        dlo, dhi = w.domain.interval(k)
        pad = 1e-12 * (dhi - dlo)
        if lo < dlo - pad or hi > dhi + pad:
            raise ValueError(f"region leaves the chart domain on axis {k}")


def _positive_volume(w: WebChart, intervals, spec: QuadratureSpec) -> float:
    return float(integrate_box(_density_fn(w), intervals, spec))


def region_volume(w: WebChart, region: Region,
                  spec: QuadratureSpec = QuadratureSpec()) -> float:
    """Signed integral of the density over the oriented box."""
    _check_box_in_domain(w, region)
    return region.orientation * _positive_volume(w, region.intervals(), spec)


def subdivision_volumes(w: WebChart, K: Region, p, i: int, j: int,
                        spec: QuadratureSpec = QuadratureSpec()
                        ) -> tuple[float, float, float, float]:
    """Volumes (a, b, c, d) of the four subregions of ``K`` cut at ``p``.

    Labels follow the quadrant layout of the sign test: A has
    ``x_i <= p_i, x_j >= p_j``, B both above, C ``x_i >= p_i,
    x_j <= p_j`` and D both below.
    """
    p = np.asarray(p, dtype=float)
    _check_box_in_domain(w, K)
    if w.same_block(i, j):
        raise ValueError("axes must lie in distinct blocks")
    if not K.contains(p, strict=True):
        raise ValueError("subdivision point must be interior to the region")
    lo_i, hi_i = K.interval(i)
    lo_j, hi_j = K.interval(j)
    pi, pj = float(p[i - 1]), float(p[j - 1])

    def quadrant(int_i, int_j):
        box = K.subbox({i: int_i, j: int_j})
        return _positive_volume(w, box.intervals(), spec)

    a = quadrant((lo_i, pi), (pj, hi_j))
    b = quadrant((pi, hi_i), (pj, hi_j))
    c = quadrant((pi, hi_i), (lo_j, pj))
    d = quadrant((lo_i, pi), (lo_j, pj))
    return a, b, c, d


@dataclass(frozen=True)
class ProductConditionReport:
    a: float
    b: float
    c: float
    d: float
    bd_minus_ac: float
    kappa: float
    consistent: bool
    diameter: float
    quadrature_noise: float


def check_product_condition(w: WebChart, K: Region, p, i: int, j: int,
                            spec: QuadratureSpec = QuadratureSpec(),
                            kappa_tol: float = 1e-12) -> ProductConditionReport:
    """Compare the sign of ``bd - ac`` against the tensor entry at ``p``.

    Whether ``K`` is small enough for the sign test is the caller's
    responsibility; the report carries the region diameter so this can
    be judged.  A vanishing entry demands ``|bd - ac|`` below the
    quadrature noise.
    """
    p = np.asarray(p, dtype=float)
    a, b, c, d = subdivision_volumes(w, K, p, i, j, spec)
    kappa = float(nonuniformity_tensor(w).entry(i, j).evaluate(w.binding(p)))
    bd_minus_ac = b * d - a * c
    noise = spec.tol * (a + b + c + d)
    if abs(kappa) <= kappa_tol:
        consistent = abs(bd_minus_ac) <= noise
    else:
        consistent = (bd_minus_ac > 0) == (kappa > 0) and bd_minus_ac != 0.0
    return ProductConditionReport(a, b, c, d, bd_minus_ac, kappa, consistent,
                                  K.diameter, noise)


@dataclass(frozen=True)
class EqualSplitResult:
    cuts: tuple[float, ...]          # one hyperplane offset per requested axis
    cell_volumes: tuple[float, ...]  # 2^k cells, binary order over the axes
    total: float
    spread: float
    tolerance: float
    ok: bool


def equal_split(w: WebChart, K: Region, axes: Sequence[int],
                spec: QuadratureSpec = QuadratureSpec()) -> EqualSplitResult:
    """Cut each requested axis at its half-volume offset and compare cells.

    For a trivial web the per-axis half cuts make all ``2^k`` cells
    equal; otherwise the maximum cell spread is returned as a
    nontriviality witness (``ok`` is false).
    """
    if not w.codimension_one:
        raise ValueError("equal_split needs singleton blocks; "
                         "use refine_to_codim1 first")
    axes = [int(ax) for ax in axes]
    if len(set(axes)) != len(axes) or not axes:
        raise ValueError("axes must be nonempty and distinct")
    if any(not 1 <= ax <= w.m for ax in axes):
        raise ValueError(f"axes must lie in 1..{w.m}")
    _check_box_in_domain(w, K)
    intervals = K.intervals()
    total = _positive_volume(w, intervals, spec)
    if total <= 0:
        raise ValueError("degenerate region")

    cuts = []
    for ax in axes:
        lo, hi = K.interval(ax)

        def half_defect(t: float) -> float:
            boxed = list(intervals)
            boxed[ax - 1] = (lo, t)
            return _positive_volume(w, boxed, spec) - total / 2.0

        f_lo, f_hi = -total / 2.0, total / 2.0
        t_lo, t_hi = lo, hi
        for _ in range(200):
            mid = 0.5 * (t_lo + t_hi)
            f_mid = half_defect(mid)
            if abs(f_mid) <= spec.tol or (t_hi - t_lo) <= 1e-15 * (hi - lo):
                t_lo = t_hi = mid
                break
            if (f_mid > 0) == (f_hi > 0):
                t_hi, f_hi = mid, f_mid
            else:
                t_lo, f_lo = mid, f_mid
        else:
            raise RootFindError(f"half-volume bisection failed on axis {ax}")
        cuts.append(0.5 * (t_lo + t_hi))

    cells = []
    for bits in range(2 ** len(axes)):
        boxed = list(intervals)
        for slot, ax in enumerate(axes):
            lo, hi = K.interval(ax)
            cut = cuts[slot]
            boxed[ax - 1] = (lo, cut) if not (bits >> slot) & 1 else (cut, hi)
        cells.append(_positive_volume(w, boxed, spec))
    spread = max(cells) - min(cells)
    tolerance = 10.0 * spec.tol * max(1.0, total)
    return EqualSplitResult(tuple(cuts), tuple(cells), total, spread,
                            tolerance, spread <= tolerance)


# ---------------------------------------------------------------------------
# reflections and loops

@dataclass(eq=False)
class ReflectionResult:
    point: np.ndarray
    iterations: int
    residual: float


def _fiber_integral(w: WebChart, p: np.ndarray, u: np.ndarray, i: int,
                    spec: QuadratureSpec):
    """Vectorised ``f_i``: density averaged over the scaled cube fibers.

    Returns a function mapping an array of ``x_i``-offsets ``s`` to the
    integral of ``h(p + (t_1 u_1, ..., s, ..., t_m u_m))`` over the unit
    cube in the remaining axes.
    """
    other = [k for k in range(1, w.m + 1) if k != i]

    def fiber(s_arr: np.ndarray) -> np.ndarray:
        def fn(*arrays):
            t_arrays, s_b = arrays[:-1], arrays[-1]
            binding = {w.var(i): p[i - 1] + s_b}
            for k, t in zip(other, t_arrays):
                binding[w.var(k)] = p[k - 1] + t * u[k - 1]
            values = np.asarray(w.density.evaluate(binding), dtype=float)
            return np.broadcast_to(values, np.shape(s_b))

        if not other:
            return np.asarray(fn(s_arr), dtype=float)
        out = integrate_box(fn, [(0.0, 1.0)] * len(other), spec, batch=[s_arr])
        return np.asarray(out, dtype=float)

    return fiber


def reflect(w: WebChart, p, i: int, q,
            spec: QuadratureSpec = QuadratureSpec()) -> ReflectionResult:
    """Volume-preserving reflection of ``q`` through leaf ``i`` at ``p``.

    Solves ``g(u') = int_0^{u_i} f + int_0^{u'} f = 0`` for the
    reflected offset ``u'`` on the opposite side of the leaf; ``g`` is
    strictly increasing, so a geometric bracket expansion from the
    mirrored guess always isolates the root inside the domain when one
    exists.
    """
    if not w.codimension_one:
        raise ValueError("reflections need singleton blocks; "
                         "use refine_to_codim1 first")
    if not 1 <= i <= w.m:
        raise ValueError(f"axis {i} outside 1..{w.m}")
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    for name, point in (("anchor", p), ("point", q)):
        if not w.domain.contains(point, strict=True):
            raise ValueError(f"{name} must be interior to the chart domain")
    u = q - p
    ui = float(u[i - 1])
    if ui == 0.0:
        return ReflectionResult(q.copy(), 0, 0.0)

    fiber = _fiber_integral(w, p, u, i, spec)
    volume = float(integrate_1d(fiber, 0.0, ui, spec))
    scale = max(1.0, abs(volume))
    g_tol = spec.tol * scale
    # Polish to machine level when the requested tolerance allows it;
    # iteration cost is negligible and downstream involution checks rely
    # on residuals far below g_tol.
    g_hard = min(g_tol, 4e-16 * scale)

    def g(t: float) -> float:
        return volume + float(integrate_1d(fiber, 0.0, t, spec))

    def slope(t: float) -> float:
        return float(fiber(np.asarray([t]))[0])

    # Bracket on the opposite side of the leaf, expanding geometrically
    # from the mirrored offset and clamping at the domain wall.
    lo_i, hi_i = w.domain.interval(i)
    edge = (lo_i - p[i - 1]) if ui > 0 else (hi_i - p[i - 1])
    edge *= 1.0 - 1e-12
    t = -ui
    if (t > 0) != (edge > 0) or abs(t) > abs(edge):
        t = edge
    t_near = 0.0  # g(0) = volume, same sign as ui
    g_t = g(t)
    while (g_t > 0) == (volume > 0):
        t_near = t
        if t == edge:
            raise RootFindError(
                "bracket not found inside the chart domain; the point is too "
                "far from the anchor for a volume-matching reflection")
        t *= 1.6
        if abs(t) >= abs(edge):
            t = edge
        g_t = g(t)
    # g changes sign between t (far) and t_near (near zero).
    neg_end, pos_end = (t, t_near) if volume > 0 else (t_near, t)

    x = -ui
    low, high = min(neg_end, pos_end), max(neg_end, pos_end)
    if not (low < x < high):
        x = 0.5 * (low + high)
    iterations = 0
    gx = g(x)
    while iterations < 80:
        iterations += 1
        if gx > 0:
            pos_end = x
        else:
            neg_end = x
        if abs(gx) <= g_hard:
            break
        fx = slope(x)
        step = -gx / fx if fx > 0 else 0.0
        x_new = x + step
        low, high = min(neg_end, pos_end), max(neg_end, pos_end)
        if step == 0.0 or not (low < x_new < high):
            x_new = 0.5 * (low + high)
        if abs(x_new - x) <= 1e-17 * (1.0 + abs(x)):
            x = x_new
            gx = g(x)
            break
        x = x_new
        gx = g(x)
    residual = abs(gx)
    if residual > g_tol:
        raise RootFindError(f"reflection residual {residual:.3e} exceeds "
                            f"tolerance {g_tol:.3e}")
    out = q.copy()
    out[i - 1] = p[i - 1] + x
    return ReflectionResult(out, iterations, residual)


def loop(w: WebChart, p, i: int, j: int, q,
         spec: QuadratureSpec = QuadratureSpec()) -> np.ndarray:
    """Four alternating reflections: through ``i``, ``j``, ``i``, ``j``."""
    if i == j:
        raise ValueError("loop axes must differ")
    point = np.asarray(q, dtype=float)
    for stage, axis in enumerate((i, j, i, j), start=1):
        try:
            point = reflect(w, p, axis, point, spec).point
        except RootFindError as err:
            raise RootFindError(f"loop stage {stage} (axis {axis}): {err}") from err
    return point


def holonomy_defect(w: WebChart, p, i: int, j: int, q,
                    spec: QuadratureSpec = QuadratureSpec()) -> np.ndarray:
    """Displacement ``loop(q) - q``; zero exactly for trivial webs."""
    q = np.asarray(q, dtype=float)
    return loop(w, p, i, j, q, spec) - q


@dataclass(frozen=True)
class LoopCurvatureFit:
    estimate: float
    residual: float
    samples: tuple[tuple[float, float], ...]  # (scale, defect/s^3)


def fit_loop_curvature(w: WebChart, p, i: int, j: int,
                       scales: Sequence[float],
                       spec: QuadratureSpec = QuadratureSpec()
                       ) -> LoopCurvatureFit:
    """Estimate the tensor entry from the cubic term of loop defects.

    The defect of the loop at ``q = p + s(e_i + e_j)`` has leading
    ``i``-component ``kappa * s^3`` (the constant is fixed by expanding
    the volume-equality equation, and the closed-form oracles in the
    tests confirm it); a least-squares constant through ``defect / s^3``
    over the scales recovers ``kappa``.
    """
    scales = [float(s) for s in scales]
    if not scales or any(s <= 0 for s in scales):
        raise ValueError("scales must be positive")
    if any(b >= a for a, b in zip(scales, scales[1:])):
        raise ValueError("scales must be strictly decreasing")
    noise = 4.0 * spec.tol / min(scales) ** 3
    if noise > 0.02:
        raise FitError(f"scales too small: solver noise floor {noise:.2e} "
                       "dominates the cubic defect term")
    p = np.asarray(p, dtype=float)
    samples = []
    for s in scales:
        q = p.copy()
        q[i - 1] += s
        q[j - 1] += s
        defect = holonomy_defect(w, p, i, j, q, spec)
        samples.append((s, float(defect[i - 1]) / s ** 3))
    values = np.asarray([y for _, y in samples])
    estimate = float(np.mean(values))
    residual = float(np.max(np.abs(values - estimate)))
    return LoopCurvatureFit(estimate, residual, tuple(samples))


@dataclass(frozen=True)
class ReflectionTaylorFit:
    axis: int
    alpha_fit: float
    alpha_symbolic: float
    cross_fit: dict[int, float]
    cross_symbolic: dict[int, float]
    max_rel_error: float


def _linear_intercept(xs: Sequence[float], ys: Sequence[float]) -> float:
    slope, intercept = np.polyfit(np.asarray(xs), np.asarray(ys), 1)
    return float(intercept)


def reflection_taylor_check(w: WebChart, p, i: int,
                            spec: QuadratureSpec = QuadratureSpec(),
                            scales: Sequence[float] | None = None
                            ) -> ReflectionTaylorFit:
    """Fit the reflection's expansion coefficients against symbolic ones.

    The reflected coordinate expands as ``-x_i - a_i x_i^2 - a_i^2 x_i^3
    - (1/2) sum_j a_ij x_i^2 x_j`` with ``a_i`` and ``a_ij`` the first
    and mixed-second partials of ``log h`` at the anchor (the half on
    the cross term is fixed by expanding the volume-equality equation).
    Symmetric differences over mirrored offsets isolate each coefficient
    before a Richardson-style intercept fit, so lower-order terms cancel
    exactly instead of contaminating the extraction.
    """
    if not w.codimension_one:
        raise ValueError("reflections need singleton blocks; "
                         "use refine_to_codim1 first")
    p = np.asarray(p, dtype=float)
    if scales is None:
        margin = min(min(p[k - 1] - w.domain.interval(k)[0],
                         w.domain.interval(k)[1] - p[k - 1])
                     for k in range(1, w.m + 1))
        base = min(0.1, 0.4 * margin)
        scales = [base, base / 2, base / 4, base / 8]
    scales = [float(s) for s in scales]
    if spec.tol / min(scales) ** 2 > 0.02:
        raise FitError("scales too small: solver noise dominates the "
                       "quadratic coefficient")
    binding = w.binding(p)
    alpha_sym = float(_dlog_h(w, i).evaluate(binding))

    def reflected_offset(q: np.ndarray) -> float:
        return float(reflect(w, p, i, q, spec).point[i - 1] - p[i - 1])

    def offset_at(di: float, j: int | None = None, dj: float = 0.0) -> float:
        q = p.copy()
        q[i - 1] += di
        if j is not None:
            q[j - 1] += dj
        return reflected_offset(q)

    # z(s) + z(-s) = -2 a_i s^2 + O(s^4): even in s, so fit against s^2.
    a_vals = [-(offset_at(s) + offset_at(-s)) / (2.0 * s ** 2) for s in scales]
    alpha_fit = _linear_intercept([s ** 2 for s in scales], a_vals)

    cross_fit: dict[int, float] = {}
    cross_sym: dict[int, float] = {}
    for j in range(1, w.m + 1):
        if j == i:
            continue
        cross_sym[j] = float(_d2log_h(w, i, j).evaluate(binding))
        # z(s, -s) - z(s, s) = a_ij s^3 + O(s^4): the pure-i terms cancel.
        b_vals = [(offset_at(s, j, -s) - offset_at(s, j, s)) / s ** 3
                  for s in scales]
        cross_fit[j] = _linear_intercept(scales, b_vals)
    errors = [abs(alpha_fit - alpha_sym) / max(1.0, abs(alpha_sym))]
    for j in cross_fit:
        errors.append(abs(cross_fit[j] - cross_sym[j])
                      / max(1.0, abs(cross_sym[j])))
    return ReflectionTaylorFit(i, alpha_fit, alpha_sym, cross_fit, cross_sym,
                               float(max(errors)))
