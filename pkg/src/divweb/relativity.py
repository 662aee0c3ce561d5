"""Webs induced by 3+1 split Lorentzian metrics.

A normal (zero-shift) split metric ``g = -alpha^2 dt^2 + gamma`` turns
the time foliation and its orthogonal complement into a 2-web on the
4-dimensional chart whose density is ``alpha * sqrt(det gamma)``.  The
slicing analysis then reduces to the web machinery: the cross-block
entries of the nonuniformity tensor are the mixed (t, x_k) second
partials of the log density, and their vanishing is exactly the
condition under which coordinates with constant volume density exist.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .expr import (Const, Expr, Sqrt, differentiate, grid_bindings,
                   parse_expr, simplify)
from .region import Region
from .web import (TrivialityVerdict, WebChart, is_locally_trivial,
                  nonuniformity_tensor)

__all__ = [
    "SplitMetric", "SlicingReport", "volume_density", "web_from_metric",
    "slicing_report", "builtin_spacetime", "BUILTIN_SPACETIMES",
]


@dataclass(frozen=True)
class SplitMetric:
    """Lapse and spatial metric of a 3+1 split over (t, x1, x2, x3).

    ``shift`` entries, when present, must be transformed away upstream
    before a web can be built (only the normal form is adapted).
    """

    coordinates: tuple[str, str, str, str]
    lapse: Expr
    gamma: tuple[tuple[Expr, Expr, Expr], ...]
    domain: Region
    shift: tuple[Expr, Expr, Expr] | None = None

    def __post_init__(self):
        if len(self.coordinates) != 4 or len(set(self.coordinates)) != 4:
            raise ValueError("four distinct coordinate names are required")
        if self.domain.dim != 4:
            raise ValueError("domain must be a 4-dimensional box")
        if len(self.gamma) != 3 or any(len(row) != 3 for row in self.gamma):
            raise ValueError("spatial metric must be a 3x3 matrix")
        for i in range(3):
            for j in range(i + 1, 3):
                if self.gamma[i][j] != self.gamma[j][i]:
                    raise ValueError("spatial metric must be symmetric "
                                     f"(entries ({i+1},{j+1}) differ)")
        self._check_signature()

    def _check_signature(self, per_axis: int = 5):
        bounds = {name: self.domain.interval(k + 1)
                  for k, name in enumerate(self.coordinates)}
        binding = grid_bindings(bounds, per_axis)
        size = len(next(iter(binding.values())))

        def sample(e: Expr) -> np.ndarray:
            vals = np.asarray(e.evaluate(binding), dtype=float)
            return np.broadcast_to(vals, (size,))

        if np.min(sample(self.lapse)) <= 0.0:
            raise ValueError("lapse must be positive on the domain")
        g = [[sample(self.gamma[i][j]) for j in range(3)] for i in range(3)]
        minor1 = g[0][0]
        minor2 = g[0][0] * g[1][1] - g[0][1] ** 2
        minor3 = (g[0][0] * (g[1][1] * g[2][2] - g[1][2] ** 2)
                  - g[0][1] * (g[0][1] * g[2][2] - g[1][2] * g[0][2])
                  + g[0][2] * (g[0][1] * g[1][2] - g[1][1] * g[0][2]))
        for k, minor in enumerate((minor1, minor2, minor3), start=1):
            if np.min(minor) <= 0.0:
                raise ValueError("spatial metric is not positive-definite on "
                                 f"the domain (leading minor {k})")

    def has_shift(self) -> bool:
        if self.shift is None:
            return False
        return any(not (isinstance(simplify(s), Const)
                        and simplify(s).value == 0.0) for s in self.shift)


def _det3(g) -> Expr:
    def mul(a, b):
        return simplify(a * b)

    cof0 = g[1][1] * g[2][2] - g[1][2] * g[2][1]
    cof1 = g[1][0] * g[2][2] - g[1][2] * g[2][0]
    cof2 = g[1][0] * g[2][1] - g[1][1] * g[2][0]
    return simplify(g[0][0] * cof0 - g[0][1] * cof1 + g[0][2] * cof2)


def volume_density(gm: SplitMetric) -> Expr:
    """Density of the spacetime volume element: lapse times sqrt(det gamma)."""
    return simplify(gm.lapse * Sqrt(_det3(gm.gamma)))


def web_from_metric(gm: SplitMetric, domain: Region | None = None) -> WebChart:
    """The 2-web of time slices and normal lines, as a 4-dimensional chart.

    Blocks are ({t}, {x1, x2, x3}); metrics with shift terms are
    rejected (they must enter through a zero-shift chart).
    """
    if gm.has_shift():
        raise ValueError("metric has shift terms: the coordinates are not "
                         "adapted to the slicing web; transform to a "
                         "zero-shift (normal) chart upstream")
    return WebChart(gm.coordinates, ((1,), (2, 3, 4)), volume_density(gm),
                    domain or gm.domain)


@dataclass(frozen=True)
class SlicingReport:
    density: Expr
    kappa_entries: dict[tuple[int, int], Expr]   # (1, k) for spatial axes k
    verdict: TrivialityVerdict
    geodesic_slicing: bool
    constant_density_reachable: bool


def slicing_report(gm: SplitMetric, domain: Region | None = None,
                   tol: float = 1e-9) -> SlicingReport:
    """Nonuniformity of the slicing web plus the two headline flags.

    ``geodesic_slicing`` holds when the lapse has identically vanishing
    spatial gradient; ``constant_density_reachable`` (coordinates in
    which the volume density is constant, removing the metric
    determinant from the conservation laws) is the triviality verdict.
    """
    w = web_from_metric(gm, domain)
    tensor = nonuniformity_tensor(w)
    entries = {(1, k): tensor.entry(1, k) for k in (2, 3, 4)}
    verdict = is_locally_trivial(w, tol=tol)
    geodesic = True
    for name in gm.coordinates[1:]:
        d = simplify(differentiate(gm.lapse, name))
        if not (isinstance(d, Const) and d.value == 0.0):
            geodesic = False
            break
    return SlicingReport(w.density, entries, verdict, geodesic, verdict.trivial)


def _minkowski(_: dict) -> SplitMetric:
    coords = ("t", "x", "y", "z")
    one = Const(1.0)
    zero = Const(0.0)
    gamma = ((one, zero, zero), (zero, one, zero), (zero, zero, one))
    return SplitMetric(coords, one, gamma,
                       Region((-1.0, -1.0, -1.0, -1.0), (1.0, 1.0, 1.0, 1.0)))


def _schwarzschild_radial(params: dict) -> SplitMetric:
    m = _positive_mass(params)
    coords = ("t", "r", "theta", "phi")
    lapse = parse_expr(f"sqrt(1 - {2 * m!r}/r)", coords)
    zero = Const(0.0)
    g_rr = parse_expr(f"1/(1 - {2 * m!r}/r)", coords)
    g_thth = parse_expr("r^2", coords)
    g_phph = parse_expr("r^2*sin(theta)^2", coords)
    gamma = ((g_rr, zero, zero), (zero, g_thth, zero), (zero, zero, g_phph))
    domain = Region((-1.0, 2.5 * m, 0.3, -3.1), (1.0, 10.0 * m, 2.8416, 3.1))
    return SplitMetric(coords, lapse, gamma, domain)


def _lemaitre(params: dict) -> SplitMetric:
    m = _positive_mass(params)
    coords = ("T", "R", "theta", "phi")
    root = math.sqrt(2.0 * m)
    r_text = f"((1.5*(R - {root!r}*T))^(2/3))"
    zero = Const(0.0)
    g_rr = parse_expr(f"1/{r_text}", coords)
    g_thth = parse_expr(f"{r_text}^2", coords)
    g_phph = parse_expr(f"{r_text}^2*sin(theta)^2", coords)
    gamma = ((g_rr, zero, zero), (zero, g_thth, zero), (zero, zero, g_phph))
    # keep R - sqrt(2m) T >= 1 away from the r = 0 singularity
    r_lo = 0.5 * root + 1.0
    domain = Region((-0.5, r_lo, 0.3, -3.1), (0.5, r_lo + 2.5, 2.8416, 3.1))
    return SplitMetric(coords, Const(1.0), gamma, domain)


def _positive_mass(params: dict) -> float:
    m = float(params.get("m", 1.0))
    if m <= 0:
        raise ValueError("mass parameter m must be positive")
    return m


BUILTIN_SPACETIMES = {
    "minkowski": _minkowski,
    "schwarzschild_radial": _schwarzschild_radial,
    "lemaitre": _lemaitre,
}


def builtin_spacetime(name: str, params: dict | None = None) -> SplitMetric:
    """Construct one of the shipped exact metrics by name."""
    try:
        builder = BUILTIN_SPACETIMES[name]
    except KeyError:
        known = ", ".join(sorted(BUILTIN_SPACETIMES))
        raise ValueError(f"unknown spacetime '{name}' (known: {known})") from None
    return builder(dict(params or {}))
