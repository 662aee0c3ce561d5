"""Figure rendering for leaves, geodesics, holonomy orbits and grids.

All functions draw onto a supplied axes object and are wired together by
the CLI's ``plot`` command, which saves SVG files.
"""

from __future__ import annotations

import numpy as np

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .measure import reflect  # noqa: E402
from .normalform import DensityGrid  # noqa: E402
from .quadrature import QuadratureSpec  # noqa: E402
from .web import WebChart, integrate_geodesic, refine_to_codim1  # noqa: E402

__all__ = ["new_figure", "save_figure", "draw_leaves", "draw_geodesics",
           "draw_orbit", "draw_density_heatmap"]


def new_figure():
    fig, ax = plt.subplots(figsize=(6.0, 6.0))
    return fig, ax


def save_figure(fig, path: str):
    fig.savefig(path, bbox_inches="tight")
    plt.close(fig)


def _require_planar(w: WebChart, what: str):
    if w.m != 2:
        raise ValueError(f"{what} plots are only drawn for 2-dimensional charts")


def draw_leaves(w: WebChart, ax, per_axis: int = 9):
    """Axis-aligned leaves of the two coordinate foliations."""
    _require_planar(w, "leaf")
    (lo1, hi1), (lo2, hi2) = w.domain.interval(1), w.domain.interval(2)
    for x in np.linspace(lo1, hi1, per_axis):
        ax.plot([x, x], [lo2, hi2], color="tab:blue", lw=0.8, alpha=0.7)
    for y in np.linspace(lo2, hi2, per_axis):
        ax.plot([lo1, hi1], [y, y], color="tab:orange", lw=0.8, alpha=0.7)
    ax.set_xlabel(w.variables[0])
    ax.set_ylabel(w.variables[1])
    ax.set_title("web leaves")


def draw_geodesics(w: WebChart, ax, count: int = 12, t_end: float = 1.0,
                   steps: int = 1000, speed: float = 1.0):
    """Fan of geodesics of the canonical connection from the chart center."""
    _require_planar(w, "geodesic")
    chart = refine_to_codim1(w)
    center = chart.domain.center
    for angle in np.linspace(0.0, 2.0 * np.pi, count, endpoint=False):
        v = speed * np.array([np.cos(angle), np.sin(angle)])
        path = integrate_geodesic(chart, center, v, t_end, steps)
        ax.plot(path.points[:, 0], path.points[:, 1], lw=1.0)
    ax.plot([center[0]], [center[1]], "k.", ms=6)
    ax.set_xlabel(w.variables[0])
    ax.set_ylabel(w.variables[1])
    ax.set_title("geodesics of the web connection")


def draw_orbit(w: WebChart, ax, p, q, i: int = 1, j: int = 2,
               spec: QuadratureSpec | None = None):
    """Polyline through the four reflection legs of one holonomy loop."""
    _require_planar(w, "orbit")
    spec = spec or QuadratureSpec()
    chart = refine_to_codim1(w)
    p = np.asarray(p, dtype=float)
    points = [np.asarray(q, dtype=float)]
    for axis in (i, j, i, j):
        points.append(reflect(chart, p, axis, points[-1], spec).point)
    orbit = np.asarray(points)
    draw_leaves(chart, ax, per_axis=5)
    ax.plot(orbit[:, 0], orbit[:, 1], "-o", color="tab:red", lw=1.5, ms=4)
    ax.plot([p[0]], [p[1]], "k*", ms=10)
    gap = float(np.linalg.norm(orbit[-1] - orbit[0]))
    ax.set_title(f"holonomy orbit, closure gap {gap:.2e}")


def draw_density_heatmap(grid: DensityGrid, ax):
    """Reconstructed density over a planar grid."""
    if len(grid.axes) != 2:
        raise ValueError("heatmaps are only drawn for 2-dimensional grids")
    mesh = ax.pcolormesh(grid.axes[0], grid.axes[1], grid.values.T,
                         shading="nearest")
    ax.figure.colorbar(mesh, ax=ax, label="density")
    ax.set_xlabel(grid.variables[0])
    ax.set_ylabel(grid.variables[1])
    ax.set_title("reconstructed density")
