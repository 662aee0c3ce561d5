"""Command-line interface.

Every command loads a JSON web spec (or tensor/boundary files), runs the
corresponding analysis and emits a schema-validated JSON report plus
optional CSV tables and SVG figures.  Exit codes are a stable contract:
0 success or affirmative verdict, 1 negative verdict, 2 input error,
3 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import os
import sys

import numpy as np

from . import measure, normalform, plots, web
from .expr import EvalDomainError, ParseError
from .measure import FitError, RootFindError
from .normalform import ReconstructionError, axes_including_zero
from .quadrature import QuadratureError, QuadratureSpec
from .region import Region
from .relativity import builtin_spacetime, slicing_report, volume_density
from .webspec import (SpecFileError, load_boundary_file, load_tensor_file,
                      load_webspec, validate_report, write_json_atomic)

EXIT_OK = 0
EXIT_NEGATIVE = 1
EXIT_INPUT = 2
EXIT_NUMERIC = 3

DEFAULT_TOL = 1e-9
DEFAULT_QUAD_TOL = 1e-10


def _resolve_tolerances(args, config: dict) -> tuple[float, float]:
    """Precedence: flag, then DIVWEB_TOL, then spec config, then default."""
    tol = getattr(args, "tol", None)
    if tol is None:
        env = os.environ.get("DIVWEB_TOL")
        if env is not None:
            try:
                tol = float(env)
            except ValueError:
                raise SpecFileError(f"DIVWEB_TOL is not a number: {env!r}")
    if tol is None:
        tol = config.get("tol", DEFAULT_TOL)
    quad = getattr(args, "quad_tol", None)
    if quad is None:
        quad = config.get("quad_tol", DEFAULT_QUAD_TOL)
    return float(tol), float(quad)


def _report(command: str, inputs: dict, tol: float, quad_tol: float,
            results: dict, output: str | None) -> dict:
    document = {
        "schema_version": 1,
        "command": command,
        "inputs": inputs,
        "tolerances": {"tol": tol, "quad_tol": quad_tol},
        "results": results,
    }
    validate_report(document)
    write_json_atomic(document, output)
    return document


def _parse_point(values, m: int, what: str = "point") -> np.ndarray:
    point = np.asarray([float(v) for v in values], dtype=float)
    if point.shape != (m,):
        raise SpecFileError(f"{what} needs {m} coordinates, got {len(values)}")
    return point


def _write_csv(path: str, header: list[str], rows):
    tmp = f"{path}.tmp-{os.getpid()}"
    with open(tmp, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        writer.writerows(rows)
    os.replace(tmp, path)


def _entry_samples(chart, tensor, per_axis: int):
    axes = [np.linspace(*chart.domain.interval(k), per_axis)
            for k in range(1, chart.m + 1)]
    mesh = [g.ravel() for g in np.meshgrid(*axes, indexing="ij")]
    binding = {name: arr for name, arr in zip(chart.variables, mesh)}
    sampled = {}
    for (k, l) in tensor.cross_block_pairs():
        vals = np.asarray(tensor.entry(k, l).evaluate(binding), dtype=float)
        sampled[(k, l)] = np.broadcast_to(vals, mesh[0].shape)
    return axes, mesh, sampled


# ---------------------------------------------------------------------------
# commands

def cmd_curvature(args) -> int:
    spec = load_webspec(args.spec)
    tol, quad_tol = _resolve_tolerances(args, spec.config)
    chart = spec.chart
    tensor = web.nonuniformity_tensor(chart)
    results: dict = {
        "entries": {f"{k},{l}": str(tensor.entry(k, l))
                    for (k, l) in tensor.cross_block_pairs()},
    }
    if args.at is not None:
        point = _parse_point(args.at, chart.m, "--at")
        binding = chart.binding(point)
        results["at"] = {
            "point": point.tolist(),
            "values": {f"{k},{l}": {"value": float(tensor.entry(k, l)
                                                   .evaluate(binding)),
                                    "tolerance": tol}
                       for (k, l) in tensor.cross_block_pairs()},
        }
    if args.grid is not None or args.csv is not None:
        per_axis = args.grid or 9
        axes, mesh, sampled = _entry_samples(chart, tensor, per_axis)
        results["grid"] = {
            "per_axis": per_axis,
            "axes": [ax.tolist() for ax in axes],
            "values": {f"{k},{l}": vals.tolist()
                       for (k, l), vals in sampled.items()},
            "tolerance": tol,
        }
        if args.csv is not None:
            header = list(chart.variables) + ["i", "j", "kappa"]
            rows = []
            for (k, l), vals in sampled.items():
                for idx in range(len(vals)):
                    rows.append([mesh[d][idx] for d in range(chart.m)]
                                + [k, l, vals[idx]])
            _write_csv(args.csv, header, rows)
            results["csv"] = args.csv
    _report("curvature", {"spec": args.spec}, tol, quad_tol, results,
            args.output)
    return EXIT_OK


def cmd_trivial(args) -> int:
    spec = load_webspec(args.spec)
    tol, quad_tol = _resolve_tolerances(args, spec.config)
    chart = spec.chart
    verdict = web.is_locally_trivial(chart, tol=tol)
    results: dict = {
        "trivial": verdict.trivial,
        "symbolic": verdict.symbolic,
        "max_abs_entry": {"value": verdict.max_abs, "tolerance": tol},
        "entry_kinds": {f"{k},{l}": kind
                        for (k, l), kind in verdict.entry_kinds.items()},
    }
    if not verdict.trivial:
        results["witness"] = {
            "axes": list(verdict.witness_axes),
            "point": verdict.witness_point,
        }
    else:
        quad = QuadratureSpec(tol=quad_tol)
        phi = web.trivializing_map(chart, quad, tol=tol)
        center = chart.domain.center
        rows = []
        for frac in (-0.3, -0.15, 0.0, 0.15, 0.3):
            point = center + frac * (np.asarray(chart.domain.b) - center)
            image = phi(point)
            rows.append({
                "point": point.tolist(),
                "image": image.tolist(),
                "jacobian_det": phi.jacobian_det(point),
                "density": chart.density_at(point),
                "tolerance": quad_tol,
            })
        results["trivializing_map_samples"] = rows
    _report("trivial", {"spec": args.spec}, tol, quad_tol, results,
            args.output)
    return EXIT_OK if verdict.trivial else EXIT_NEGATIVE


def cmd_holonomy(args) -> int:
    spec = load_webspec(args.spec)
    tol, quad_tol = _resolve_tolerances(args, spec.config)
    chart = web.refine_to_codim1(spec.chart)
    quad = QuadratureSpec(tol=quad_tol)
    anchor = _parse_point(args.anchor, chart.m, "--anchor")
    i, j = args.axes
    if args.point is None and args.fit_scales is None:
        raise SpecFileError("holonomy needs --point and/or --fit-scales")
    inputs = {"spec": args.spec, "anchor": anchor.tolist(), "axes": [i, j]}
    results: dict = {}
    if args.point is not None:
        q = _parse_point(args.point, chart.m, "--point")
        image = measure.loop(chart, anchor, i, j, q, quad)
        defect = image - q
        results["loop"] = {
            "point": q.tolist(),
            "image": image.tolist(),
            "defect": defect.tolist(),
            "tolerance": 4.0 * quad_tol,
        }
    if args.fit_scales is not None:
        fit = measure.fit_loop_curvature(chart, anchor, i, j,
                                         args.fit_scales, quad)
        kappa = web.nonuniformity_tensor(chart).entry(i, j)
        results["curvature_fit"] = {
            "estimate": fit.estimate,
            "fit_residual": fit.residual,
            "symbolic_value": float(kappa.evaluate(chart.binding(anchor))),
            "scales": [s for s, _ in fit.samples],
        }
    _report("holonomy", inputs, tol, quad_tol, results, args.output)
    return EXIT_OK


def cmd_reconstruct(args) -> int:
    tensor, domain = load_tensor_file(args.tensor)
    boundary = load_boundary_file(args.boundary, tensor.variables,
                                  tensor.blocks)
    tol, quad_tol = _resolve_tolerances(args, {})
    quad = QuadratureSpec(tol=quad_tol)
    axes = axes_including_zero([domain.interval(k)[0] for k in
                                range(1, tensor.m + 1)],
                               [domain.interval(k)[1] for k in
                                range(1, tensor.m + 1)], args.grid)
    grid = normalform.reconstruct_density(tensor, boundary, axes, quad)
    results = {
        "grid_shape": list(grid.values.shape),
        "min_density": float(grid.values.min()),
        "max_density": float(grid.values.max()),
        "quadrature_tolerance": quad_tol,
    }
    if args.csv is not None:
        header = list(tensor.variables) + ["density"]
        rows = []
        for index in itertools.product(*(range(len(ax)) for ax in grid.axes)):
            coords = [grid.axes[d][idx] for d, idx in enumerate(index)]
            rows.append(coords + [grid.values[index]])
        _write_csv(args.csv, header, rows)
        results["csv"] = args.csv
    if args.figure is not None:
        fig, ax = plots.new_figure()
        plots.draw_density_heatmap(grid, ax)
        plots.save_figure(fig, args.figure)
        results["figure"] = args.figure
    _report("reconstruct", {"tensor": args.tensor, "boundary": args.boundary,
                            "grid": args.grid},
            tol, quad_tol, results, args.output)
    return EXIT_OK


def cmd_normalize(args) -> int:
    spec = load_webspec(args.spec)
    tol, quad_tol = _resolve_tolerances(args, spec.config)
    chart = spec.chart
    quad = QuadratureSpec(tol=quad_tol)
    normalized = normalform.normalize_chart(chart, quad)
    center = chart.domain.center
    samples = []
    for frac in (-0.4, -0.2, 0.0, 0.2, 0.4):
        point = center + frac * (np.asarray(chart.domain.b) - center)
        samples.append({
            "point": point.tolist(),
            "image": normalized.forward(point).tolist(),
            "transformed_density": normalized.density_at_source(point),
            "tolerance": quad_tol,
        })
    results = {
        "base_density": normalized.base,
        "cross_defect": {"value": normalized.cross_defect(),
                         "tolerance": tol},
        "samples": samples,
    }
    if args.at is not None:
        point = _parse_point(args.at, chart.m, "--at")
        results["at"] = {
            "point": point.tolist(),
            "image": normalized.forward(point).tolist(),
            "transformed_density": normalized.density_at_source(point),
            "tolerance": quad_tol,
        }
    _report("normalize", {"spec": args.spec}, tol, quad_tol, results,
            args.output)
    return EXIT_OK


def cmd_invariants(args) -> int:
    spec = load_webspec(args.spec)
    tol, quad_tol = _resolve_tolerances(args, spec.config)
    chart = spec.chart
    point = (np.zeros(chart.m) if args.at is None
             else _parse_point(args.at, chart.m, "--at"))
    inv = normalform.planar_invariants(chart, point)
    results: dict = {
        "point": point.tolist(),
        "kappa0": {"value": inv.kappa0, "tolerance": tol},
        "a": {"value": inv.a, "tolerance": tol},
        "generic": inv.generic,
        "factors": [inv.factor_x, inv.factor_y],
    }
    try:
        rep = normalform.canonical_form_report(chart)
        results["canonical_form"] = {
            "kappa0": rep.kappa0,
            "kappa0_canonical": rep.kappa0_canonical,
            "a": rep.a,
            "rotations": rep.rotations,
            "scale_c": rep.scale_c,
            "jet_ok": rep.jet_ok,
            "jet_error": rep.jet_error,
            "remainder_ok": rep.remainder_ok,
            "remainder_ratios": list(rep.remainder_ratios),
        }
    except ValueError as err:
        results["canonical_form"] = {"rejected": str(err)}
    _report("invariants", {"spec": args.spec}, tol, quad_tol, results,
            args.output)
    return EXIT_OK


def cmd_volumes(args) -> int:
    spec = load_webspec(args.spec)
    tol, quad_tol = _resolve_tolerances(args, spec.config)
    chart = spec.chart
    quad = QuadratureSpec(tol=quad_tol)
    m = chart.m
    if len(args.region) != 2 * m:
        raise SpecFileError(f"--region needs {2 * m} numbers "
                            f"(min then max corner), got {len(args.region)}")
    region = Region(tuple(args.region[:m]), tuple(args.region[m:]))
    signed = measure.region_volume(chart, region, quad)
    results: dict = {
        "signed_volume": {"value": signed, "tolerance": quad_tol},
        "abs_volume": {"value": abs(signed), "tolerance": quad_tol},
        "orientation": region.orientation,
        "diameter": region.diameter,
    }
    if args.at is not None:
        point = _parse_point(args.at, m, "--at")
        i, j = args.axes
        report = measure.check_product_condition(chart, region, point, i, j,
                                                 quad)
        results["subdivision"] = {
            "a": report.a, "b": report.b, "c": report.c, "d": report.d,
            "bd_minus_ac": report.bd_minus_ac,
            "kappa": report.kappa,
            "sign_consistent": report.consistent,
            "quadrature_noise": report.quadrature_noise,
        }
        split = measure.equal_split(web.refine_to_codim1(chart), region,
                                    [i, j], quad)
        results["equal_split"] = {
            "cuts": list(split.cuts),
            "cell_volumes": list(split.cell_volumes),
            "spread": split.spread,
            "tolerance": split.tolerance,
            "ok": split.ok,
        }
    _report("volumes", {"spec": args.spec, "region": list(args.region)},
            tol, quad_tol, results, args.output)
    return EXIT_OK


def cmd_plot(args) -> int:
    spec = load_webspec(args.spec)
    tol, quad_tol = _resolve_tolerances(args, spec.config)
    chart = spec.chart
    fig, ax = plots.new_figure()
    if args.what == "leaves":
        plots.draw_leaves(chart, ax, per_axis=args.count or 9)
    elif args.what == "geodesics":
        plots.draw_geodesics(chart, ax, count=args.count or 12,
                             t_end=args.t_end, steps=args.steps,
                             speed=args.speed)
    else:  # orbit
        if args.anchor is None or args.point is None:
            raise SpecFileError("orbit plots need --anchor and --point")
        anchor = _parse_point(args.anchor, chart.m, "--anchor")
        point = _parse_point(args.point, chart.m, "--point")
        i, j = args.axes
        plots.draw_orbit(chart, ax, anchor, point, i, j,
                         QuadratureSpec(tol=quad_tol))
    plots.save_figure(fig, args.output)
    _report("plot", {"spec": args.spec, "what": args.what}, tol, quad_tol,
            {"figure": args.output}, args.report)
    return EXIT_OK


def cmd_spacetime(args) -> int:
    params = {}
    for item in args.param or []:
        if "=" not in item:
            raise SpecFileError(f"--param expects name=value, got {item!r}")
        key, _, value = item.partition("=")
        try:
            params[key] = float(value)
        except ValueError:
            raise SpecFileError(f"--param {key} is not a number: {value!r}")
    tol, quad_tol = _resolve_tolerances(args, {})
    metric = builtin_spacetime(args.name, params)
    report = slicing_report(metric, tol=tol)
    results: dict = {
        "density": str(volume_density(metric)),
        "kappa_entries": {f"{k},{l}": str(e)
                          for (k, l), e in report.kappa_entries.items()},
        "trivial": report.verdict.trivial,
        "symbolic": report.verdict.symbolic,
        "max_abs_entry": {"value": report.verdict.max_abs, "tolerance": tol},
        "geodesic_slicing": report.geodesic_slicing,
        "constant_density_reachable": report.constant_density_reachable,
    }
    if args.at is not None:
        point = _parse_point(args.at, 4, "--at")
        binding = {name: float(x)
                   for name, x in zip(metric.coordinates, point)}
        results["at"] = {
            "point": point.tolist(),
            "kappa_values": {f"{k},{l}": {"value": float(e.evaluate(binding)),
                                          "tolerance": tol}
                             for (k, l), e in report.kappa_entries.items()},
        }
    _report("spacetime", {"name": args.name, "params": params}, tol, quad_tol,
            results, args.output)
    return EXIT_OK


# ---------------------------------------------------------------------------
# wiring

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="divweb",
        description="Diagnostics for divergence-free webs in adapted "
                    "coordinates: curvature, triviality, holonomy, density "
                    "reconstruction, normal forms and 3+1 slicing analysis.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, spec=True):
        if spec:
            p.add_argument("spec", help="web spec JSON file")
        p.add_argument("-o", "--output", default=None,
                       help="write the JSON report here (default: stdout)")
        p.add_argument("--tol", type=float, default=None,
                       help="zero-test tolerance (overrides DIVWEB_TOL and "
                            "the spec config)")
        p.add_argument("--quad-tol", type=float, default=None,
                       help="quadrature tolerance")

    p = sub.add_parser("curvature", help="nonuniformity tensor entries")
    common(p)
    p.add_argument("--at", nargs="+", default=None, help="evaluation point")
    p.add_argument("--grid", type=int, default=None,
                   help="sample entries on an N-per-axis grid")
    p.add_argument("--csv", default=None, help="write grid samples as CSV")
    p.set_defaults(handler=cmd_curvature)

    p = sub.add_parser("trivial", help="local triviality verdict "
                                       "(exit 0 trivial, 1 nontrivial)")
    common(p)
    p.set_defaults(handler=cmd_trivial)

    p = sub.add_parser("holonomy", help="reflection loops and curvature fits")
    common(p)
    p.add_argument("--anchor", nargs="+", required=True)
    p.add_argument("--axes", nargs=2, type=int, default=(1, 2),
                   metavar=("I", "J"))
    p.add_argument("--point", nargs="+", default=None,
                   help="run one loop through this point")
    p.add_argument("--fit-scales", nargs="+", type=float, default=None,
                   help="fit the tensor entry from defects at these scales")
    p.set_defaults(handler=cmd_holonomy)

    p = sub.add_parser("reconstruct",
                       help="rebuild a density from tensor + boundary files")
    p.add_argument("tensor", help="tensor JSON file")
    p.add_argument("boundary", help="boundary JSON file")
    common(p, spec=False)
    p.add_argument("--grid", type=int, default=17, help="points per axis")
    p.add_argument("--csv", default=None, help="write the grid as CSV")
    p.add_argument("--figure", default=None,
                   help="render a heatmap figure (2-dimensional grids)")
    p.set_defaults(handler=cmd_reconstruct)

    p = sub.add_parser("normalize",
                       help="transform so the density is 1 on the axis cross")
    common(p)
    p.add_argument("--at", nargs="+", default=None,
                   help="also report the transform at this point")
    p.set_defaults(handler=cmd_normalize)

    p = sub.add_parser("invariants",
                       help="planar scalar invariants and canonical form")
    common(p)
    p.add_argument("--at", nargs="+", default=None)
    p.set_defaults(handler=cmd_invariants)

    p = sub.add_parser("volumes", help="region volumes and the box sign test")
    common(p)
    p.add_argument("--region", nargs="+", type=float, required=True,
                   help="min corner then max corner")
    p.add_argument("--at", nargs="+", default=None,
                   help="subdivision point for the four-volume test")
    p.add_argument("--axes", nargs=2, type=int, default=(1, 2),
                   metavar=("I", "J"))
    p.set_defaults(handler=cmd_volumes)

    p = sub.add_parser("plot", help="render an SVG figure")
    p.add_argument("spec")
    p.add_argument("--what", choices=("leaves", "geodesics", "orbit"),
                   required=True)
    p.add_argument("-o", "--output", default="divweb-plot.svg",
                   help="figure path (suffix selects the format)")
    p.add_argument("--report", default=None,
                   help="also write a JSON report here")
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--quad-tol", type=float, default=None)
    p.add_argument("--anchor", nargs="+", default=None)
    p.add_argument("--point", nargs="+", default=None)
    p.add_argument("--axes", nargs=2, type=int, default=(1, 2))
    p.add_argument("--count", type=int, default=None,
                   help="leaves per axis / geodesic count")
    p.add_argument("--t-end", type=float, default=1.0)
    p.add_argument("--steps", type=int, default=1000)
    p.add_argument("--speed", type=float, default=1.0)
    p.set_defaults(handler=cmd_plot)

    p = sub.add_parser("spacetime",
                       help="slicing analysis of a built-in metric")
    p.add_argument("name", help="minkowski, schwarzschild_radial or lemaitre")
    common(p, spec=False)
    p.add_argument("--param", action="append", default=None,
                   metavar="NAME=VALUE")
    p.add_argument("--at", nargs="+", default=None,
                   help="evaluate tensor entries at (t, x1, x2, x3)")
    p.set_defaults(handler=cmd_spacetime)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except (SpecFileError, ParseError, ValueError) as err:
        print(f"divweb: input error: {err}", file=sys.stderr)
        return EXIT_INPUT
    except (QuadratureError, RootFindError, FitError, ReconstructionError,
            EvalDomainError) as err:
        print(f"divweb: numeric failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC


def entrypoint():
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
