"""Acceptance suite: one test per criterion, printed pass/fail lines.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines and timings.  Tolerances are pinned here and nowhere else.
"""

import math
import random
import time
from contextlib import contextmanager

import numpy as np
import pytest

from divweb.expr import (EvalDomainError, differentiate, evaluate,
                         is_identically_zero)
from divweb.measure import (Region, check_product_condition, equal_split,
                            fit_loop_curvature, holonomy_defect, loop, reflect,
                            reflection_taylor_check)
from divweb.normalform import (BoundaryData, axes_including_zero,
                               normalize_chart, planar_invariants,
                               reconstruct_density, roundtrip_error)
from divweb.quadrature import QuadratureSpec
from divweb.relativity import builtin_spacetime, slicing_report
from divweb.web import (WebChart, integrate_geodesic, nonuniformity_tensor,
                        ricci_offdiag)

from test_expr import _random_tree
from test_measure import loop_oracle, reflect_x_oracle

QUAD = QuadratureSpec()


@contextmanager
def criterion(number, label, limit_seconds):
    start = time.perf_counter()
    try:
        yield
    except BaseException:
        elapsed = time.perf_counter() - start
        print(f"criterion {number:2d} FAIL  ({elapsed:6.2f}s, "
              f"limit {limit_seconds:5.1f}s)  {label}")
        raise
    elapsed = time.perf_counter() - start
    print(f"criterion {number:2d} PASS  ({elapsed:6.2f}s, "
          f"limit {limit_seconds:5.1f}s)  {label}")
    assert elapsed < limit_seconds, f"runtime {elapsed:.2f}s over budget"


def chart(text, variables=("x", "y"), blocks=((1,), (2,)), lo=-0.9, hi=0.9):
    m = len(variables)
    return WebChart.from_text(text, variables, blocks, (lo,) * m, (hi,) * m)


def off_axis_grid(extent=0.3, n=9):
    pts = np.linspace(-extent, extent, n)
    return [(x, y) for x in pts for y in pts if x != 0.0 and y != 0.0]


def test_criterion_1_curvature_exactness():
    with criterion(1, "tensor entries match closed forms to 1e-10", 1.0):
        w = chart("1 + x*y")
        entry = nonuniformity_tensor(w).entry(1, 2)
        rng = np.random.default_rng(101)
        pts = -0.5 + rng.random((100, 2))
        values = evaluate(entry, {"x": pts[:, 0], "y": pts[:, 1]})
        exact = (1 + pts[:, 0] * pts[:, 1]) ** -2
        assert np.max(np.abs(values - exact) / np.abs(exact)) <= 1e-10

        for text in ("exp(x^2*y^2/4)", "(1+x)*(1+y)*exp(x^2*y^2/4)"):
            e = nonuniformity_tensor(chart(text)).entry(1, 2)
            vals = evaluate(e, {"x": pts[:, 0], "y": pts[:, 1]})
            expected = pts[:, 0] * pts[:, 1]
            assert np.max(np.abs(vals - expected)) <= \
                1e-10 * max(1.0, float(np.max(np.abs(expected))))


def test_criterion_2_triviality_verdicts():
    with criterion(2, "slicing verdicts and the infall-chart entry", 1.0):
        sw = slicing_report(builtin_spacetime("schwarzschild_radial",
                                              {"m": 1.0}))
        assert sw.verdict.trivial and sw.verdict.symbolic

        m = 1.0
        lm = slicing_report(builtin_spacetime("lemaitre", {"m": m}))
        assert not lm.verdict.trivial
        entry = lm.kappa_entries[(1, 2)]
        root = math.sqrt(2 * m)
        rng = np.random.default_rng(102)
        for _ in range(20):
            T = -0.4 + 0.8 * rng.random()
            R = 1.8 + 2.0 * rng.random()
            got = float(evaluate(entry, {"T": T, "R": R, "theta": 1.0,
                                         "phi": 0.0}))
            expected = root * (R - root * T) ** -2
            assert abs(got - expected) <= 1e-8 * abs(expected)


def test_criterion_3_reflection_oracle():
    with criterion(3, "reflections match the closed form on a 9x9 grid", 5.0):
        w = chart("1 + x*y")
        worst_match = 0.0
        worst_involution = 0.0
        for x, y in off_axis_grid():
            q = np.array([x, y])
            res = reflect(w, [0, 0], 1, q, QUAD)
            worst_match = max(worst_match,
                              abs(res.point[0] - reflect_x_oracle(x, y)))
            res2 = reflect(w, [0, 0], 2, q, QUAD)
            worst_match = max(worst_match,
                              abs(res2.point[1] - reflect_x_oracle(y, x)))
            back = reflect(w, [0, 0], 1, res.point, QUAD).point
            worst_involution = max(worst_involution,
                                   float(np.max(np.abs(back - q))))
        assert worst_match <= 1e-8
        assert worst_involution <= 2e-10


def test_criterion_4_loop_oracle():
    with criterion(4, "loops match the closed form; trivial loops close",
                   10.0):
        w = chart("1 + x*y")
        worst = 0.0
        for x, y in off_axis_grid():
            got = loop(w, [0, 0], 1, 2, [x, y], QUAD)
            worst = max(worst, float(np.max(np.abs(got - loop_oracle(x, y)))))
        assert worst <= 1e-7

        trivial = chart("1", lo=-2.0, hi=2.0)
        worst_trivial = 0.0
        for x, y in off_axis_grid(n=5):
            d = holonomy_defect(trivial, [0, 0], 1, 2, [x, y], QUAD)
            worst_trivial = max(worst_trivial, float(np.max(np.abs(d))))
        assert worst_trivial <= 1e-10


def test_criterion_5_taylor_recovery():
    with criterion(5, "loop and reflection fits recover the coefficients",
                   10.0):
        scales = (0.1, 0.05, 0.025, 0.0125)
        fit = fit_loop_curvature(chart("1 + x*y"), [0, 0], 1, 2, scales, QUAD)
        assert abs(fit.estimate - 1.0) <= 0.02

        fit2 = fit_loop_curvature(chart("exp(x^2*y^2/4)"), [0.5, 0.4],
                                  1, 2, scales, QUAD)
        assert abs(fit2.estimate - 0.2) <= 0.02 * 0.2

        for text, alpha, cross in (("1 + x*y", 0.0, 1.0),
                                   ("(1+x)*(1+y)", 1.0, 0.0),
                                   ("exp(x^2*y^2/4)", 0.04, 0.2)):
            point = [0.5, 0.4] if "exp" in text else [0.0, 0.0]
            tc = reflection_taylor_check(chart(text), point, 1, QUAD)
            assert tc.alpha_symbolic == pytest.approx(alpha, abs=1e-12)
            assert abs(tc.alpha_fit - alpha) <= 0.02 * max(1.0, abs(alpha))
            assert abs(tc.cross_fit[2] - cross) <= 0.02 * max(1.0, abs(cross))
            assert tc.max_rel_error <= 0.02


def test_criterion_6_reconstruction_round_trip():
    with criterion(6, "density -> (tensor, boundary) -> density round trips",
                   30.0):
        w2 = chart("1 + x*y", lo=-0.5, hi=0.5)
        axes2 = axes_including_zero([-0.5, -0.5], [0.5, 0.5], 17)
        assert roundtrip_error(w2, axes2, QUAD) < 1e-6

        w2b = chart("(1+x)*(1+y)*exp(x^2*y^2/4)", lo=-0.5, hi=0.5)
        assert roundtrip_error(w2b, axes2, QUAD) < 1e-6

        w3 = chart("exp(x*y + y*z)", ("x", "y", "z"), ((1,), (2,), (3,)),
                   lo=-0.5, hi=0.5)
        axes3 = axes_including_zero([-0.5] * 3, [0.5] * 3, 17)
        assert roundtrip_error(w3, axes3, QUAD) < 1e-6

        tensor = nonuniformity_tensor(w3)
        boundary = BoundaryData.from_chart(w3)
        small = axes_including_zero([-0.5] * 3, [0.5] * 3, 9)
        default = reconstruct_density(tensor, boundary, small, QUAD,
                                      validate=False)
        forced = reconstruct_density(tensor, boundary, small, QUAD,
                                     validate=False, prefer_pair=(2, 3))
        assert np.max(np.abs(default.values - forced.values)) < 1e-8


def test_criterion_7_normalization_and_invariants():
    with criterion(7, "normalization flattens the cross; planar invariants",
                   2.0):
        densities = [
            chart("1 + x*y"),
            chart("(1+x)*(1+y)"),
            chart("exp(x^2*y^2/4)"),
            chart("exp(x*y + x^2*y/2 + x*y^2/2)", lo=-0.6, hi=0.6),
            chart("exp(x*y + y*z)", ("x", "y", "z"), ((1,), (2,), (3,)),
                  lo=-0.5, hi=0.5),
            chart("2*(1+x)*(1+y)"),
        ]
        for w in densities:
            assert normalize_chart(w, QUAD).cross_defect() <= 1e-9

        generic = chart("exp(x*y + x^2*y/2 + x*y^2/2)", lo=-0.6, hi=0.6)
        inv = planar_invariants(generic, [0, 0])
        assert abs(inv.kappa0 - 1.0) <= 1e-10
        assert abs(inv.a - 1.0) <= 1e-10

        rescaled = chart("exp((2*x)*(y/2) + (2*x)^2*(y/2)/2 "
                         "+ (2*x)*(y/2)^2/2)", lo=-0.3, hi=0.3)
        inv2 = planar_invariants(rescaled, [0, 0])
        assert abs(inv.kappa0 - inv2.kappa0) <= 1e-10
        assert abs(inv.a - inv2.a) <= 1e-10


def test_criterion_8_geometric_sign_test():
    with criterion(8, "bd - ac sign matches the tensor; equal splits", 5.0):
        box = Region((-0.14, -0.14), (0.14, 0.14))
        assert box.diameter <= 0.4
        for text, sign in (("1 + x*y", 1.0), ("1 - x*y", -1.0)):
            rep = check_product_condition(chart(text), box, [0, 0], 1, 2, QUAD)
            assert rep.consistent
            assert math.copysign(1.0, rep.bd_minus_ac) == sign
            assert abs(rep.bd_minus_ac) > 10 * QUAD.tol

        for text in ("(1+x)*(1+y)", "1"):
            w = chart(text)
            rep = check_product_condition(w, box, [0, 0], 1, 2, QUAD)
            assert abs(rep.bd_minus_ac) <= QUAD.tol
            split = equal_split(w, box, [1, 2], QUAD)
            assert split.ok
            spread = max(split.cell_volumes) - min(split.cell_volumes)
            assert spread <= 1e-8


def test_criterion_9_geodesic_conservation():
    with criterion(9, "Fermat-spiral conservation and RK4 order", 1.0):
        w = WebChart.from_text("r", ("r", "phi"), ((1,), (2,)),
                               (0.25, -1.5), (2.5, 1.5))
        p, v = np.array([1.0, 0.0]), np.array([0.5, 1.0])

        def defect(steps):
            path = integrate_geodesic(w, p, v, 1.0, steps)
            c1 = 2 * p[0] * v[0]
            c2 = v[1]
            conserved = c2 * path.points[:, 0] ** 2 - c1 * path.points[:, 1]
            return float(np.max(np.abs(conserved - conserved[0])))

        assert defect(1000) <= 1e-6
        coarse, fine = defect(40), defect(80)
        assert coarse > 1e-12
        assert coarse / fine >= 8.0


def test_criterion_10_ricci_identification():
    with criterion(10, "projected Ricci equals the nonuniformity tensor",
                   1.0):
        webs = [
            chart("1 + x*y"),
            chart("(1+x)*(1+y)"),
            chart("exp(x*y + y*z)", ("x", "y", "z"), ((1,), (2,), (3,)),
                  lo=-0.5, hi=0.5),
            chart("exp(x*y + y*z)", ("x", "y", "z"), ((1,), (2, 3)),
                  lo=-0.5, hi=0.5),
            chart("(1 + x*(y+z)/4)", ("x", "y", "z"), ((1,), (2, 3)),
                  lo=-0.5, hi=0.5),
        ]
        from divweb.relativity import web_from_metric
        webs.append(web_from_metric(builtin_spacetime("schwarzschild_radial",
                                                      {"m": 1.0})))
        for w in webs:
            ricci = ricci_offdiag(w)
            tensor = nonuniformity_tensor(w)
            for k in range(1, w.m + 1):
                for l in range(k, w.m + 1):
                    diff = ricci.entry(k, l) - tensor.entry(k, l)
                    verdict = is_identically_zero(diff, w.bounds(),
                                                  samples=9, tol=1e-9)
                    assert verdict.is_zero, (w.variables, k, l,
                                             verdict.max_abs)


def test_criterion_11_property_suites():
    with criterion(11, "FD derivative check, scale invariance, conjugation",
                   30.0):
        # expression derivative vs central finite differences, 500 trees
        rng = random.Random(424242)
        checked = 0
        attempts = 0
        step = 1e-5
        with np.errstate(all="ignore"):
            while checked < 500 and attempts < 8000:
                attempts += 1
                tree = _random_tree(rng, rng.randint(1, 4), ("x", "y"),
                                    smooth=True)
                var = rng.choice(("x", "y"))
                point = {v: rng.uniform(0.4, 1.4) for v in ("x", "y")}
                try:
                    value = float(evaluate(tree, point))
                    sym = float(evaluate(differentiate(tree, var), point))
                    up, down = dict(point), dict(point)
                    up[var] += step
                    down[var] -= step
                    fd = (float(evaluate(tree, up))
                          - float(evaluate(tree, down))) / (2 * step)
                except EvalDomainError:
                    continue
                if not all(map(math.isfinite, (value, sym, fd))):
                    continue
                if abs(value) > 1e4 or max(abs(sym), abs(fd)) > 1e5:
                    continue
                assert abs(sym - fd) <= 1e-6 * max(1.0, abs(sym))
                checked += 1
        assert checked == 500

        # reflections ignore a global rescaling of the volume form
        w = chart("1 + x*y")
        scaled = chart("7.3*(1 + x*y)")
        rng2 = np.random.default_rng(11)
        for _ in range(25):
            q = -0.4 + 0.8 * rng2.random(2)
            r1 = reflect(w, [0, 0], 1, q, QUAD).point
            r2 = reflect(scaled, [0, 0], 1, q, QUAD).point
            assert np.max(np.abs(r1 - r2)) <= 1e-10

        # conjugation covariance through the polar equivalence
        polar = WebChart.from_text("r", ("r", "phi"), ((1,), (2,)),
                                   (0.25, -1.5), (2.5, 1.5))
        flat = WebChart.from_text("1", ("rho", "phi"), ((1,), (2,)),
                                  (0.25 ** 2 / 2, -1.5), (2.5 ** 2 / 2, 1.5))
        rng3 = np.random.default_rng(13)
        for _ in range(10):
            p = np.array([1.3 + 0.2 * rng3.random(),
                          -0.3 + 0.6 * rng3.random()])
            q = np.array([1.1 + 0.6 * rng3.random(),
                          -0.5 + 1.0 * rng3.random()])
            for axis in (1, 2):
                direct = reflect(polar, p, axis, q, QUAD).point
                pushed_p = np.array([p[0] ** 2 / 2, p[1]])
                pushed_q = np.array([q[0] ** 2 / 2, q[1]])
                mirrored = reflect(flat, pushed_p, axis, pushed_q, QUAD).point
                conj = np.array([math.sqrt(2 * mirrored[0]), mirrored[1]])
                assert np.max(np.abs(direct - conj)) <= 1e-6
