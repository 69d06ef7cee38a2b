import csv
import io
import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from narrownet.affine import AffineMap, MaxMinString, eval_string
from narrownet.builder import (
    BuildTrace,
    ExtensionStep,
    annulus_chord_geometry,
    build,
    cover_boundary,
    extend,
    grid_error,
    grid_slack,
    make_step,
)
from narrownet.domain import Ball, Box, enclosing_ball
from narrownet.errors import GeometryError, TargetEvaluationError
from narrownet.modulus import Empirical, Hoelder, Lipschitz, estimate_modulus


def outer_chord_length_stable(r, r_prime, xy):
    """Half-chord of the outer circle on the line carrying XY, without cancellation."""
    half = xy / 2.0
    h = math.sqrt((r - half) * (r + half))
    # r' - h = (r' - r) + (r - h), with r - h = half^2 / (r + h)
    gap = (r_prime - r) + half * half / (r + h)
    return 2.0 * math.sqrt(gap * (r_prime + h))


def outer_chord_length(r, r_prime, xy):
    """Intersect the line through the inner chord XY with the outer circle; return |X'Y'|."""
    half = xy / 2.0
    X = np.array([math.sqrt(r * r - half * half), half])
    Y = np.array([X[0], -half])
    # |X + t (Y - X)|^2 = r'^2, quadratic in t
    D = Y - X
    a, b, c = D @ D, 2 * X @ D, X @ X - r_prime ** 2
    disc = math.sqrt(b * b - 4 * a * c)
    t1, t2 = (-b - disc) / (2 * a), (-b + disc) / (2 * a)
    return float(np.linalg.norm((t2 - t1) * D))


# -- chord geometry --------------------------------------------------------------

def test_chord_reference_values():
    g = annulus_chord_geometry(1.0, 0.5)
    assert g.r_prime == pytest.approx(1.025, rel=1e-15)
    # |XY|^2 = 0.25 - 4 (1.025^2 - 1) = 0.0475
    assert g.xy ** 2 == pytest.approx(0.0475, rel=1e-12)
    assert g.xy == pytest.approx(0.21794494717703367, rel=1e-12)
    assert outer_chord_length(1.0, g.r_prime, g.xy) == pytest.approx(0.5, abs=1e-12)
    assert outer_chord_length_stable(1.0, g.r_prime, g.xy) == pytest.approx(0.5, abs=1e-12)
    assert np.linalg.norm(g.x_prime - g.y_prime) == pytest.approx(0.5, abs=1e-15)


def test_chord_r_equals_w():
    w = 0.3
    g = annulus_chord_geometry(w, w)
    assert g.r_prime == pytest.approx(1.1 * w, rel=1e-15)
    assert g.xy == pytest.approx(0.4 * w, rel=1e-12)
    assert outer_chord_length(w, g.r_prime, g.xy) == pytest.approx(w, abs=1e-12)


def test_chord_tiny_step():
    g = annulus_chord_geometry(1.0, 1e-6)
    assert g.r_prime - 1.0 == pytest.approx(1e-13, rel=1e-6)
    assert g.diameter <= 1e-6 * (1 + 1e-12)
    assert g.reach <= g.diameter


def test_chord_points_on_circles():
    g = annulus_chord_geometry(2.0, 0.7)
    assert np.linalg.norm(g.x) == pytest.approx(2.0, rel=1e-14)
    assert np.linalg.norm(g.x_prime) == pytest.approx(g.r_prime, rel=1e-14)
    # Z is where the outer tangents at X' and Y' meet
    assert (g.z - g.x_prime) @ g.x_prime == pytest.approx(0.0, abs=1e-12)
    assert (g.z - g.y_prime) @ g.y_prime == pytest.approx(0.0, abs=1e-12)


def test_chord_rejects_w_above_r():
    with pytest.raises(GeometryError):
        annulus_chord_geometry(1.0, 1.5)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.01, 50), st.floats(1e-4, 1.0))
def test_chord_identity_property(r, frac):
    w = r * frac
    g = annulus_chord_geometry(r, w)
    assert abs(outer_chord_length_stable(r, g.r_prime, g.xy) - w) <= 1e-12
    zx = np.linalg.norm(g.z - g.x_prime)
    assert zx <= w
    assert np.dot(g.x_prime - g.z, g.y_prime - g.z) <= 0.0
    assert g.diameter == pytest.approx(w, rel=1e-12)


# -- boundary cover --------------------------------------------------------------

def test_cover_one_dimension():
    c = cover_boundary(0.3, 0.1, 1)
    assert len(c) == 2
    np.testing.assert_array_equal(np.sort(c.directions[:, 0]), [-1.0, 1.0])


def test_cover_two_dimension_count():
    c = cover_boundary(1.0, 0.5, 2)
    # ceil(2 pi / (2 asin(0.5 * 0.217945))) = 29 at zero overlap
    assert 29 <= len(c) <= 58


def _in_triangle(p, a, b, c):
    def cross(o, u, v):
        return (u[0] - o[0]) * (v[1] - o[1]) - (u[1] - o[1]) * (v[0] - o[0])

    s1, s2, s3 = cross(a, b, p), cross(b, c, p), cross(c, a, p)
    neg = (s1 < -1e-12) or (s2 < -1e-12) or (s3 < -1e-12)
    pos = (s1 > 1e-12) or (s2 > 1e-12) or (s3 > 1e-12)
    return not (neg and pos)


@pytest.mark.parametrize("r,w", [(1.0, 0.5), (0.3, 0.3), (5.0, 0.2)])
def test_cover_two_dimension_triangles(r, w):
    c = cover_boundary(r, w, 2)
    g = annulus_chord_geometry(r, w)
    rng = np.random.default_rng(0)
    ang = rng.uniform(0, 2 * np.pi, 3000)
    rad = rng.uniform(r, c.r_prime, 3000)
    pts = np.stack([rad * np.cos(ang), rad * np.sin(ang)], axis=1)
    tris = []
    for u in c.directions:
        R = np.array([[u[0], -u[1]], [u[1], u[0]]])
        tris.append((R @ g.x_prime, R @ g.z, R @ g.y_prime))
    for p in pts:
        near = [t for t, u in zip(tris, c.directions) if u @ p > 0]
        assert any(_in_triangle(p, *t) for t in near)


def test_cover_three_dimension_cone_tips():
    r, w = 1.0, 0.5
    c = cover_boundary(r, w, 3)
    g = annulus_chord_geometry(r, w)
    apex = g.apex_distance
    cos_beta = math.sqrt(1 - (g.r_prime / apex) ** 2)
    rng = np.random.default_rng(1)
    v = rng.normal(size=(4000, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    pts = v * rng.uniform(r, c.r_prime, (4000, 1))
    for p in pts:
        ok = False
        for u in c.directions[(c.directions @ p) > 0]:
            rel = apex * u - p
            if u @ p >= g.chord_distance - 1e-12 and rel @ u >= np.linalg.norm(rel) * cos_beta - 1e-12:
                ok = True
                break
        assert ok


def test_cover_rejects_high_dimension():
    with pytest.raises(ValueError):
        cover_boundary(1.0, 0.5, 4)


# -- extension step ----------------------------------------------------------------

def _step_1d(f, apex, far, level):
    return make_step(f, [1.0], apex, far, 0.0, level)


def test_extend_constant_target():
    f = lambda x: np.full(len(x), 3.0)
    g = MaxMinString.constant(3.0, 2)
    step = make_step(f, [0.6, 0.8], 1.2, 1.0, 0.3, 0.05)
    h = extend(g, step, 0.1)
    assert h.length == g.length + 2
    # K is the unit ball; the added triangle has vertices apex and far edge
    rng = np.random.default_rng(0)
    lam = rng.dirichlet([1, 1, 1], 500)
    tri = lam @ np.vstack([step.apex, step.far_vertices])
    pts = np.vstack([Ball([0, 0], 1.0).sample(500, 0), tri])
    np.testing.assert_allclose(eval_string(h, pts)[:, 0], 3.0, atol=1e-12)


def test_extend_hits_target_at_apex():
    f = lambda x: np.sin(3 * x[:, 0]) + x[:, 1] ** 2
    g = MaxMinString.from_affines([AffineMap([[5.0, -1.0]], [2.0])], [])
    step = make_step(f, [0.0, 1.0], 0.9, 0.8, 0.1, 0.02)
    h = extend(g, step, 0.05)
    assert eval_string(h, step.apex)[0] == pytest.approx(f(step.apex[None])[0], abs=1e-12)


def test_extend_one_dimension_identity():
    # g approximates f(x) = x on [-r, r]; the step adds [r, r + reach]
    eps, r = 0.1, 0.5
    f = lambda x: x[:, 0]
    g = MaxMinString.from_affines([AffineMap([[1.0]], [-0.9 * eps])], [])
    reach = eps / 2
    h = extend(g, _step_1d(f, r + reach, r, eps / 2), eps)
    x = np.arange(-r, r + reach + 1e-12, eps / 100)[:, None]
    assert np.max(np.abs(eval_string(h, x)[:, 0] - f(x))) <= eps


def _adversarial_1d():
    """Lipschitz-1 target and a string that is eps-close on [-0.5, 0.5] but shoots up just outside."""
    f = lambda x: -np.abs(x[:, 0] - 0.6)
    g = MaxMinString(np.array([[[1.0]], [[100.0]]]), np.array([[-0.5], [-50.0]]), [True])
    return f, g


def test_sized_step_stays_within_eps():
    eps, r = 0.1, 0.5
    f, g = _adversarial_1d()
    x = np.linspace(-r, r, 1001)[:, None]
    assert np.max(np.abs(eval_string(g, x)[:, 0] - f(x))) <= eps + 1e-12
    # reach omega^-1(eps/2) with ramp level eps/2
    h = extend(g, _step_1d(f, r + eps / 2, r, eps / 2), eps)
    x = np.linspace(-r, r + eps / 2, 2001)[:, None]
    assert np.max(np.abs(eval_string(h, x)[:, 0] - f(x))) <= eps + 1e-12


def test_literal_step_sizing_can_double_error():
    # reach omega^-1(eps) with level eps: the error on the new piece approaches 2 eps
    eps, r = 0.1, 0.5
    f, g = _adversarial_1d()
    h = extend(g, _step_1d(f, r + eps, r, eps), eps)
    x = np.linspace(r, r + eps, 1001)[:, None]
    err = np.max(np.abs(eval_string(h, x)[:, 0] - f(x)))
    assert err > 1.7 * eps


def test_extend_rejects_bad_steps():
    f = lambda x: x[:, 0]
    g = MaxMinString.constant(0.0, 1)
    with pytest.raises(GeometryError):
        extend(g, _step_1d(f, 1.1, 1.0, 0.5), 0.1)
    good = _step_1d(f, 1.1, 1.0, 0.05)
    bad_ramp = ExtensionStep(good.apex, good.direction, good.far_vertices,
                             AffineMap(good.ramp.weights, good.ramp.offset + 1.0),
                             good.f_at_apex, good.level, good.diameter, good.reach)
    with pytest.raises(GeometryError):
        extend(g, bad_ramp, 0.1)
    with pytest.raises(GeometryError):
        extend(g, good, 0.1, max_diameter=0.01)


# -- build ----------------------------------------------------------------------------

def test_constant_target_clamps():
    f = lambda x: np.full(len(x), 7.0)
    g, trace = build(f, Lipschitz(1.0), Box([0, 0], [1, 1]), 1.0)
    assert g.length == 1
    assert trace.annuli == []
    assert eval_string(g, [0.3, 0.9])[0] == 7.0


def test_estimated_constant_target():
    f = lambda x: np.full(len(x), 7.0)
    box = Box([0, 0], [1, 1])
    g, trace = build(f, estimate_modulus(f, enclosing_ball(box)), box, 0.01)
    assert g.length == 1 and trace.heuristic


def test_one_dimension_kink():
    f = lambda x: np.abs(x[:, 0] - 0.3)
    box = Box([0.0], [1.0])
    g, trace = build(f, Lipschitz(1.0), box, 0.05)
    pts, h = box.grid(10_000)
    assert grid_error(f, g, pts).max() <= 0.05 + h
    # two steps per increment
    assert all(a.steps == 2 for a in trace.annuli)
    assert g.length == 1 + 2 * sum(a.steps for a in trace.annuli)


def test_two_dimension_quadratic_coarse():
    f = lambda x: ((x - 0.5) ** 2).sum(axis=1)
    box = Box([0, 0], [1, 1])
    g, trace = build(f, Lipschitz(math.sqrt(2)), box, 0.2)
    pts, h = box.grid(200)
    assert grid_error(f, g, pts).max() <= 0.2 + grid_slack(Lipschitz(math.sqrt(2)), h)
    assert all(fail == 0 for _, fail in trace.checks.values())


def test_vector_valued_target():
    f = lambda x: np.stack([np.sin(2 * x[:, 0]), x[:, 0] * x[:, 1]], axis=1)
    box = Box([-0.5, -0.5], [0.5, 0.5])
    # both components are 2-Lipschitz on the inflated ball, in every norm used here
    g, _ = build(f, Lipschitz(2.0), box, 0.3)
    assert g.d_out == 2
    pts, h = box.grid(60)
    assert grid_error(f, g, pts).max() <= 0.3 + 2.0 * h


def test_three_dimension_small():
    f = lambda x: x[:, 0] - 2 * x[:, 2]
    box = Box([0, 0, 0], [0.5, 0.5, 0.5])
    spec = Lipschitz(math.sqrt(5))
    g, trace = build(f, spec, box, 0.5)
    assert trace.annuli
    pts, h = box.grid(12)
    assert grid_error(f, g, pts).max() <= 0.5 + grid_slack(spec, h)


def test_off_center_domain():
    f = lambda x: np.cos(x[:, 0]) + x[:, 1]
    box = Box([10.0, -3.0], [11.0, -2.0])
    spec = Lipschitz(math.sqrt(2))
    g, _ = build(f, spec, box, 0.25)
    pts, h = box.grid(80)
    assert grid_error(f, g, pts).max() <= 0.25 + grid_slack(spec, h)


def test_hoelder_target():
    f = lambda x: np.sqrt(np.abs(x[:, 0]))
    box = Box([-1.0], [1.0])
    spec = Hoelder(1.0, 0.5)
    g, _ = build(f, spec, box, 0.2)
    pts, h = box.grid(10_000)
    assert grid_error(f, g, pts).max() <= 0.2 + grid_slack(spec, h)


def test_trace_invariants():
    f = lambda x: np.sin(3 * x[:, 0]) * x[:, 1]
    box = Box([0, 0], [1, 1])
    g, trace = build(f, Lipschitz(3.0), box, 0.3)
    radii = [a.r for a in trace.annuli]
    assert all(b > a for a, b in itertools.pairwise(radii))
    assert all(a.r_prime > a.r for a in trace.annuli)
    assert trace.annuli[-1].r_prime >= trace.radius
    assert len(trace.annuli) <= math.ceil(10 * trace.radius ** 2 / trace.w ** 2) + 1
    assert trace.total_length == g.length == trace.annuli[-1].cumulative_length
    assert trace.length_constant > 0
    rows = list(csv.reader(io.StringIO("\n".join(",".join(map(str, r)) for r in trace.csv_rows()))))
    assert rows[0] == ["annulus_index", "r", "r_prime", "steps", "cumulative_length"]
    assert len(rows) == len(trace.annuli) + 1


def test_underestimated_lipschitz_is_caught():
    f = lambda x: 5 * x[:, 0]
    with pytest.raises(GeometryError):
        build(f, Lipschitz(1.0), Box([0, 0], [1, 1]), 0.2)


def test_empirical_spec_only_logs(caplog):
    f = lambda x: 5 * x[:, 0]
    spec = Empirical((0.01, 0.1, 1.0), (0.01, 0.05, 0.1))  # far too optimistic
    _g, trace = build(f, spec, Box([0.0], [1.0]), 0.05)
    assert trace.heuristic
    assert any(fail for _, fail in trace.checks.values())
    assert trace.log


def test_target_failure_reports_point():
    def f(x):
        out = x[:, 0].copy()
        out[x[:, 0] > 0.9] = np.nan
        return out

    with pytest.raises(TargetEvaluationError) as info:
        build(f, Lipschitz(1.0), Box([0.0], [1.0]), 0.1)
    assert info.value.point[0] > 0.9


def test_bad_inputs():
    f = lambda x: x[:, 0]
    with pytest.raises(ValueError):
        build(f, Lipschitz(1.0), Box([0.0], [1.0]), 0.0)
    with pytest.raises(ValueError):
        build(lambda x: x[:, 0], Lipschitz(1.0), Box([0.0] * 4, [1.0] * 4), 0.1)


def test_build_is_deterministic():
    f = lambda x: np.sin(x[:, 0] * 4) + x[:, 1]
    a, _ = build(f, Lipschitz(5.0), Box([0, 0], [1, 1]), 0.4)
    b, _ = build(f, Lipschitz(5.0), Box([0, 0], [1, 1]), 0.4)
    assert a == b
    assert isinstance(_, BuildTrace)


def test_batched_build_matches_step_by_step_extend():
    # replay the trace's schedule one extend() at a time
    f = lambda x: np.sin(2 * x[:, 0]) + 0.5 * x[:, 1]
    L = math.hypot(2.0, 0.5)
    g, trace = build(f, Lipschitz(L), Box([-1.0, -1.0], [1.0, 1.0]), 0.6)
    h = MaxMinString.constant(f(np.zeros((1, 2))), 2)
    for a in trace.annuli:
        cover = cover_boundary(a.r, a.step_width, 2)
        geo = annulus_chord_geometry(a.r, a.step_width, 2)
        for u in cover.directions:
            step = make_step(f, u, geo.apex_distance, geo.chord_distance, 0.5 * a.step_width, trace.level)
            h = extend(h, step, 0.6, max_diameter=trace.w)
    assert h.length == g.length > 1
    np.testing.assert_array_equal(h.is_max, g.is_max)
    np.testing.assert_allclose(h.weights, g.weights, rtol=1e-14, atol=1e-15)
    np.testing.assert_allclose(h.offsets, g.offsets, rtol=1e-14, atol=1e-15)
