"""Grow an eps-approximating max-min string outward from a small ball.

Start from the constant string ``f(0)`` on a ball of radius ``w = omega^-1(eps)``.
Each annulus increment pushes the certified radius from ``r`` to
``r' = r + w_r**2 / (10 r)`` by cutting thin triangles (cone tips in 3-D)
tangent to the sphere of radius ``r'`` all around the boundary and patching
each one in with ``g <- max(f(Z) - l, min(f(Z) + l, g))``, where ``Z`` is the
triangle's apex and ``l`` is the affine ramp vanishing at ``Z``.

Step sizing (see ``_step_params``): every triangle point lies within
``reach <= omega^-1(eps/2)`` of its apex and the ramp reaches ``eps/2`` on
the far edge. That keeps the error at most ``eps`` both on the new piece
(``omega(reach) + eps/2``) and on everything certified before, while the
triangle diameter stays below ``omega^-1(eps)``.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .affine import AffineMap, MaxMinString, eval_string
from .domain import enclosing_ball, fibonacci_sphere
from .errors import DimensionError, GeometryError, TargetEvaluationError
from .modulus import inverse_modulus, modulus

log = logging.getLogger(__name__)

INCREMENT = 10.0
OVERLAP = 0.9
MAX_DENSIFY = 4
GEOM_TOL = 1e-12
MAX_LENGTH = 20_000_000


# -- geometry of one annulus increment ------------------------------------------

@dataclass(frozen=True)
class ChordGeometry:
    """One extension triangle for the reference direction ``e1``.

    ``x``, ``y`` lie on the inner circle (radius ``r``), ``x_prime``,
    ``y_prime`` on the outer circle (radius ``r_prime``), all on one chord
    line at distance ``chord_distance`` from the origin. ``z`` is where the
    outer-circle tangents at ``x_prime`` and ``y_prime`` meet.
    """

    r: float
    w: float
    r_prime: float
    xy: float
    x: np.ndarray
    y: np.ndarray
    x_prime: np.ndarray
    y_prime: np.ndarray
    z: np.ndarray
    chord_distance: float
    inner_half_angle: float
    reach: float
    diameter: float

    @property
    def apex_distance(self) -> float:
        return float(self.z[0])


def _r_prime(r, w, increment):
    return r + w * w / (increment * r)


def annulus_chord_geometry(r: float, w: float, d_in: int = 2, increment: float = INCREMENT) -> ChordGeometry:
    """Triangle ``X'ZY'`` with ``|X'Y'| = w`` for the increment ``r -> r + w^2/(increment r)``.

    ``|XY|`` comes from the exact chord relation ``|X'Y'|^2 = |XY|^2 + 4(r'^2 - r^2)``.
    The 3-D cone tip is this triangle rotated about the ``e1`` axis, so the
    planar data describes it fully.
    """
    if d_in not in (2, 3):
        raise ValueError("chord geometry is defined for d_in = 2 or 3")
    if not (w > 0 and w <= r):
        raise GeometryError(f"need 0 < w <= r, got w={w}, r={r}", {"r": r, "w": w})
    rp = _r_prime(r, w, increment)
    gap = (rp - r) * (rp + r)
    xy2 = w * w - 4.0 * gap
    if not xy2 > 0:
        raise GeometryError(f"chord |XY|^2 = {xy2} is not positive", {"r": r, "w": w, "r_prime": rp})
    xy = math.sqrt(xy2)
    h = math.sqrt((rp - 0.5 * w) * (rp + 0.5 * w))
    half_in = math.asin(xy / (2.0 * r))
    x = np.array([r * math.cos(half_in), r * math.sin(half_in)])
    y = np.array([x[0], -x[1]])
    xp = np.array([h, 0.5 * w])
    yp = np.array([h, -0.5 * w])
    z = np.array([rp * rp / h, 0.0])
    reach = float(np.linalg.norm(z - xp))
    if np.dot(xp - z, yp - z) > GEOM_TOL * rp * rp:
        raise GeometryError("triangle X'ZY' is not obtuse at Z", {"r": r, "w": w})
    diameter = max(float(np.linalg.norm(xp - yp)), reach)
    if diameter > w * (1 + GEOM_TOL):
        raise GeometryError(f"triangle diameter {diameter} exceeds w = {w}", {"r": r, "w": w})
    if abs(x[0] - h) > 1e-9 * rp:
        raise GeometryError("inner and outer chord points are not collinear", {"r": r, "w": w})
    return ChordGeometry(r, w, rp, xy, x, y, xp, yp, z, h, half_in, reach, diameter)


# -- boundary cover ------------------------------------------------------------------

@dataclass(frozen=True)
class Cover:
    """Directions of the extension steps of one annulus increment."""

    directions: np.ndarray
    r: float
    r_prime: float
    angular_radius: float
    densified: int = 0

    def __len__(self):
        return len(self.directions)


def _cover_directions(d_in, angular_radius, overlap, refine):
    if d_in == 2:
        n = math.ceil(2.0 * math.pi / (overlap * 2.0 * angular_radius)) * 2 ** refine
        n = max(n, 3)
        t = 2.0 * math.pi * np.arange(n) / n
        return np.stack([np.cos(t), np.sin(t)], axis=1)
    # Fibonacci lattice covering radius is about 2.72 / sqrt(n)
    n = math.ceil((2.8 / (overlap * angular_radius)) ** 2) * 4 ** refine
    return fibonacci_sphere(max(n, 4))


def _coverage_samples(d_in, n_dirs):
    if d_in == 2:
        m = max(16 * n_dirs, 720)
        t = 2.0 * math.pi * (np.arange(m) + 0.5) / m
        return np.stack([np.cos(t), np.sin(t)], axis=1)
    return fibonacci_sphere(max(4 * n_dirs, 2000))


def _covered(samples, directions, threshold, chunk=4096):
    ok = np.empty(len(samples), dtype=bool)
    for i in range(0, len(samples), chunk):
        ok[i:i + chunk] = (samples[i:i + chunk] @ directions.T).max(axis=1) >= threshold
    return ok


def cover_boundary(r: float, w: float, d_in: int, *, overlap: float = OVERLAP,
                   increment: float = INCREMENT) -> Cover:
    """Directions whose extension steps cover the annulus ``B_r' \\ B_r``.

    A step along ``u`` certifies every annulus point whose direction is
    within the inner half angle of ``u``. Coverage is checked on a dense
    sample at radii ``r``, ``(r + r')/2`` and ``r'``; on failure the spacing
    is halved, at most ``MAX_DENSIFY`` times.
    """
    if d_in == 1:
        return Cover(np.array([[1.0], [-1.0]]), r, r + w, 0.0)
    if d_in not in (2, 3):
        raise ValueError(f"boundary covers are implemented for d_in in (1, 2, 3), got {d_in}")
    geom = annulus_chord_geometry(r, w, d_in, increment)
    h = geom.chord_distance
    radii = np.array([r, 0.5 * (r + geom.r_prime), geom.r_prime])
    for refine in range(MAX_DENSIFY + 1):
        dirs = _cover_directions(d_in, geom.inner_half_angle, overlap, refine)
        sample = _coverage_samples(d_in, len(dirs))
        # a point at radius rho along v is covered when u . v >= h / rho
        ok = all(_covered(sample, dirs, h / rho - GEOM_TOL).all() for rho in radii)
        if ok:
            return Cover(dirs, r, geom.r_prime, geom.inner_half_angle, refine)
        log.debug("coverage failed at r=%.6g with %d directions; densifying", r, len(dirs))
    raise GeometryError(
        f"annulus at r={r} not covered after {MAX_DENSIFY} densifications",
        {"r": r, "w": w, "directions": len(dirs)},
    )


# -- extension steps -------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ExtensionStep:
    """Data for one application of ``g -> max(f(A) - l, min(f(A) + l, g))``.

    ``ramp`` is the scalar affine ``l`` (one output row) with ``l(apex) = 0``
    and ``l = level`` on ``far_vertices``; it is replicated over outputs.
    """

    apex: np.ndarray
    direction: np.ndarray
    far_vertices: np.ndarray
    ramp: AffineMap
    f_at_apex: np.ndarray
    level: float
    diameter: float
    reach: float


def _ramps(directions, apex_dist, far_dist, level):
    """Weights/offsets of ``l(x) = level (|Z| - u.x) / (|Z| - h)`` for every direction."""
    scale = level / (apex_dist - far_dist)
    return -scale * directions, np.full(len(directions), scale * apex_dist)


def _far_vertices(directions, far_dist, half_width):
    """Points of the far edge: two in 1-D/2-D (one in 1-D), four on the base circle in 3-D."""
    d = directions.shape[1]
    base = far_dist * directions
    if d == 1:
        return base[:, None, :]
    if d == 2:
        perp = np.stack([-directions[:, 1], directions[:, 0]], axis=1)
        return np.stack([base + half_width * perp, base - half_width * perp], axis=1)
    helper = np.where(np.abs(directions[:, :1]) < 0.9, [[1.0, 0.0, 0.0]], [[0.0, 1.0, 0.0]])
    v1 = np.cross(directions, helper)
    v1 /= np.linalg.norm(v1, axis=1, keepdims=True)
    v2 = np.cross(directions, v1)
    return np.stack([base + half_width * v1, base - half_width * v1,
                     base + half_width * v2, base - half_width * v2], axis=1)


def make_step(f, direction, apex_dist: float, far_dist: float, half_width: float, level: float) -> ExtensionStep:
    """Extension step along unit ``direction`` with apex at distance ``apex_dist`` from the origin."""
    u = np.asarray(direction, dtype=np.float64).reshape(1, -1)
    Wl, bl = _ramps(u, apex_dist, far_dist, level)
    far = _far_vertices(u, far_dist, half_width)[0]
    apex = apex_dist * u[0]
    fa = _eval_target(f, apex[None, :])[0]
    pts = np.vstack([apex[None, :], far])
    diam = float(np.max(np.linalg.norm(pts[:, None] - pts[None], axis=2)))
    reach = float(np.max(np.linalg.norm(far - apex, axis=1)))
    return ExtensionStep(apex, u[0], far, AffineMap(Wl, bl), fa, level, diam, reach)


def extend(g: MaxMinString, step: ExtensionStep, eps: float, *, max_diameter: float | None = None,
           tol: float = 1e-9) -> MaxMinString:
    """Patch ``step`` into ``g``; the result is two affine maps longer."""
    if not 0 < step.level <= eps * (1 + tol):
        raise GeometryError(f"ramp level {step.level} must lie in (0, eps={eps}]", {"level": step.level})
    at_apex = step.ramp(step.apex)
    if abs(float(at_apex[0])) > tol * (1 + step.level):
        raise GeometryError("ramp does not vanish at the apex", {"value": float(at_apex[0])})
    at_far = step.ramp(step.far_vertices)[:, 0]
    if np.max(np.abs(at_far - step.level)) > tol * (1 + step.level):
        raise GeometryError("ramp does not reach its level on the far edge", {"values": at_far.tolist()})
    if max_diameter is not None and step.diameter > max_diameter * (1 + GEOM_TOL):
        raise GeometryError(
            f"added region has diameter {step.diameter} > {max_diameter}",
            {"diameter": step.diameter, "limit": max_diameter},
        )
    fa = np.asarray(step.f_at_apex, dtype=np.float64).reshape(-1)
    if fa.size != g.d_out or step.ramp.cols != g.d_in:
        raise DimensionError("step does not match the string's dimensions")
    W = np.tile(step.ramp.weights, (g.d_out, 1))
    b = step.ramp.offset[0]
    return g.extended_by(np.stack([W, -W]), np.stack([fa + b, fa - b]), [False, True])


# -- driver -------------------------------------------------------------------------

@dataclass
class AnnulusRecord:
    index: int
    r: float
    r_prime: float
    steps: int
    cumulative_length: int
    step_width: float


@dataclass
class BuildTrace:
    eps: float
    w: float
    reach: float
    level: float
    radius: float
    center: list
    d_in: int
    d_out: int
    heuristic: bool
    annuli: list = field(default_factory=list)
    total_length: int = 1
    wall_clock: float = 0.0
    checks: dict = field(default_factory=dict)
    log: list = field(default_factory=list)

    @property
    def length_constant(self) -> float:
        """``C`` in ``length = C (R/w)^(d_in+1)``."""
        ratio = self.radius / self.w
        return self.total_length / ratio ** (self.d_in + 1) if ratio > 0 else float("nan")

    def csv_rows(self):
        yield ("annulus_index", "r", "r_prime", "steps", "cumulative_length")
        for a in self.annuli:
            yield (a.index, repr(a.r), repr(a.r_prime), a.steps, a.cumulative_length)

    def note(self, key, passed=True):
        c = self.checks.setdefault(key, [0, 0])
        c[0] += 1
        c[1] += 0 if passed else 1


def _eval_target(f, pts):
    vals = np.asarray(f(pts), dtype=np.float64)
    vals = vals.reshape(len(pts), -1)
    bad = ~np.all(np.isfinite(vals), axis=1)
    if bad.any():
        p = pts[np.argmax(bad)]
        raise TargetEvaluationError(f"target is not finite at {p.tolist()}", point=p)
    return vals


def _step_params(spec, eps):
    """Return ``(w, reach, level)``: seed radius / diameter cap, apex reach cap, ramp level."""
    w = inverse_modulus(spec, eps)
    reach = min(inverse_modulus(spec, 0.5 * eps), 0.5 * w)
    return w, reach, 0.5 * eps


def _annulus_width(r, w_cap, reach_cap, increment):
    """Largest chord ``w <= min(w_cap, r)`` whose triangle keeps ``|ZX'| <= reach_cap``."""

    def reach(w):
        rp = _r_prime(r, w, increment)
        return 0.5 * w / math.sqrt(1.0 - (w / (2.0 * rp)) ** 2)

    hi = min(w_cap, r)
    if reach(hi) <= reach_cap:
        return hi
    lo = 0.0
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if reach(mid) <= reach_cap:
            lo = mid
        else:
            hi = mid
    return lo


def _sample_region(d_in, r_prime, n_angles=64):
    """Fixed sample of the certified ball ``B_r'`` for the per-step inequality checks."""
    if d_in == 1:
        return np.linspace(-r_prime, r_prime, 9)[:, None]
    if d_in == 2:
        t = 2.0 * math.pi * np.arange(n_angles) / n_angles
        dirs = np.stack([np.cos(t), np.sin(t)], axis=1)
    else:
        dirs = fibonacci_sphere(2 * n_angles)
    rings = [frac * r_prime * dirs for frac in (1.0 / 3.0, 2.0 / 3.0, 1.0)]
    return np.vstack([np.zeros((1, d_in))] + rings)


class _Builder:
    def __init__(self, f, spec, ball, eps, d_out, increment, overlap, strict, check_samples):
        self.f = f
        self.ball = ball
        self.eps = eps
        self.increment = increment
        self.overlap = overlap
        self.d = ball.dim
        self.w, self.reach_cap, self.level = _step_params(spec, eps)
        heuristic = getattr(spec, "heuristic", False)
        self.strict = (not heuristic) if strict is None else strict
        self.check_samples = check_samples
        self.trace = BuildTrace(
            eps=eps, w=self.w, reach=self.reach_cap, level=self.level,
            radius=ball.radius, center=ball.center.tolist(), d_in=self.d,
            d_out=d_out, heuristic=heuristic,
        )
        self.W_blocks, self.b_blocks, self.op_blocks = [], [], []
        self.length = 1

    def fail(self, key, message, **diag):
        self.trace.note(key, False)
        self.trace.log.append(message)
        if self.strict:
            raise GeometryError(message, diag)
        log.warning(message)

    def target(self, pts):
        # builder works in ball-centred coordinates
        return _eval_target(self.f, pts + self.ball.center)

    def run_increment(self, index, r, dirs, apex_dist, far_dist, half_width, r_prime, step_width):
        n = len(dirs)
        Wl, bl = _ramps(dirs, apex_dist, far_dist, self.level)
        apexes = apex_dist * dirs
        far = _far_vertices(dirs, far_dist, half_width)
        n_far = far.shape[1]
        region = _sample_region(self.d, r_prime) if self.check_samples else np.zeros((0, self.d))
        vals = self.target(np.vstack([apexes, far.reshape(-1, self.d), region]))
        f_apex = vals[:n]
        f_far = vals[n:n + n * n_far].reshape(n, n_far, -1)
        f_region = vals[n + n * n_far:]

        # per-step hypotheses: ramp values, diameter and reach of the added piece
        ramp_apex = np.einsum("kd,kd->k", Wl, apexes) + bl
        ramp_far = np.einsum("kd,kjd->kj", Wl, far) + bl[:, None]
        ok = np.all(np.abs(ramp_apex) <= 1e-9 * (1 + self.level))
        ok &= np.all(np.abs(ramp_far - self.level) <= 1e-9 * (1 + self.level))
        self.trace.note("ramp_values", bool(ok))
        if not ok:
            self.fail("ramp_values", f"ramp values off at annulus {index}")
        verts = np.concatenate([apexes[:, None, :], far], axis=1)
        diam = np.max(np.linalg.norm(verts[:, :, None] - verts[:, None, :], axis=3), axis=(1, 2))
        reach = np.max(np.linalg.norm(far - apexes[:, None, :], axis=2), axis=1)
        ok = diam.max() <= self.w * (1 + 1e-9) and reach.max() <= self.reach_cap * (1 + 1e-9)
        self.trace.note("diameter", bool(ok))
        if not ok:
            self.fail("diameter", f"added region too large at annulus {index}: diam {diam.max()}, "
                      f"reach {reach.max()}", diameter=float(diam.max()), limit=self.w)

        if self.check_samples and len(region):
            # certified region B_r' lies inside every step's sector / cone
            if self.d >= 2:
                cos_half = far_dist / r_prime if r_prime > 0 else 1.0
                if self.d == 2:
                    perp = np.stack([-dirs[:, 1], dirs[:, 0]], axis=1)
                    sin_half = math.sqrt(max(0.0, 1 - cos_half * cos_half))
                    normals = np.concatenate([cos_half * dirs + sin_half * perp,
                                              cos_half * dirs - sin_half * perp])
                    inside = (region @ normals.T) <= r_prime * (1 + 1e-9)
                else:
                    rel = apexes[:, None, :] - region[None, :, :]
                    axial = np.einsum("kjd,kd->kj", rel, dirs)
                    dist = np.linalg.norm(rel, axis=2)
                    sin_beta = r_prime / apex_dist
                    inside = axial >= dist * math.sqrt(1 - sin_beta ** 2) - 1e-9 * r_prime
                ok = bool(inside.all())
                self.trace.note("sector_containment", ok)
                if not ok:
                    self.fail("sector_containment", f"certified ball leaves a sector at annulus {index}")
            # |f(x) - f(Z)| <= l(x) + eps on the certified region and the new piece
            ramp_region = region @ Wl.T + bl  # (n_region, n)
            dev = np.abs(f_region[:, None, :] - f_apex[None, :, :])
            ok_k = np.all(dev <= ramp_region[:, :, None] + self.eps * (1 + 1e-12), axis=(0, 2))
            dev_far = np.abs(f_far - f_apex[:, None, :])
            ok_k &= np.all(dev_far <= ramp_far[:, :, None] + self.eps * (1 + 1e-12), axis=(1, 2))
            ok = bool(ok_k.all())
            self.trace.note("linear_bounds", ok)
            if not ok:
                bad = int(np.argmin(ok_k))
                self.fail("linear_bounds",
                          f"target escapes the ramp bounds at annulus {index}, step {bad}: "
                          "the modulus does not hold for this target",
                          apex=apexes[bad].tolist())

        # append min(f(Z) + l, .) then max(f(Z) - l, .) for every step
        m = f_apex.shape[1]
        Wrep = np.repeat(Wl[:, None, :], m, axis=1)
        W = np.empty((2 * n, m, self.d))
        W[0::2] = Wrep
        W[1::2] = -Wrep
        b = np.empty((2 * n, m))
        b[0::2] = f_apex + bl[:, None]
        b[1::2] = f_apex - bl[:, None]
        ops = np.tile([False, True], n)
        self.W_blocks.append(W)
        self.b_blocks.append(b)
        self.op_blocks.append(ops)
        self.length += 2 * n
        if self.length > MAX_LENGTH:
            raise GeometryError(f"string length exceeded {MAX_LENGTH}", {"length": self.length})
        self.trace.annuli.append(AnnulusRecord(index, r, r_prime, n, self.length, step_width))

    def run(self):
        t0 = time.perf_counter()
        R = self.ball.radius
        f0 = self.target(np.zeros((1, self.d)))[0]
        self.trace.d_out = f0.size
        seed = MaxMinString.constant(f0, self.d)
        r = self.w
        index = 0
        while r < R:
            if self.d == 1:
                rp = r + self.reach_cap
                dirs = np.array([[1.0], [-1.0]])
                self.run_increment(index, r, dirs, rp, r, 0.0, rp, self.reach_cap)
            else:
                step_w = _annulus_width(r, self.w, self.reach_cap, self.increment)
                if not step_w > 0:
                    raise GeometryError(f"no admissible step width at r={r}", {"r": r})
                cover = cover_boundary(r, step_w, self.d, overlap=self.overlap, increment=self.increment)
                if cover.densified:
                    self.trace.log.append(f"annulus {index}: densified cover {cover.densified}x")
                geom = annulus_chord_geometry(r, step_w, self.d, self.increment)
                self.trace.note("coverage", True)
                rp = geom.r_prime
                self.run_increment(index, r, cover.directions, geom.apex_distance,
                                   geom.chord_distance, 0.5 * step_w, rp, step_w)
            if not rp > r:
                raise GeometryError(f"radius failed to increase at r={r}", {"r": r})
            r = rp
            index += 1
        if self.W_blocks:
            g = seed.extended_by(
                np.concatenate(self.W_blocks), np.concatenate(self.b_blocks),
                np.concatenate(self.op_blocks),
            )
        else:
            g = seed
        self.trace.total_length = g.length
        self.trace.wall_clock = time.perf_counter() - t0
        return g.shifted(self.ball.center)


def build(f, spec, domain, eps: float, *, increment: float = INCREMENT, overlap: float = OVERLAP,
          strict: bool | None = None, check_samples: bool = True):
    """Max-min string that eps-approximates ``f`` on the ball enclosing ``domain``.

    ``f`` maps an ``(n, d_in)`` array to ``(n, d_out)`` (or ``(n,)``) and must
    be defined, with the modulus ``spec`` valid, on that ball inflated by
    ``2 omega^-1(eps)``: apexes of the outermost steps sit just outside it.
    ``strict`` (default: on for analytic moduli) turns failed per-step checks
    into ``GeometryError``; otherwise they are logged in the trace.
    Returns ``(string, trace)``.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    ball = enclosing_ball(domain)
    if ball.dim not in (1, 2, 3):
        raise ValueError(f"the builder supports d_in in (1, 2, 3), got {ball.dim}")
    b = _Builder(f, spec, ball, eps, None, increment, overlap, strict, check_samples)
    g = b.run()
    log.info("built string of length %d in %d increments (%.2fs)",
             g.length, len(b.trace.annuli), b.trace.wall_clock)
    return g, b.trace


def grid_error(f, g: MaxMinString, points, chunk: int = 1 << 16) -> np.ndarray:
    """Per-point sup-norm error ``|f - g|_inf`` on ``points``."""
    out = np.empty(len(points))
    for i in range(0, len(points), chunk):
        p = points[i:i + chunk]
        fv = _eval_target(f, p)
        out[i:i + chunk] = np.max(np.abs(fv - eval_string(g, p)), axis=1)
    return out


def grid_slack(spec, h: float) -> float:
    """Allowance ``omega(h)`` between grid sup-error and the continuum sup-error."""
    return modulus(spec, h)
