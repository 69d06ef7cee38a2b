"""Exact max-min strings through finitely many labelled points.

Points are peeled off the convex hull one extreme point at a time. Going
back up, each peeled point ``s0`` is patched in with::

    g <- max(min(g, f(s0) + l), f(s0) - l)

where ``l`` vanishes at ``s0`` and is at least ``t`` at every point still on
the hull, with ``t`` large enough that both clamps are inert there.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .affine import MaxMinString, eval_string
from .errors import DegenerateConfigurationError, DimensionError

TIE_TOL = 1e-12
MAX_REDRAWS = 64


@dataclass(frozen=True)
class LabeledPointSet:
    points: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=np.float64))
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim == 1:
            vals = vals[:, None]
        if pts.shape[0] != vals.shape[0]:
            raise DimensionError("points and values must have the same count")
        if pts.shape[0] == 0:
            raise DimensionError("need at least one point")
        if pts.shape[0] > 1:
            diff = pts[:, None, :] - pts[None, :, :]
            dist = np.sqrt((diff ** 2).sum(axis=2))
            np.fill_diagonal(dist, np.inf)
            if not dist.min() > 0:
                i, j = np.unravel_index(np.argmin(dist), dist.shape)
                raise DegenerateConfigurationError(f"points {i} and {j} coincide")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "values", vals)

    @property
    def d_in(self) -> int:
        return self.points.shape[1]

    @property
    def d_out(self) -> int:
        return self.values.shape[1]

    def __len__(self):
        return self.points.shape[0]


def _unit_vector(d, rng):
    v = rng.normal(size=d)
    return v / np.linalg.norm(v)


def _strict_argmax(dots):
    order = np.argsort(dots)
    if dots.size == 1:
        return int(order[-1])
    scale = max(1.0, float(np.max(np.abs(dots))))
    if dots[order[-1]] - dots[order[-2]] <= TIE_TOL * scale:
        return None
    return int(order[-1])


def find_extreme(points, functional=None, rng=0):
    """Return ``(index, functional)`` with ``points[index]`` the unique maximizer of the functional.

    The given functional is tried first; on a tie a fresh one is drawn from
    the unit sphere, up to ``MAX_REDRAWS`` times.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if pts.shape[0] == 0:
        raise DimensionError("need at least one point")
    rng = np.random.default_rng(rng)
    c = _unit_vector(pts.shape[1], rng) if functional is None else np.asarray(functional, dtype=np.float64)
    for _ in range(MAX_REDRAWS + 1):
        idx = _strict_argmax(pts @ c)
        if idx is not None:
            return idx, c
        c = _unit_vector(pts.shape[1], rng)
    raise DegenerateConfigurationError(f"no strict maximizer after {MAX_REDRAWS} functional redraws")


def extreme_point(points, functional=None, rng=0) -> int:
    return find_extreme(points, functional, rng)[0]


def separating_affine(points, s0_index: int, t: float, functional, d_out: int = 1):
    """Affine ``l`` with ``l(s0) = 0`` and every component ``>= t`` at the other points.

    ``s0`` must be the strict maximizer or the strict minimizer of
    ``functional`` over ``points``; either orientation is accepted.
    Returns an ``(W, b)`` pair with ``W`` of shape ``(d_out, d_in)``.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    c = np.asarray(functional, dtype=np.float64)
    if not t > 0:
        raise ValueError("t must be positive")
    dots = pts @ c
    at0 = dots[s0_index]
    others = np.delete(dots, s0_index)
    if others.size == 0:
        return np.zeros((d_out, pts.shape[1])), np.zeros(d_out)
    below = at0 - others
    scale = max(1.0, float(np.max(np.abs(dots))))
    if below.min() > TIE_TOL * scale:
        sign, gap = 1.0, below.min()
    elif (-below).min() > TIE_TOL * scale:
        sign, gap = -1.0, (-below).min()
    else:
        raise DegenerateConfigurationError("s0 does not strictly extremize the functional")
    # l(x) = t * sign * (c.s0 - c.x) / gap
    w = -sign * t / gap * c
    b0 = sign * t / gap * at0
    return np.tile(w, (d_out, 1)), np.full(d_out, b0)


def interpolate(data: LabeledPointSet, rng=0, check=True) -> MaxMinString:
    """Max-min string of length ``2|S| - 1`` reproducing ``data`` exactly (up to rounding)."""
    rng = np.random.default_rng(rng)
    pts, vals = data.points, data.values
    remaining = list(range(len(data)))
    peeled = []
    while len(remaining) > 1:
        sub = pts[remaining]
        idx, c = find_extreme(sub, None, rng)
        peeled.append((remaining[idx], c, list(remaining)))
        del remaining[idx]

    g = MaxMinString.constant(vals[remaining[0]], data.d_in)
    handled = [remaining[0]]
    for s0, c, level_set in reversed(peeled):
        f0 = vals[s0]
        at_handled = eval_string(g, pts[handled])
        t = 2.0 * float(np.max(np.abs(at_handled - f0))) + 1.0
        local = level_set.index(s0)
        W, b = separating_affine(pts[level_set], local, t, c, data.d_out)
        g = g.extended_by(
            np.stack([W, -W]),
            np.stack([f0 + b, f0 - b]),
            [False, True],  # min with f0 + l, then max with f0 - l
        )
        if check:
            after = eval_string(g, pts[handled])
            if not np.array_equal(after, at_handled):
                scale = 1e-12 * (1.0 + np.abs(at_handled).max())
                if np.max(np.abs(after - at_handled)) > scale:
                    raise DegenerateConfigurationError("patching a new point disturbed earlier points")
        handled.append(s0)
    return g
