"""Moduli of continuity and their generalized inverses.

``inverse_modulus(spec, eps)`` is ``sup{delta : omega(delta) <= eps}``, the
largest input distance over which the target is guaranteed to move by at
most ``eps``. It sizes every geometric step of the builder.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .domain import Ball
from .errors import TargetEvaluationError, UnusableModulusError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Hoelder:
    """``omega(delta) = C * delta**alpha``."""

    C: float
    alpha: float = 1.0

    def __post_init__(self):
        if not self.C > 0:
            raise ValueError(f"Hoelder constant must be positive, got {self.C}")
        if not 0 < self.alpha <= 1:
            raise ValueError(f"Hoelder exponent must lie in (0, 1], got {self.alpha}")

    heuristic = False


def Lipschitz(L: float) -> Hoelder:
    """Lipschitz continuity is Hoelder continuity with exponent one."""
    return Hoelder(float(L), 1.0)


@dataclass(frozen=True)
class Empirical:
    """Observed oscillation ``osc[k]`` over pairs at distance ``<= deltas[k]``."""

    deltas: tuple
    oscillations: tuple
    safety: float = 0.9
    heuristic: bool = field(default=True, init=False)

    def __post_init__(self):
        d = np.asarray(self.deltas, dtype=np.float64)
        o = np.asarray(self.oscillations, dtype=np.float64)
        if d.shape != o.shape or d.ndim != 1 or d.size == 0:
            raise ValueError("deltas and oscillations must be equal-length nonempty sequences")
        if not 0 < self.safety < 1:
            raise ValueError(f"safety factor must lie in (0, 1), got {self.safety}")
        order = np.argsort(d)
        d, o = d[order], o[order]
        # omega is nondecreasing by definition; enforce it on the samples
        o = np.maximum.accumulate(o)
        object.__setattr__(self, "deltas", tuple(d.tolist()))
        object.__setattr__(self, "oscillations", tuple(o.tolist()))


ModulusSpec = Hoelder | Empirical


def inverse_modulus(spec, eps: float) -> float:
    if not eps > 0:
        raise ValueError(f"tolerance must be positive, got {eps}")
    if isinstance(spec, Hoelder):
        return (eps / spec.C) ** (1.0 / spec.alpha)
    if isinstance(spec, Empirical):
        d = np.asarray(spec.deltas)
        ok = np.asarray(spec.oscillations) <= eps
        if not ok.any():
            raise UnusableModulusError(
                f"no sampled distance has oscillation <= {eps}; smallest sample "
                f"delta={d[0]:.3g} already moves f by {spec.oscillations[0]:.3g}"
            )
        return spec.safety * float(d[ok].max())
    raise TypeError(f"unknown modulus spec {spec!r}")


def modulus(spec, delta: float) -> float:
    """Forward modulus ``omega(delta)``; used for grid slack."""
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    if isinstance(spec, Hoelder):
        return spec.C * delta ** spec.alpha
    if isinstance(spec, Empirical):
        d = np.asarray(spec.deltas)
        k = np.searchsorted(d, delta / spec.safety, side="left")
        if k >= d.size:
            return float(spec.oscillations[-1])
        return float(spec.oscillations[k])
    raise TypeError(f"unknown modulus spec {spec!r}")


def _evaluate(f, pts):
    vals = np.asarray(f(pts), dtype=np.float64)
    vals = vals.reshape(len(pts), -1)
    bad = ~np.all(np.isfinite(vals), axis=1)
    if bad.any():
        p = pts[np.argmax(bad)]
        raise TargetEvaluationError(f"target is not finite at {p.tolist()}", point=p)
    return vals


def estimate_modulus(f, ball: Ball, resolution: int = 1000, *, levels: int = 256,
                     pairs_per_level: int = 2000, safety: float = 0.9, rng=0) -> Empirical:
    """Scan ``|f(x) - f(y)|`` over point pairs on a geometric ladder of distances.

    Distances run from ``diam / resolution`` up to the ball diameter. In one
    dimension the pairs are taken from a regular grid; otherwise pairs are
    drawn at random inside the ball. Observed oscillation only lower-bounds
    the true modulus, which is why the inverse is scaled by ``safety``.
    """
    rng = np.random.default_rng(rng)
    diam = 2.0 * ball.radius
    if diam == 0:
        return Empirical((1.0,), (0.0,), safety)
    deltas = np.geomspace(diam / resolution, diam, levels)
    d = ball.dim
    osc = np.zeros(levels)
    if d == 1:
        lo, hi = ball.center[0] - ball.radius, ball.center[0] + ball.radius
        for k, delta in enumerate(deltas):
            n = max(int(np.ceil((hi - lo - delta) / diam * resolution)) + 1, 2)
            x = np.linspace(lo, hi - delta, n)[:, None]
            fx = _evaluate(f, x)
            fy = _evaluate(f, x + delta)
            osc[k] = np.max(np.abs(fx - fy))
    else:
        for k, delta in enumerate(deltas):
            x = ball.sample(pairs_per_level, rng)
            u = rng.normal(size=x.shape)
            u /= np.linalg.norm(u, axis=1, keepdims=True)
            y = x + delta * u
            keep = ball.contains(y)
            if delta >= diam * (1 - 1e-12):
                # only antipodal pairs fit at the full diameter
                x = ball.center + ball.radius * u
                y = ball.center - ball.radius * u
                keep = np.ones(len(x), dtype=bool)
            if not keep.any():
                continue
            fx = _evaluate(f, x[keep])
            fy = _evaluate(f, y[keep])
            osc[k] = np.max(np.abs(fx - fy))
    log.debug("estimated modulus on %d levels, max oscillation %.3g", levels, osc.max())
    return Empirical(tuple(deltas.tolist()), tuple(osc.tolist()), safety)


def spec_to_dict(spec) -> dict:
    if isinstance(spec, Hoelder):
        return {"kind": "hoelder", "C": spec.C, "alpha": spec.alpha}
    return {"kind": "empirical", "safety": spec.safety, "levels": len(spec.deltas)}
