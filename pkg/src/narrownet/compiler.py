"""Lower a max-min string to a ReLU net whose hidden layers all have width d_in + d_out.

The net carries the (shifted) input alongside the running value ``y``.
Each combining step ``y <- s(y, l_j(x))`` is realised as ``B_j^-1 o ReLU o B_j``
with the invertible maps::

    B_j(x, y) = (x,  y - l_j(x))   for max
    B_j(x, y) = (x, -y + l_j(x))   for min

because ``relu(y - l) + l = max(y, l)`` and ``l - relu(l - y) = min(y, l)``.
The input part passes through every ReLU unchanged once it has been shifted
into the positive orthant; adjacent ``B_{j+1} o B_j^-1`` are merged into one
affine layer.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .affine import AffineMap, MaxMinString, eval_string
from .domain import Ball
from .errors import CompilationError, DimensionError
from .net import ReluNet, forward

POSITIVITY_MARGIN = 1e-6


@dataclass(frozen=True)
class CompilationPlan:
    input_shift: np.ndarray
    constants: np.ndarray
    domain: Ball
    signs: np.ndarray = field(repr=False)


def _row_lower_bounds(g: MaxMinString, ball: Ball) -> np.ndarray:
    """Minimum of every output row of every affine map over ``ball``, shape (L, d_out)."""
    at_center = g.weights @ ball.center + g.offsets
    return at_center - ball.radius * np.linalg.norm(g.weights, axis=2)


def plan_compilation(g: MaxMinString, domain: Ball) -> CompilationPlan:
    if domain.dim != g.d_in:
        raise DimensionError(f"domain has dimension {domain.dim}, string expects {g.d_in}")
    shift = domain.radius - domain.center
    lower = _row_lower_bounds(g, domain)
    constants = np.maximum(0.0, -lower.min(axis=0)) + POSITIVITY_MARGIN
    if np.any(lower + constants < 0.0):
        raise CompilationError("shifted affine maps are not certified nonnegative on the domain")
    signs = np.where(g.is_max, 1.0, -1.0)
    return CompilationPlan(shift, constants, domain, signs)


def compile_string(g: MaxMinString, domain: Ball) -> ReluNet:
    """Net with ``g.length`` hidden layers of width ``d_in + d_out`` computing ``g`` on ``domain``."""
    plan = plan_compilation(g, domain)
    d, m = g.d_in, g.d_out
    n = d + m
    L = g.length
    s, C = plan.input_shift, plan.constants
    W, b = g.weights, g.offsets

    # l_j written in shifted coordinates and raised by C: W x~ + (b - W s + C)
    bt = b - W @ s + C
    eye_d, eye_m = np.eye(d), np.eye(m)
    layers = []

    lift = np.zeros((n, d))
    lift[:d] = eye_d
    lift[d:] = W[0]
    layers.append(AffineMap(lift, np.concatenate([s, b[0] + C])))

    if L >= 2:
        sg = plan.signs  # sign of s_{j-1} for affine index j = 1..L-1
        first = np.zeros((n, n))
        first[:d, :d] = eye_d
        first[d:, :d] = -sg[0] * W[1]
        first[d:, d:] = sg[0] * eye_m
        layers.append(AffineMap(first, np.concatenate([np.zeros(d), -sg[0] * bt[1]])))
        for j in range(1, L - 1):
            # B_{j+1} o B_j^-1 with affine indices j, j+1 (0-based)
            s_prev, s_next = sg[j - 1], sg[j]
            M = np.zeros((n, n))
            M[:d, :d] = eye_d
            M[d:, :d] = s_next * (W[j] - W[j + 1])
            M[d:, d:] = (s_next * s_prev) * eye_m
            layers.append(AffineMap(M, np.concatenate([np.zeros(d), s_next * (bt[j] - bt[j + 1])])))
        last = np.zeros((m, n))
        last[:, :d] = W[L - 1]
        last[:, d:] = sg[L - 2] * eye_m
        layers.append(AffineMap(last, bt[L - 1] - C))
    else:
        last = np.zeros((m, n))
        last[:, d:] = eye_m
        layers.append(AffineMap(last, -C))

    meta = {
        "provenance": "compiled max-min string",
        "string_length": L,
        "domain": domain.to_dict(),
    }
    return ReluNet(tuple(layers), meta)


@dataclass
class CompilationReport:
    max_deviation: float
    tolerance: float
    n_samples: int
    hidden_widths: list
    depth: int
    string_length: int
    expected_width: int

    @property
    def widths_ok(self) -> bool:
        return all(w == self.expected_width for w in self.hidden_widths)

    @property
    def depth_ok(self) -> bool:
        return self.depth == self.string_length

    @property
    def passed(self) -> bool:
        return self.max_deviation <= self.tolerance and self.widths_ok and self.depth_ok

    def as_dict(self):
        return {
            "max_deviation": self.max_deviation,
            "tolerance": self.tolerance,
            "n_samples": self.n_samples,
            "depth": self.depth,
            "string_length": self.string_length,
            "widths_ok": self.widths_ok,
            "depth_ok": self.depth_ok,
            "passed": self.passed,
        }


def verify_compilation(net: ReluNet, g: MaxMinString, domain: Ball, n_samples: int = 10_000,
                       rng=0, rel_tol: float = 1e-9) -> CompilationReport:
    """Compare ``net`` and ``g`` on random points of ``domain`` plus its center."""
    if net.d_in != g.d_in or net.d_out != g.d_out:
        raise DimensionError("net and string disagree on input/output dimension")
    pts = np.vstack([domain.center[None, :], domain.sample(max(n_samples - 1, 0), rng)])
    want = eval_string(g, pts)
    got = forward(net, pts)
    dev = float(np.max(np.abs(got - want))) if len(pts) else 0.0
    tol = rel_tol * (1.0 + float(np.max(np.abs(want))))
    return CompilationReport(
        max_deviation=dev,
        tolerance=tol,
        n_samples=len(pts),
        hidden_widths=net.hidden_widths,
        depth=net.depth,
        string_length=g.length,
        expected_width=g.d_in + g.d_out,
    )
