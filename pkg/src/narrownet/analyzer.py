"""Lower-bound analysis for ReLU nets whose hidden layers are all d_in wide.

On the region ``S_N`` where every pre-activation is strictly positive, each
ReLU is the identity and the net is one affine map. If the sphere ``C'``
(the mid level set of the quadratic witness) sits inside ``S_N``, that
affine map has to miss the witness by at least ``|a - b| / 4`` somewhere on
the level sphere or the center, and the bound is computed exactly
(case 1). Otherwise some point of ``C'`` leaves ``S_N``; that point is
reported as the witness (case 2) together with a sampled error estimate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .affine import AffineMap
from .domain import fibonacci_sphere, sphere_directions
from .errors import OutOfScopeNetError
from .net import ReluNet, forward

DEFAULT_TOL = 1e-9
CASE1_THRESHOLD = 1.0 / 16.0


@dataclass(frozen=True)
class Polyhedron:
    """Open polyhedron ``{x : normals @ x + offsets > 0}``.

    ``layer`` records which hidden layer produced each halfspace, so the
    region ``S_j`` after ``j`` hidden layers is the prefix ``layer < j``.
    """

    normals: np.ndarray
    offsets: np.ndarray
    layer: np.ndarray = field(default=None)

    def __post_init__(self):
        A = np.asarray(self.normals, dtype=np.float64)
        b = np.asarray(self.offsets, dtype=np.float64).reshape(-1)
        if A.ndim != 2 or A.shape[0] != b.size:
            raise ValueError("normals must be (n, d) with one offset per row")
        layer = np.zeros(b.size, dtype=np.int64) if self.layer is None else np.asarray(self.layer, dtype=np.int64)
        object.__setattr__(self, "normals", A)
        object.__setattr__(self, "offsets", b)
        object.__setattr__(self, "layer", layer)

    @classmethod
    def empty_constraints(cls, dim: int) -> Polyhedron:
        return cls(np.zeros((0, dim)), np.zeros(0))

    def __len__(self):
        return self.offsets.size

    @property
    def dim(self) -> int:
        return self.normals.shape[1]

    def prefix(self, n_layers: int) -> Polyhedron:
        keep = self.layer < n_layers
        return Polyhedron(self.normals[keep], self.offsets[keep], self.layer[keep])

    def margins(self, x) -> np.ndarray:
        """``a . x + b`` for every point (rows) and halfspace (columns)."""
        return np.atleast_2d(np.asarray(x, dtype=np.float64)) @ self.normals.T + self.offsets

    def contains(self, x, tol: float = 0.0) -> np.ndarray:
        m = self.margins(x)
        return np.all(m > tol, axis=1) if m.shape[1] else np.ones(m.shape[0], dtype=bool)


def check_width(net: ReluNet, d_in: int | None = None) -> None:
    d = net.d_in if d_in is None else d_in
    if net.d_in != d:
        raise OutOfScopeNetError(f"net input dimension {net.d_in} differs from {d}")
    bad = [w for w in net.hidden_widths if w != d]
    if bad:
        raise OutOfScopeNetError(
            f"{len(bad)} of {len(net.hidden_widths)} hidden layers have width other than d_in={d} "
            f"(widths seen: {sorted(set(net.hidden_widths))})"
        )


def all_positive_region(net: ReluNet, d_in: int | None = None) -> tuple[Polyhedron, AffineMap]:
    """Halfspaces of ``S_N`` (one per hidden neuron) and the net's affine form on it."""
    check_width(net, d_in)
    d = net.d_in
    W = np.eye(d)
    b = np.zeros(d)
    normals, offsets, layer = [], [], []
    for j, A in enumerate(net.layers[:-1]):
        W = A.weights @ W
        b = A.weights @ b + A.offset
        normals.append(W)
        offsets.append(b)
        layer.append(np.full(len(b), j))
    last = net.layers[-1]
    restriction = AffineMap(last.weights @ W, last.weights @ b + last.offset)
    if normals:
        poly = Polyhedron(np.vstack(normals), np.concatenate(offsets), np.concatenate(layer))
    else:
        poly = Polyhedron.empty_constraints(d)
    return poly, restriction


def sphere_in_polyhedron(center, radius: float, poly: Polyhedron, tol: float = DEFAULT_TOL) -> bool:
    """True iff the closed sphere lies in ``poly`` with clearance ``tol``."""
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    if len(poly) == 0:
        return True
    c = np.asarray(center, dtype=np.float64)
    clearance = poly.normals @ c + poly.offsets - radius * np.linalg.norm(poly.normals, axis=1)
    return bool(np.all(clearance >= tol))


@dataclass(frozen=True)
class WitnessInstance:
    """``f(x) = |x - center|^2`` with ``center = (1/2, ..., 1/2)``.

    ``A`` is the level sphere ``f = a``, ``y = center`` has ``f(y) = b``, and
    ``C'`` is the level sphere at the midpoint ``c = (a + b) / 2``.
    """

    d_in: int
    a: float = 0.25

    @property
    def center(self) -> np.ndarray:
        return np.full(self.d_in, 0.5)

    def f(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        return ((x - 0.5) ** 2).sum(axis=1)

    @property
    def b(self) -> float:
        return float(self.f(self.center)[0])

    @property
    def c(self) -> float:
        return 0.5 * (self.a + self.b)

    @property
    def radius_a(self) -> float:
        return math.sqrt(self.a)

    @property
    def radius_c(self) -> float:
        return math.sqrt(self.c)

    @property
    def threshold(self) -> float:
        return abs(self.a - self.b) / 4.0

    def sphere_points(self, radius: float, n: int | None = None, rng=0) -> np.ndarray:
        """Scan points on the sphere of ``radius`` about the center."""
        d = self.d_in
        if d == 1:
            dirs = np.array([[1.0], [-1.0]])
        elif d == 2:
            n = 360 if n is None else n
            t = 2.0 * math.pi * np.arange(n) / n
            dirs = np.stack([np.cos(t), np.sin(t)], axis=1)
        elif d == 3:
            dirs = fibonacci_sphere(2000 if n is None else n)
        else:
            dirs = sphere_directions(4000 if n is None else n, d, rng)
        return self.center + radius * dirs


@dataclass
class Certificate:
    case: int
    bound: float | None
    threshold: float
    witness: list | None
    halfspace_count: int
    rank_deficient: bool
    sampled_error: float
    diagnosis: str
    restriction: dict | None = None

    @property
    def certified(self) -> bool:
        return self.case == 1 and self.bound is not None and self.bound >= self.threshold - 1e-6

    def as_dict(self) -> dict:
        return {
            "case": self.case,
            "bound": self.bound,
            "threshold": self.threshold,
            "certified": self.certified,
            "witness": self.witness,
            "halfspace_count": self.halfspace_count,
            "rank_deficient": self.rank_deficient,
            "sampled_error": self.sampled_error,
            "diagnosis": self.diagnosis,
        }


def _rank_deficient(net: ReluNet) -> bool:
    return any(np.linalg.matrix_rank(A.weights) < min(A.rows, A.cols) for A in net.layers)


def sampled_error(net: ReluNet, witness: WitnessInstance, n: int | None = None) -> float:
    """``max |f - f_N|`` over scan points of ``A`` and the interior point ``y``."""
    pts = np.vstack([witness.center[None, :], witness.sphere_points(witness.radius_a, n)])
    return float(np.max(np.abs(witness.f(pts) - forward(net, pts)[:, 0])))


def certify_lower_bound(net: ReluNet, witness: WitnessInstance | None = None,
                        tol: float = DEFAULT_TOL) -> Certificate:
    """Run the two-case analysis of ``net`` against the quadratic witness."""
    if net.d_out != 1:
        raise OutOfScopeNetError(f"lower-bound analysis needs d_out = 1, got {net.d_out}")
    witness = WitnessInstance(net.d_in) if witness is None else witness
    poly, restriction = all_positive_region(net, witness.d_in)
    rank_def = _rank_deficient(net)
    err = sampled_error(net, witness)
    centre, rc = witness.center, witness.radius_c

    # sampled pre-scan, then the exact halfspace test
    scan = witness.sphere_points(rc)
    outside = None
    if len(poly):
        m = poly.margins(scan).min(axis=1)
        if m.min() < tol:
            outside = scan[int(np.argmin(m))]
    if outside is None and not sphere_in_polyhedron(centre, rc, poly, tol):
        norms = np.linalg.norm(poly.normals, axis=1)
        clearance = poly.normals @ centre + poly.offsets - rc * norms
        k = int(np.argmin(clearance))
        nk = norms[k]
        outside = centre - rc * poly.normals[k] / nk if nk > 0 else scan[0]

    if outside is not None:
        return Certificate(
            case=2, bound=None, threshold=witness.threshold, witness=outside.tolist(),
            halfspace_count=len(poly), rank_deficient=rank_def, sampled_error=err,
            diagnosis=("a point of the mid-level sphere leaves the all-positive region, so the level "
                       "set of the net through it is unbounded; the lower bound holds by that argument "
                       "but is not numerically certified here"),
        )

    u = restriction.weights[0]
    v = float(restriction.offset[0])
    f_center = float(u @ centre + v)
    spread = rc * float(np.linalg.norm(u))
    lo, hi = f_center - spread, f_center + spread
    c = witness.c
    bound = max(abs(f_center - witness.b), abs(lo - c), abs(hi - c))
    return Certificate(
        case=1, bound=bound, threshold=witness.threshold, witness=None,
        halfspace_count=len(poly), rank_deficient=rank_def, sampled_error=err,
        diagnosis="mid-level sphere lies in the all-positive region; the net is affine there",
        restriction={"W": u.tolist(), "b": v},
    )
