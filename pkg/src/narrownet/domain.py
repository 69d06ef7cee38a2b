"""Compact domains: balls, boxes, sampling and verification grids."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError


@dataclass(frozen=True, eq=False)
class Ball:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        c = np.array(self.center, dtype=np.float64).reshape(-1)
        c.setflags(write=False)
        r = float(self.radius)
        if not np.isfinite(r) or r < 0:
            raise ValueError(f"ball radius must be finite and nonnegative, got {r}")
        if not np.all(np.isfinite(c)):
            raise ValueError("ball center must be finite")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "radius", r)

    @property
    def dim(self) -> int:
        return self.center.size

    def contains(self, x, tol=1e-12):
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        return np.linalg.norm(x - self.center, axis=1) <= self.radius + tol

    def sample(self, n: int, rng=None) -> np.ndarray:
        """Uniform samples from the closed ball."""
        rng = np.random.default_rng(rng)
        d = self.dim
        u = rng.normal(size=(n, d))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        rad = self.radius * rng.random(n) ** (1.0 / d)
        return self.center + u * rad[:, None]

    def to_dict(self):
        return {"center": self.center.tolist(), "radius": self.radius}

    @classmethod
    def from_dict(cls, data):
        return cls(data["center"], data["radius"])

    def __eq__(self, other):
        if not isinstance(other, Ball):
            return NotImplemented
        return np.array_equal(self.center, other.center) and self.radius == other.radius

    __hash__ = None


@dataclass(frozen=True, eq=False)
class Box:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.array(self.lo, dtype=np.float64).reshape(-1)
        hi = np.array(self.hi, dtype=np.float64).reshape(-1)
        if lo.shape != hi.shape:
            raise DimensionError("box bounds must have equal length")
        if np.any(hi < lo):
            raise ValueError("box upper bounds must not be below lower bounds")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self) -> int:
        return self.lo.size

    def enclosing_ball(self) -> Ball:
        center = 0.5 * (self.lo + self.hi)
        return Ball(center, 0.5 * float(np.linalg.norm(self.hi - self.lo)))

    def grid(self, n_per_dim: int) -> tuple[np.ndarray, float]:
        """Tensor grid with ``n_per_dim`` points per axis; returns ``(points, h)``
        with ``h`` the largest axis spacing."""
        axes = [np.linspace(a, b, n_per_dim) for a, b in zip(self.lo, self.hi)]
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=1)
        spacing = (self.hi - self.lo) / max(n_per_dim - 1, 1)
        return pts, float(spacing.max())

    def sample(self, n: int, rng=None) -> np.ndarray:
        rng = np.random.default_rng(rng)
        return self.lo + (self.hi - self.lo) * rng.random((n, self.dim))


def enclosing_ball(domain) -> Ball:
    """Ball containing ``domain`` (a Ball, a Box, or an ``(n, d)`` point cloud)."""
    if isinstance(domain, Ball):
        return domain
    if isinstance(domain, Box):
        return domain.enclosing_ball()
    pts = np.atleast_2d(np.asarray(domain, dtype=np.float64))
    return Box(pts.min(axis=0), pts.max(axis=0)).enclosing_ball()


def sphere_directions(n: int, d: int, rng=None) -> np.ndarray:
    """Near-uniform unit vectors: evenly spaced in 1-D/2-D, Fibonacci lattice in 3-D,
    random beyond."""
    if d == 1:
        base = np.array([[1.0], [-1.0]])
        return np.resize(base, (n, 1))
    if d == 2:
        t = 2.0 * np.pi * np.arange(n) / n
        return np.stack([np.cos(t), np.sin(t)], axis=1)
    if d == 3:
        return fibonacci_sphere(n)
    rng = np.random.default_rng(rng)
    u = rng.normal(size=(n, d))
    return u / np.linalg.norm(u, axis=1, keepdims=True)


def fibonacci_sphere(n: int) -> np.ndarray:
    """``n`` points of the spherical Fibonacci lattice on the unit 2-sphere."""
    i = np.arange(n, dtype=np.float64) + 0.5
    z = 1.0 - 2.0 * i / n
    rho = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    phi = np.pi * (3.0 - np.sqrt(5.0)) * i
    return np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=1)
