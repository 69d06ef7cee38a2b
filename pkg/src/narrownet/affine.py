"""Affine maps and max-min strings.

A max-min string of length ``L`` is the left-nested expression::

    g = s_{L-1}(l_L, s_{L-2}(l_{L-1}, ..., s_1(l_1, l_2)...))

with each ``s_i`` a coordinate-wise max or min. It is stored flat as a
stacked weight tensor of shape ``(L, d_out, d_in)``, offsets ``(L, d_out)``
and one max/min flag per combining operation.
"""

from __future__ import annotations

import json
from collections.abc import Iterable, Sequence
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DimensionError, SchemaError

MAX = "max"
MIN = "min"

ABS_TOL = 1e-9
REL_TOL = 1e-9


def _frozen(a, dtype=np.float64):
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class AffineMap:
    """The map ``x -> weights @ x + offset``."""

    weights: np.ndarray
    offset: np.ndarray

    def __post_init__(self):
        W = _frozen(self.weights)
        b = _frozen(self.offset)
        if W.ndim != 2:
            raise DimensionError(f"weights must be a matrix, got shape {W.shape}")
        if b.shape != (W.shape[0],):
            raise DimensionError(
                f"offset has shape {b.shape}, expected ({W.shape[0]},)"
            )
        object.__setattr__(self, "weights", W)
        object.__setattr__(self, "offset", b)

    @property
    def rows(self) -> int:
        return self.weights.shape[0]

    @property
    def cols(self) -> int:
        return self.weights.shape[1]

    @classmethod
    def constant(cls, value, cols: int) -> AffineMap:
        value = np.atleast_1d(np.asarray(value, dtype=np.float64))
        return cls(np.zeros((value.size, cols)), value)

    @classmethod
    def identity(cls, n: int) -> AffineMap:
        return cls(np.eye(n), np.zeros(n))

    def __call__(self, x):
        return eval_affine(self, x)

    def compose(self, inner: AffineMap) -> AffineMap:
        """Return ``self o inner``."""
        if inner.rows != self.cols:
            raise DimensionError(f"cannot compose {self.rows}x{self.cols} after {inner.rows}x{inner.cols}")
        return AffineMap(self.weights @ inner.weights, self.weights @ inner.offset + self.offset)

    def operator_norm(self) -> float:
        if self.weights.size == 0:
            return 0.0
        return float(np.linalg.norm(self.weights, 2))

    def __eq__(self, other):
        if not isinstance(other, AffineMap):
            return NotImplemented
        return (
            self.weights.shape == other.weights.shape
            and np.array_equal(self.weights, other.weights)
            and np.array_equal(self.offset, other.offset)
        )

    def __hash__(self):
        return hash((self.weights.tobytes(), self.offset.tobytes()))


def eval_affine(m: AffineMap, x) -> np.ndarray:
    """Evaluate ``m`` at a vector (shape ``(cols,)``) or a batch (shape ``(n, cols)``)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1:] != (m.cols,) or x.ndim > 2:
        raise DimensionError(f"expected input of length {m.cols}, got shape {x.shape}")
    return x @ m.weights.T + m.offset


class MaxMinString:
    """Immutable max-min string over ``d_in`` inputs and ``d_out`` outputs."""

    __slots__ = ("is_max", "offsets", "weights")

    def __init__(self, weights, offsets, is_max):
        W = _frozen(weights)
        b = _frozen(offsets)
        flags = _frozen(np.asarray(is_max, dtype=bool).reshape(-1), dtype=bool)
        if W.ndim != 3:
            raise DimensionError(f"weights must have shape (L, d_out, d_in), got {W.shape}")
        L = W.shape[0]
        if L < 1:
            raise DimensionError("a max-min string needs at least one affine map")
        if b.shape != W.shape[:2]:
            raise DimensionError(f"offsets shape {b.shape} does not match weights {W.shape}")
        if flags.shape != (L - 1,):
            raise DimensionError(f"expected {L - 1} operations, got {flags.shape[0]}")
        self.weights = W
        self.offsets = b
        self.is_max = flags

    @classmethod
    def from_affines(cls, affines: Sequence[AffineMap], ops: Sequence[str]) -> MaxMinString:
        if not affines:
            raise DimensionError("a max-min string needs at least one affine map")
        shape = affines[0].weights.shape
        for a in affines:
            if a.weights.shape != shape:
                raise DimensionError("all affine maps of a string must share d_in and d_out")
        flags = []
        for op in ops:
            if op not in (MAX, MIN):
                raise ValueError(f"unknown operation {op!r}")
            flags.append(op == MAX)
        return cls(
            np.stack([a.weights for a in affines]),
            np.stack([a.offset for a in affines]),
            np.array(flags, dtype=bool),
        )

    @classmethod
    def constant(cls, value, d_in: int) -> MaxMinString:
        value = np.atleast_1d(np.asarray(value, dtype=np.float64))
        return cls(np.zeros((1, value.size, d_in)), value[None, :], np.zeros(0, dtype=bool))

    @property
    def length(self) -> int:
        return self.weights.shape[0]

    def __len__(self):
        return self.length

    @property
    def d_out(self) -> int:
        return self.weights.shape[1]

    @property
    def d_in(self) -> int:
        return self.weights.shape[2]

    @property
    def affines(self) -> list[AffineMap]:
        return [AffineMap(W, b) for W, b in zip(self.weights, self.offsets)]

    @property
    def ops(self) -> list[str]:
        return [MAX if f else MIN for f in self.is_max]

    def affine(self, i: int) -> AffineMap:
        return AffineMap(self.weights[i], self.offsets[i])

    def __call__(self, x):
        return eval_string(self, x)

    def appended(self, pieces: Iterable[tuple[str, AffineMap]]) -> MaxMinString:
        """Return ``s_k(l_k, ... s_1(l_1, self))`` for ``pieces = [(s_1, l_1), ...]``."""
        pieces = list(pieces)
        if not pieces:
            return self
        W = np.stack([a.weights for _, a in pieces])
        b = np.stack([a.offset for _, a in pieces])
        flags = np.array([op == MAX for op, _ in pieces], dtype=bool)
        return self.extended_by(W, b, flags)

    def extended_by(self, weights, offsets, is_max) -> MaxMinString:
        weights = np.asarray(weights, dtype=np.float64)
        if weights.shape[1:] != self.weights.shape[1:]:
            raise DimensionError("appended affine maps have the wrong shape")
        return MaxMinString(
            np.concatenate([self.weights, weights]),
            np.concatenate([self.offsets, np.asarray(offsets, dtype=np.float64)]),
            np.concatenate([self.is_max, np.asarray(is_max, dtype=bool)]),
        )

    def shifted(self, x0) -> MaxMinString:
        """Precompose every affine map with ``x -> x - x0``; the result is ``x -> g(x - x0)``."""
        x0 = np.asarray(x0, dtype=np.float64)
        if x0.shape != (self.d_in,):
            raise DimensionError(f"shift must have length {self.d_in}")
        return MaxMinString(self.weights, self.offsets - self.weights @ x0, self.is_max)

    def __eq__(self, other):
        if not isinstance(other, MaxMinString):
            return NotImplemented
        return (
            self.weights.shape == other.weights.shape
            and np.array_equal(self.weights, other.weights)
            and np.array_equal(self.offsets, other.offsets)
            and np.array_equal(self.is_max, other.is_max)
        )

    __hash__ = None

    def __repr__(self):
        return f"MaxMinString(length={self.length}, d_in={self.d_in}, d_out={self.d_out})"


def eval_string(g: MaxMinString, x, backend=None) -> np.ndarray:
    """Evaluate ``g`` at a single point ``(d_in,)`` or a batch ``(n, d_in)``."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    pts = x[None, :] if single else x
    if pts.ndim != 2 or pts.shape[1] != g.d_in:
        raise DimensionError(f"expected points of dimension {g.d_in}, got shape {x.shape}")
    out = kernels.eval_string_batch(g.weights, g.offsets, g.is_max, pts, backend=backend)
    return out[0] if single else out


def lipschitz_bound(g: MaxMinString) -> float:
    """Largest operator 2-norm among the linear parts; bounds Lip(g) in the Euclidean norm."""
    if not np.any(g.weights):
        return 0.0
    # batched spectral norms; d_out x d_in blocks are tiny
    norms = np.linalg.norm(g.weights, ord=2, axis=(1, 2))
    return float(norms.max())


def isclose(a, b, abs_tol=ABS_TOL, rel_tol=REL_TOL):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return np.abs(a - b) <= abs_tol + rel_tol * np.maximum(np.abs(a), np.abs(b))


# -- serialization -----------------------------------------------------------

def _check_finite(arr, what):
    if not np.all(np.isfinite(arr)):
        raise SchemaError(f"{what} contains non-finite numbers")


def string_to_dict(g: MaxMinString) -> dict:
    _check_finite(g.weights, "weights")
    _check_finite(g.offsets, "offsets")
    return {
        "version": 1,
        "d_in": g.d_in,
        "d_out": g.d_out,
        "affines": [{"W": W.tolist(), "b": b.tolist()} for W, b in zip(g.weights, g.offsets)],
        "ops": g.ops,
    }


def string_from_dict(data: dict) -> MaxMinString:
    try:
        if data.get("version") != 1:
            raise SchemaError(f"unsupported string version {data.get('version')!r}")
        d_in, d_out = int(data["d_in"]), int(data["d_out"])
        affines = data["affines"]
        ops = data["ops"]
    except (KeyError, TypeError, AttributeError) as exc:
        raise SchemaError(f"malformed string document: {exc}") from None
    if not isinstance(affines, list) or not affines:
        raise SchemaError("string needs a non-empty 'affines' list")
    if not isinstance(ops, list) or len(ops) != len(affines) - 1:
        raise SchemaError("'ops' must have exactly one entry fewer than 'affines'")
    if any(op not in (MAX, MIN) for op in ops):
        raise SchemaError("'ops' entries must be 'max' or 'min'")
    try:
        W = np.array([a["W"] for a in affines], dtype=np.float64)
        b = np.array([a["b"] for a in affines], dtype=np.float64)
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"malformed affine entry: {exc}") from None
    if W.shape != (len(affines), d_out, d_in) or b.shape != (len(affines), d_out):
        raise SchemaError(f"affine shapes do not match d_in={d_in}, d_out={d_out}")
    return MaxMinString(W, b, np.array([op == MAX for op in ops], dtype=bool))


def dumps_string(g: MaxMinString) -> str:
    # json emits repr() floats, which round-trip exactly
    return json.dumps(string_to_dict(g), separators=(",", ":"), allow_nan=False)


def loads_string(text: str) -> MaxMinString:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"not valid JSON: {exc}") from None
    return string_from_dict(data)
