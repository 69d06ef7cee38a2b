"""Feed-forward ReLU nets ``A_k o ReLU o ... o ReLU o A_1``."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import kernels
from .affine import AffineMap
from .errors import DimensionError, NumericError, SchemaError


@dataclass(frozen=True, eq=False)
class ReluNet:
    """Affine layers with a ReLU after every layer except the last.

    ``depth`` counts hidden layers (ReLU stages), so a net with ``k`` affine
    maps has depth ``k - 1`` and hidden widths ``rows`` of its first ``k - 1``
    layers.
    """

    layers: tuple[AffineMap, ...]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise DimensionError("a net needs at least one affine layer")
        for i in range(1, len(layers)):
            if layers[i].cols != layers[i - 1].rows:
                raise DimensionError(
                    f"layer {i} expects {layers[i].cols} inputs but layer {i - 1} "
                    f"produces {layers[i - 1].rows}"
                )
        object.__setattr__(self, "layers", layers)
        object.__setattr__(self, "meta", dict(self.meta))

    @property
    def d_in(self) -> int:
        return self.layers[0].cols

    @property
    def d_out(self) -> int:
        return self.layers[-1].rows

    @property
    def hidden_widths(self) -> list[int]:
        return [layer.rows for layer in self.layers[:-1]]

    @property
    def depth(self) -> int:
        return len(self.layers) - 1

    @cached_property
    def _packed(self):
        wflat = np.concatenate([layer.weights.ravel() for layer in self.layers])
        bflat = np.concatenate([layer.offset for layer in self.layers])
        shapes = np.array([layer.weights.shape for layer in self.layers], dtype=np.int64)
        return wflat, bflat, shapes

    def __call__(self, x):
        return forward(self, x)

    def __eq__(self, other):
        if not isinstance(other, ReluNet):
            return NotImplemented
        return self.layers == other.layers and self.meta == other.meta

    __hash__ = None

    def __repr__(self):
        return f"ReluNet(d_in={self.d_in}, d_out={self.d_out}, depth={self.depth})"


def forward(net: ReluNet, x, backend=None) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    pts = x[None, :] if single else x
    if pts.ndim != 2 or pts.shape[1] != net.d_in:
        raise DimensionError(f"expected inputs of dimension {net.d_in}, got shape {x.shape}")
    wflat, bflat, shapes = net._packed
    out, bad = kernels.forward_batch(wflat, bflat, shapes, pts, backend=backend)
    if bad >= 0:
        raise NumericError(f"non-finite value after layer {bad}", layer=int(bad))
    return out[0] if single else out


def lipschitz_upper_bound(net: ReluNet) -> float:
    """Product of the layers' operator norms (ReLU is 1-Lipschitz)."""
    return float(np.prod([layer.operator_norm() for layer in net.layers]))


def net_to_dict(net: ReluNet) -> dict:
    for i, layer in enumerate(net.layers):
        if not (np.all(np.isfinite(layer.weights)) and np.all(np.isfinite(layer.offset))):
            raise SchemaError(f"layer {i} contains non-finite numbers")
    return {
        "version": 1,
        "d_in": net.d_in,
        "d_out": net.d_out,
        "layers": [{"W": layer.weights.tolist(), "b": layer.offset.tolist()} for layer in net.layers],
        "meta": net.meta,
    }


def net_from_dict(data: dict) -> ReluNet:
    try:
        if data.get("version") != 1:
            raise SchemaError(f"unsupported net version {data.get('version')!r}")
        d_in, d_out = int(data["d_in"]), int(data["d_out"])
        raw = data["layers"]
        meta = data.get("meta", {})
    except (KeyError, TypeError, AttributeError) as exc:
        raise SchemaError(f"malformed net document: {exc}") from None
    if not isinstance(raw, list) or not raw:
        raise SchemaError("net needs a non-empty 'layers' list")
    layers = []
    for i, entry in enumerate(raw):
        try:
            W = np.array(entry["W"], dtype=np.float64)
            b = np.array(entry["b"], dtype=np.float64)
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"layer {i}: {exc}") from None
        if W.ndim != 2 or b.shape != (W.shape[0],):
            raise SchemaError(f"layer {i}: inconsistent W/b shapes {W.shape}, {b.shape}")
        layers.append(AffineMap(W, b))
    try:
        net = ReluNet(tuple(layers), meta)
    except DimensionError as exc:
        raise SchemaError(str(exc)) from None
    if net.d_in != d_in or net.d_out != d_out:
        raise SchemaError(
            f"declared dims ({d_in}, {d_out}) disagree with layers ({net.d_in}, {net.d_out})"
        )
    return net


def dumps_net(net: ReluNet) -> str:
    return json.dumps(net_to_dict(net), separators=(",", ":"), allow_nan=False, sort_keys=False)


def loads_net(text: str) -> ReluNet:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"not valid JSON: {exc}") from None
    return net_from_dict(data)
