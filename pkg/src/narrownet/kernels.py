"""Backend selection for the hot loops.

The compiled extension is used when it was built; otherwise the numpy
fallback is loaded. Set ``NARROWNET_PURE_PYTHON=1`` to force the fallback.
"""

import os

import numpy as np

from . import _fallback

BACKEND = "python"
_impl = _fallback

if os.environ.get("NARROWNET_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        _compiled = None
    else:
        _impl = _compiled
        BACKEND = "cython"
else:
    _compiled = None


def compiled_available():
    return _compiled is not None


def _backend(name):
    if name is None:
        return _impl
    if name == "python":
        return _fallback
    if name == "cython":
        if _compiled is None:
            raise RuntimeError("compiled kernels are not built")
        return _compiled
    raise ValueError(f"unknown backend {name!r}")


def eval_string_batch(weights, offsets, is_max, points, backend=None):
    impl = _backend(backend)
    return impl.eval_string_batch(
        np.ascontiguousarray(weights, dtype=np.float64),
        np.ascontiguousarray(offsets, dtype=np.float64),
        np.ascontiguousarray(is_max, dtype=np.uint8),
        np.ascontiguousarray(points, dtype=np.float64),
    )


def forward_batch(wflat, bflat, shapes, points, backend=None):
    impl = _backend(backend)
    return impl.forward_batch(
        np.ascontiguousarray(wflat, dtype=np.float64),
        np.ascontiguousarray(bflat, dtype=np.float64),
        np.ascontiguousarray(shapes, dtype=np.int64),
        np.ascontiguousarray(points, dtype=np.float64),
    )
