"""Pure numpy versions of the compiled kernels (same signatures, same semantics)."""

import numpy as np


def eval_string_batch(weights, offsets, is_max, points):
    acc = points @ weights[0].T + offsets[0]
    for i in range(1, weights.shape[0]):
        v = points @ weights[i].T + offsets[i]
        if is_max[i - 1]:
            np.maximum(acc, v, out=acc)
        else:
            np.minimum(acc, v, out=acc)
    return acc


def forward_batch(wflat, bflat, shapes, points):
    h = points
    woff = boff = 0
    depth = shapes.shape[0]
    for t in range(depth):
        rows, cols = int(shapes[t, 0]), int(shapes[t, 1])
        W = wflat[woff:woff + rows * cols].reshape(rows, cols)
        with np.errstate(over="ignore", invalid="ignore"):
            h = h @ W.T + bflat[boff:boff + rows]
        if t < depth - 1:
            # max(0, nan) is nan under np.maximum, matching the compiled loop
            h = np.where(h < 0.0, 0.0, h)
        woff += rows * cols
        boff += rows
        if not np.all(np.isfinite(h)):
            return h, t
    return np.ascontiguousarray(h), -1
