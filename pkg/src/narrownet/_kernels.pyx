# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops: batched max-min string evaluation and ReLU forward pass.

Both loops run layer-outer / point-inner so the per-point state stays in
cache while the (possibly very long) parameter arrays stream through.
"""

import numpy as np




cdef enum:
    BLOCK = 512


cdef inline void _affine_block(const double* w, double b, const double* xt, Py_ssize_t d,
                               Py_ssize_t stride, Py_ssize_t cnt, double* out) noexcept nogil:
    # out[q] = b + sum_j w[j] * xt[j * stride + q], contiguous in q so the loop vectorizes
    cdef Py_ssize_t q, j
    cdef double wj
    cdef const double* xj
    for q in range(cnt):
        out[q] = b
    for j in range(d):
        wj = w[j]
        xj = xt + j * stride
        for q in range(cnt):
            out[q] = out[q] + wj * xj[q]


def eval_string_batch(const double[:, :, ::1] weights,
                      const double[:, ::1] offsets,
                      const unsigned char[::1] is_max,
                      const double[:, ::1] points):
    cdef Py_ssize_t L = weights.shape[0]
    cdef Py_ssize_t m = weights.shape[1]
    cdef Py_ssize_t d = weights.shape[2]
    cdef Py_ssize_t n = points.shape[0]
    # point-major copies: coordinate j of point p at [j, p]
    pts_t = np.ascontiguousarray(np.asarray(points).T)
    acc_t = np.empty((m, n), dtype=np.float64)
    cdef double[:, ::1] xt = pts_t
    cdef double[:, ::1] at = acc_t
    cdef double[BLOCK] v
    cdef Py_ssize_t i, k, q, p0, cnt
    cdef double* a
    if n == 0:
        return np.empty((0, m), dtype=np.float64)
    with nogil:
        # blocks of points keep the running values in L1 while parameters stream
        p0 = 0
        while p0 < n:
            cnt = min(<Py_ssize_t>BLOCK, n - p0)
            for k in range(m):
                _affine_block(&weights[0, k, 0], offsets[0, k], &xt[0, p0], d, n, cnt, &at[k, p0])
            for i in range(1, L):
                for k in range(m):
                    _affine_block(&weights[i, k, 0], offsets[i, k], &xt[0, p0], d, n, cnt, v)
                    a = &at[k, p0]
                    if is_max[i - 1]:
                        for q in range(cnt):
                            a[q] = v[q] if v[q] > a[q] else a[q]
                    else:
                        for q in range(cnt):
                            a[q] = v[q] if v[q] < a[q] else a[q]
            p0 = p0 + cnt
    return np.ascontiguousarray(acc_t.T)


def forward_batch(const double[::1] wflat,
                  const double[::1] bflat,
                  const long long[:, ::1] shapes,
                  const double[:, ::1] points):
    """Return ``(outputs, bad_layer)``.

    ``bad_layer`` is the first layer whose output holds a non-finite value
    for some point, or -1. Outputs are only meaningful when it is -1.
    """
    cdef Py_ssize_t n = points.shape[0]
    cdef Py_ssize_t d = points.shape[1]
    cdef Py_ssize_t depth = shapes.shape[0]
    cdef Py_ssize_t width = d
    cdef Py_ssize_t t, j
    for t in range(depth):
        if shapes[t, 0] > width:
            width = shapes[t, 0]
    cdef Py_ssize_t d_out = shapes[depth - 1, 0] if depth else d
    pts_t = np.ascontiguousarray(np.asarray(points).T)
    out_t = np.zeros((d_out, n), dtype=np.float64)
    buf_a = np.zeros((width, BLOCK), dtype=np.float64)
    buf_b = np.zeros((width, BLOCK), dtype=np.float64)
    cdef double[:, ::1] xt = pts_t
    cdef double[:, ::1] ot = out_t
    cdef double[:, ::1] cur = buf_a
    cdef double[:, ::1] nxt = buf_b
    cdef double[:, ::1] tmp
    cdef Py_ssize_t p0, cnt, q, r, rows, cols, woff, boff
    cdef long long bad = -1
    cdef bint last, flagged
    cdef double* o
    cdef double probe
    with nogil:
        # point blocks outside, layers inside: a block's activations stay in L1
        p0 = 0
        while p0 < n:
            cnt = min(<Py_ssize_t>BLOCK, n - p0)
            for j in range(d):
                for q in range(cnt):
                    cur[j, q] = xt[j, p0 + q]
            woff = 0
            boff = 0
            for t in range(depth):
                if bad >= 0 and t >= bad:
                    break
                rows = shapes[t, 0]
                cols = shapes[t, 1]
                last = t == depth - 1
                flagged = False
                for r in range(rows):
                    o = &nxt[r, 0]
                    _affine_block(&wflat[woff + r * cols], bflat[boff + r], &cur[0, 0], cols,
                                  BLOCK, cnt, o)
                    if not last:
                        for q in range(cnt):
                            o[q] = 0.0 if o[q] < 0.0 else o[q]
                    # 0 * x is nan exactly when x is inf or nan
                    probe = 0.0
                    for q in range(cnt):
                        probe = probe + 0.0 * o[q]
                    if probe != probe:
                        flagged = True
                if flagged:
                    bad = t
                    break
                woff = woff + rows * cols
                boff = boff + rows
                tmp = cur
                cur = nxt
                nxt = tmp
            if bad < 0:
                for r in range(d_out):
                    for q in range(cnt):
                        ot[r, p0 + q] = cur[r, q]
            p0 = p0 + cnt
    return np.ascontiguousarray(out_t.T), bad
