"""Convolution kernels, the only hot loops in the package.

Two interchangeable implementations of stride-1, zero-padded, odd-size
cross-correlation:

* ``numba``: direct loops compiled with ``@njit`` over a zero-padded copy;
  the innermost loop runs along contiguous rows so LLVM can vectorize it.
* ``numpy``: one ``tensordot`` per kernel tap over a padded copy.

The loops win while BLAS call overhead dominates, which is when either
channel count is small or the spatial extent is tiny (the 1x1 attention
convolutions). Once both channel counts reach 16, BLAS wins by a widening
margin; ``benchmarks/bench_kernels.py`` measures both.

Both accept float32 or float64 and return the input dtype. They agree to
rounding, not bitwise (different summation order).
"""

import numpy as np

from ._accel import BACKEND, njit


@njit(cache=True)
def _pad_nb(x, p):
    n, c, h, wd = x.shape
    xp = np.zeros((n, c, h + 2 * p, wd + 2 * p), dtype=x.dtype)
    xp[:, :, p:p + h, p:p + wd] = x
    return xp


@njit(cache=True)
def _conv_fwd_nb(x, w, b):
    n, c, h, wd = x.shape
    o, _, k, _ = w.shape
    xp = _pad_nb(x, k // 2)
    y = np.empty((n, o, h, wd), dtype=x.dtype)
    for ni in range(n):
        for oi in range(o):
            y[ni, oi] = b[oi]
            for ci in range(c):
                for di in range(k):
                    for dj in range(k):
                        wv = w[oi, ci, di, dj]
                        for i in range(h):
                            yr = y[ni, oi, i]
                            xr = xp[ni, ci, i + di, dj:dj + wd]
                            for j in range(wd):
                                yr[j] += wv * xr[j]
    return y


@njit(cache=True, fastmath={"reassoc"})
def _conv_grad_w_nb(gy, xp, k):
    n, o, h, wd = gy.shape
    c = xp.shape[1]
    gw = np.zeros((o, c, k, k), dtype=xp.dtype)
    for ni in range(n):
        for oi in range(o):
            for ci in range(c):
                for di in range(k):
                    for dj in range(k):
                        acc = gw[oi, ci, di, dj]
                        for i in range(h):
                            gr = gy[ni, oi, i]
                            xr = xp[ni, ci, i + di, dj:dj + wd]
                            for j in range(wd):
                                acc += gr[j] * xr[j]
                        gw[oi, ci, di, dj] = acc
    return gw


@njit(cache=True)
def _conv_grad_x_nb(gy, w, h, wd):
    n, o = gy.shape[:2]
    c, k = w.shape[1], w.shape[2]
    p = k // 2
    gxp = np.zeros((n, c, h + 2 * p, wd + 2 * p), dtype=gy.dtype)
    for ni in range(n):
        for ci in range(c):
            for oi in range(o):
                for di in range(k):
                    for dj in range(k):
                        wv = w[oi, ci, di, dj]
                        for i in range(h):
                            gr = gy[ni, oi, i]
                            gxr = gxp[ni, ci, i + di, dj:dj + wd]
                            for j in range(wd):
                                gxr[j] += wv * gr[j]
    return np.ascontiguousarray(gxp[:, :, p:p + h, p:p + wd])


def _conv_bwd_nb(gy, x, w):
    k = w.shape[2]
    h, wd = x.shape[2:]
    gw = _conv_grad_w_nb(gy, _pad_nb(x, k // 2), k)
    gx = _conv_grad_x_nb(gy, w, h, wd)
    return gx, gw, gy.sum(axis=(0, 2, 3))


def _pad(x, p):
    if p == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))


def _conv_fwd_np(x, w, b):
    n, c, h, wd = x.shape
    o, _, k, _ = w.shape
    xp = _pad(x, k // 2)
    y = np.empty((n, o, h, wd), dtype=x.dtype)
    y[...] = b[None, :, None, None]
    for di in range(k):
        for dj in range(k):
            tap = xp[:, :, di:di + h, dj:dj + wd]
            # (o, c) x (n, c, h, w) -> (o, n, h, w)
            y += np.tensordot(w[:, :, di, dj], tap, axes=(1, 1)).transpose(1, 0, 2, 3)
    return y


def _conv_bwd_np(gy, x, w):
    n, c, h, wd = x.shape
    o, _, k, _ = w.shape
    p = k // 2
    xp = _pad(x, p)
    gxp = np.zeros_like(xp)
    gw = np.empty_like(w)
    gb = gy.sum(axis=(0, 2, 3)).astype(w.dtype, copy=False)
    for di in range(k):
        for dj in range(k):
            tap = xp[:, :, di:di + h, dj:dj + wd]
            gw[:, :, di, dj] = np.tensordot(gy, tap, axes=([0, 2, 3], [0, 2, 3]))
            gxp[:, :, di:di + h, dj:dj + wd] += np.tensordot(
                w[:, :, di, dj], gy, axes=(0, 1)
            ).transpose(1, 0, 2, 3)
    gx = gxp[:, :, p:p + h, p:p + wd] if p else gxp
    return np.ascontiguousarray(gx), gw, gb


_FORWARD = {"numba": _conv_fwd_nb, "numpy": _conv_fwd_np}
_BACKWARD = {"numba": _conv_bwd_nb, "numpy": _conv_bwd_np}

NARROW_CHANNELS = 8
TINY_SPATIAL = 16


def pick_backend(x_shape, w_shape, backend=None):
    """Resolve ``backend`` (or the process default) to ``"numba"`` or ``"numpy"``."""
    name = backend or BACKEND
    if name != "auto":
        return name
    narrow = min(w_shape[0], w_shape[1]) <= NARROW_CHANNELS
    tiny = x_shape[2] * x_shape[3] <= TINY_SPATIAL
    return "numba" if narrow or tiny else "numpy"


def conv2d_forward(x, w, b, backend=None):
    """Zero-padded stride-1 cross-correlation; ``y`` has the spatial size of ``x``."""
    x = np.ascontiguousarray(x)
    return _FORWARD[pick_backend(x.shape, w.shape, backend)](x, np.ascontiguousarray(w, dtype=x.dtype),
                                        np.ascontiguousarray(b, dtype=x.dtype))


def conv2d_backward(gy, x, w, backend=None):
    """Gradients ``(gx, gw, gb)`` of :func:`conv2d_forward` given upstream ``gy``."""
    x = np.ascontiguousarray(x)
    return _BACKWARD[pick_backend(x.shape, w.shape, backend)](np.ascontiguousarray(gy, dtype=x.dtype), x,
                                         np.ascontiguousarray(w, dtype=x.dtype))
