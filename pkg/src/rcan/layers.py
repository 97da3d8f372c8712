"""Differentiable primitive layers with hand-written backward passes.

Every forward returns ``(output, tape)``; the tape holds what the matching
backward needs and may be consumed once.
"""

from contextlib import contextmanager
from typing import NamedTuple

import numpy as np

from . import kernels
from .errors import ShapeError


class Tape:
    __slots__ = ("op", "saved", "_spent")

    def __init__(self, op, **saved):
        self.op = op
        self.saved = saved
        self._spent = False

    def consume(self, op):
        if self.op != op:
            raise TypeError(f"tape recorded by {self.op!r} passed to {op!r} backward")
        if self._spent:
            raise RuntimeError(f"{op} tape already consumed by a backward call")
        self._spent = True
        saved, self.saved = self.saved, None
        return saved


class Conv2dParams(NamedTuple):
    weight: np.ndarray  # (out_c, in_c, k, k)
    bias: np.ndarray  # (out_c,)
    name: str = "conv"

    @property
    def in_channels(self):
        return self.weight.shape[1]

    @property
    def out_channels(self):
        return self.weight.shape[0]

    @property
    def kernel_size(self):
        return self.weight.shape[2]


def conv2d(x, p):
    w = p.weight
    if w.ndim != 4 or w.shape[2] != w.shape[3] or w.shape[2] % 2 == 0:
        raise ShapeError(f"{p.name}: kernel must be square with odd size, got {w.shape}")
    if x.ndim != 4 or x.shape[1] != w.shape[1]:
        raise ShapeError(
            f"{p.name}: expected {w.shape[1]} input channels, got input of shape {x.shape}"
        )
    y = kernels.conv2d_forward(x, w, p.bias)
    return y, Tape("conv2d", x=x, weight=w)


def conv2d_backward(grad_y, tape):
    """Returns ``(grad_x, (grad_weight, grad_bias))``."""
    s = tape.consume("conv2d")
    gx, gw, gb = kernels.conv2d_backward(grad_y, s["x"], s["weight"])
    return gx, (gw, gb)


_relu_recorders = []


@contextmanager
def record_relu_masks():
    """Collect the ``x > 0`` mask of every :func:`relu` call made inside the block."""
    masks = []
    _relu_recorders.append(masks)
    try:
        yield masks
    finally:
        _relu_recorders.remove(masks)


def relu(x):
    mask = x > 0
    for rec in _relu_recorders:
        rec.append(mask)
    return np.where(mask, x, 0).astype(x.dtype, copy=False), Tape("relu", mask=mask)


def relu_backward(grad_y, tape):
    # subgradient at exactly 0 is 0
    return np.where(tape.consume("relu")["mask"], grad_y, 0).astype(grad_y.dtype, copy=False)


def sigmoid(x):
    e = np.exp(-np.abs(x))
    y = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(x.dtype, copy=False)
    return y, Tape("sigmoid", y=y)


def sigmoid_backward(grad_y, tape):
    y = tape.consume("sigmoid")["y"]
    return grad_y * y * (1 - y)


def global_avg_pool(x):
    h, w = x.shape[2:]
    if h * w == 0:
        raise ShapeError(f"global average pool over an empty spatial extent {x.shape}")
    return x.mean(axis=(2, 3), keepdims=True), Tape("gap", shape=x.shape)


def gap_backward(grad_z, tape):
    shape = tape.consume("gap")["shape"]
    return np.broadcast_to(grad_z / (shape[2] * shape[3]), shape).copy()


def channel_scale(x, s):
    if s.shape != (x.shape[0], x.shape[1], 1, 1):
        raise ShapeError(f"channel scale shape {s.shape} does not fit input {x.shape}")
    return x * s, Tape("channel_scale", x=x, s=s)


def channel_scale_backward(grad, tape):
    """Returns ``(grad_x, grad_s)``."""
    saved = tape.consume("channel_scale")
    x, s = saved["x"], saved["s"]
    return grad * s, (x * grad).sum(axis=(2, 3), keepdims=True)


def pixel_shuffle(x, u):
    """Sub-pixel rearrangement ``(n, c*u*u, h, w) -> (n, c, u*h, u*w)``.

    Output pixel ``(u*i + a, u*j + b)`` of channel ``c`` reads input channel
    ``c*u*u + a*u + b`` at ``(i, j)``.
    """
    n, cu, h, w = x.shape
    if u < 1 or cu % (u * u):
        raise ShapeError(f"pixel_shuffle: {cu} channels not divisible by {u}^2")
    c = cu // (u * u)
    return x.reshape(n, c, u, u, h, w).transpose(0, 1, 4, 2, 5, 3).reshape(n, c, h * u, w * u)


def pixel_unshuffle(y, u):
    n, c, hu, wu = y.shape
    if u < 1 or hu % u or wu % u:
        raise ShapeError(f"pixel_unshuffle: spatial size {(hu, wu)} not divisible by {u}")
    h, w = hu // u, wu // u
    return y.reshape(n, c, h, u, w, u).transpose(0, 1, 3, 5, 2, 4).reshape(n, c * u * u, h, w)


pixel_shuffle_backward = pixel_unshuffle
