"""Rank-4 tensors, elementwise arithmetic and the finite-difference oracle.

Everything downstream works on plain ``numpy`` arrays laid out row-major as
``(n, c, h, w)``; :class:`Tensor4` is the validated wrapper used where a
gradient buffer travels with the data.
"""

from dataclasses import dataclass

import numpy as np

from .errors import NonFiniteError, ShapeError

_UFUNCS = {"add": np.add, "sub": np.subtract, "mul": np.multiply, "scale": np.multiply}
OPS = tuple(_UFUNCS)


@dataclass
class Tensor4:
    data: np.ndarray
    grad: np.ndarray | None = None

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim != 4:
            raise ShapeError(f"Tensor4 needs rank 4 (n, c, h, w), got shape {self.data.shape}")
        if self.data.dtype.kind != "f":
            self.data = self.data.astype(np.float64)
        if self.grad is not None:
            self.grad = np.asarray(self.grad, dtype=self.data.dtype)
            if self.grad.shape != self.data.shape:
                raise ShapeError(
                    f"grad shape {self.grad.shape} differs from data shape {self.data.shape}"
                )

    @classmethod
    def zeros(cls, shape, dtype=np.float64):
        return cls(np.zeros(shape, dtype=dtype))

    @property
    def shape(self):
        return self.data.shape

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    def __array__(self, dtype=None, copy=None):
        return self.data if dtype is None else self.data.astype(dtype)


def _as_array(t):
    return t.data if isinstance(t, Tensor4) else np.asarray(t)


def elementwise(op, a, b):
    """Apply ``add``/``sub``/``mul`` (tensor-tensor) or ``scale`` (tensor-scalar).

    ``b`` may have the full shape of ``a`` or ``(n, c, 1, 1)``, in which case it
    is broadcast over the spatial axes. Inputs are never modified.
    """
    if op not in OPS:
        raise ValueError(f"unknown op {op!r}; expected one of {OPS}")
    x = _as_array(a)
    if x.ndim != 4:
        raise ShapeError(f"left operand must be rank 4, got shape {x.shape}")

    ufunc = _UFUNCS[op]
    if np.isscalar(b):
        with np.errstate(over="ignore", invalid="ignore"):
            out = ufunc(x, x.dtype.type(b))
    elif op == "scale":
        raise ShapeError("scale takes a scalar right operand")
    else:
        y = _as_array(b)
        n, c = x.shape[:2]
        if y.shape != x.shape and y.shape != (n, c, 1, 1):
            raise ShapeError(
                f"{op}: right operand shape {y.shape} neither equals {x.shape} "
                f"nor broadcasts as {(n, c, 1, 1)}"
            )
        with np.errstate(over="ignore", invalid="ignore"):
            out = ufunc(x, y)

    if not np.all(np.isfinite(out)):
        raise NonFiniteError(f"{op} produced non-finite values")
    return Tensor4(out)


def relative_error(a, b, floor=1e-8):
    """``|a - b| / max(|a|, |b|, floor)``, elementwise."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def finite_diff_grad(f, params, h=1e-3, coords=None):
    """Central-difference gradient of scalar ``f`` at the flat vector ``params``.

    ``coords`` restricts evaluation to a subset of indices; the returned vector
    then has one entry per requested coordinate, in order.
    """
    if h <= 0:
        raise ValueError(f"step must be positive, got {h}")
    theta = np.array(params, dtype=np.float64).ravel()
    idx = range(theta.size) if coords is None else coords
    out = []
    for i in idx:
        saved = theta[i]
        theta[i] = saved + h
        fp = f(theta.copy())
        theta[i] = saved - h
        fm = f(theta.copy())
        theta[i] = saved
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NonFiniteError(f"f is non-finite around coordinate {i}: f(+h)={fp}, f(-h)={fm}")
        out.append((fp - fm) / (2.0 * h))
    return np.array(out, dtype=np.float64)
