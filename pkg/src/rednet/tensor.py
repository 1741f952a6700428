"""Dense NCHW tensors.

A tensor is a plain 4-D :class:`numpy.ndarray` in C (row-major) order, so
the flat index of element ``(n, c, h, w)`` is ``((n*C + c)*H + h)*W + w``.
Nothing here broadcasts: every binary operation requires identical shapes.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError

DEFAULT_DTYPE = np.float32


def tensor_new(n, c, h, w, fill=0.0, dtype=DEFAULT_DTYPE) -> np.ndarray:
    """Create an ``(n, c, h, w)`` tensor.

    ``fill`` is either a scalar broadcast to every element or a flat
    sequence of exactly ``n*c*h*w`` values in row-major order.
    """
    dims = (int(n), int(c), int(h), int(w))
    if any(d < 1 for d in dims):
        raise ShapeError(f"all dimensions must be >= 1, got {dims}")
    size = dims[0] * dims[1] * dims[2] * dims[3]
    if np.isscalar(fill):
        return np.full(dims, fill, dtype=dtype)
    flat = np.asarray(fill, dtype=dtype).ravel()
    if flat.size != size:
        raise ShapeError(f"fill has {flat.size} values, shape {dims} needs {size}")
    return flat.reshape(dims).copy()


def check_4d(x: np.ndarray, name: str = "tensor") -> np.ndarray:
    if not isinstance(x, np.ndarray) or x.ndim != 4:
        shape = getattr(x, "shape", None)
        raise ShapeError(f"{name} must be a 4-D array, got shape {shape}")
    return x


def check_same_shape(a: np.ndarray, b: np.ndarray, what: str = "operands") -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{what} differ in shape: {a.shape} vs {b.shape}")


def add(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    check_same_shape(a, b)
    return a + b


def dot(a: np.ndarray, b: np.ndarray) -> float:
    """Inner product over all elements, accumulated in float64."""
    check_same_shape(a, b)
    return float(np.dot(a.ravel().astype(np.float64), b.ravel().astype(np.float64)))


def frobenius_sq(a: np.ndarray) -> float:
    return dot(a, a)
