"""Differentiable layer primitives: convolution, transposed convolution,
ReLU and the skip-connection sum.

Convolution is cross-correlation with zero padding. Both conv and deconv
are lowered to a single GEMM through im2col; the scatter back (col2im)
walks kernel offsets in a fixed order so results are bit-reproducible.

Weight layouts:

* conv   ``(out_ch, in_ch, k, k)``
* deconv ``(in_ch, out_ch, k, k)``

With these layouts a deconv is exactly the adjoint of a conv sharing the
same array, no transpose needed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError, GeometryError, ShapeError
from .tensor import check_4d, check_same_shape


@dataclass(frozen=True)
class ConvSpec:
    in_ch: int
    out_ch: int
    kernel: int = 3
    stride: int = 1
    padding: int = 1

    def __post_init__(self):
        if self.in_ch < 1 or self.out_ch < 1:
            raise ConfigError(f"channel counts must be >= 1: {self}")
        if self.kernel < 1 or self.stride < 1 or self.padding < 0:
            raise ConfigError(f"need kernel >= 1, stride >= 1, padding >= 0: {self}")

    def conv_out_size(self, size: int) -> int:
        return (size + 2 * self.padding - self.kernel) // self.stride + 1

    def deconv_out_size(self, size: int) -> int:
        return (size - 1) * self.stride - 2 * self.padding + self.kernel


class LayerGrads(NamedTuple):
    grad_input: np.ndarray
    grad_weight: np.ndarray
    grad_bias: np.ndarray


def _conv_geometry(x, spec):
    _, _, h, w = x.shape
    ho, wo = spec.conv_out_size(h), spec.conv_out_size(w)
    if h + 2 * spec.padding < spec.kernel or w + 2 * spec.padding < spec.kernel or ho < 1 or wo < 1:
        raise GeometryError(
            f"conv k={spec.kernel} s={spec.stride} p={spec.padding} on {h}x{w} "
            f"gives non-positive output {ho}x{wo}"
        )
    return ho, wo


def _im2col(x, k, s, p, ho, wo):
    """Columns matrix of shape (c*k*k, n*ho*wo); rows ordered (c, kh, kw)."""
    n, c = x.shape[:2]
    if p:
        x = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
    win = sliding_window_view(x, (k, k), axis=(2, 3))
    win = win[:, :, : (ho - 1) * s + 1 : s, : (wo - 1) * s + 1 : s]
    # (c, kh, kw, n, oh, ow): innermost axis stays the contiguous image row
    return win.transpose(1, 4, 5, 0, 2, 3).reshape(c * k * k, n * ho * wo)


def _col2im(cols, n, c, h, w, k, s, p, ho, wo):
    """Adjoint of :func:`_im2col`; returns the unpadded ``(n, c, h, w)`` sum."""
    cols = cols.reshape(c, k, k, n, ho, wo)
    hp, wp = max(h + 2 * p, (ho - 1) * s + k), max(w + 2 * p, (wo - 1) * s + k)
    out = np.zeros((c, n, hp, wp), dtype=cols.dtype)
    for kh in range(k):
        for kw in range(k):
            out[:, :, kh : kh + (ho - 1) * s + 1 : s, kw : kw + (wo - 1) * s + 1 : s] += cols[:, kh, kw]
    return out[:, :, p : p + h, p : p + w].transpose(1, 0, 2, 3)


def _to_cm(x):
    """(n, c, h, w) -> (c, n*h*w)"""
    return x.transpose(1, 0, 2, 3).reshape(x.shape[1], -1)


def _from_cm(m, n, h, w):
    """(c, n*h*w) -> contiguous (n, c, h, w)"""
    return np.ascontiguousarray(m.reshape(-1, n, h, w).transpose(1, 0, 2, 3))


def _check_params(x, weight, bias, spec, deconv):
    check_4d(x, "input")
    check_4d(weight, "weight")
    k = spec.kernel
    expected = (spec.in_ch, spec.out_ch, k, k) if deconv else (spec.out_ch, spec.in_ch, k, k)
    if weight.shape != expected:
        raise ShapeError(f"weight shape {weight.shape}, expected {expected}")
    if x.shape[1] != spec.in_ch:
        raise ShapeError(f"input has {x.shape[1]} channels, spec expects {spec.in_ch}")
    if bias is not None and np.shape(bias) != (spec.out_ch,):
        raise ShapeError(f"bias shape {np.shape(bias)}, expected ({spec.out_ch},)")


def _bias_sum(g):
    return g.sum(axis=(0, 2, 3))


def conv2d_forward(x, weight, bias, spec: ConvSpec) -> np.ndarray:
    _check_params(x, weight, bias, spec, deconv=False)
    n = x.shape[0]
    ho, wo = _conv_geometry(x, spec)
    cols = _im2col(x, spec.kernel, spec.stride, spec.padding, ho, wo)
    out = weight.reshape(spec.out_ch, -1) @ cols
    if bias is not None:
        out += bias[:, None]
    return _from_cm(out, n, ho, wo)


def conv2d_backward(x, weight, spec: ConvSpec, grad_out) -> LayerGrads:
    _check_params(x, weight, None, spec, deconv=False)
    n, c, h, w = x.shape
    ho, wo = _conv_geometry(x, spec)
    if grad_out.shape != (n, spec.out_ch, ho, wo):
        raise ShapeError(f"grad_out shape {grad_out.shape}, expected {(n, spec.out_ch, ho, wo)}")
    k, s, p = spec.kernel, spec.stride, spec.padding
    g = _to_cm(grad_out)
    cols = _im2col(x, k, s, p, ho, wo)
    grad_w = (g @ cols.T).reshape(weight.shape)
    grad_cols = weight.reshape(spec.out_ch, -1).T @ g
    grad_x = _col2im(grad_cols, n, c, h, w, k, s, p, ho, wo)
    return LayerGrads(np.ascontiguousarray(grad_x), grad_w, _bias_sum(grad_out))


def _deconv_geometry(x, spec):
    _, _, h, w = x.shape
    ho, wo = spec.deconv_out_size(h), spec.deconv_out_size(w)
    if ho < 1 or wo < 1:
        raise GeometryError(
            f"deconv k={spec.kernel} s={spec.stride} p={spec.padding} on {h}x{w} "
            f"gives non-positive output {ho}x{wo}"
        )
    return ho, wo


def deconv2d_forward(x, weight, bias, spec: ConvSpec) -> np.ndarray:
    """Transposed convolution; each input pixel scatters a k x k stamp."""
    _check_params(x, weight, bias, spec, deconv=True)
    n, _, h, w = x.shape
    ho, wo = _deconv_geometry(x, spec)
    cols = weight.reshape(spec.in_ch, -1).T @ _to_cm(x)
    out = _col2im(cols, n, spec.out_ch, ho, wo, spec.kernel, spec.stride, spec.padding, h, w)
    out = np.ascontiguousarray(out)
    if bias is not None:
        out += bias.reshape(1, -1, 1, 1)
    return out


def deconv2d_backward(x, weight, spec: ConvSpec, grad_out) -> LayerGrads:
    _check_params(x, weight, None, spec, deconv=True)
    n, _, h, w = x.shape
    ho, wo = _deconv_geometry(x, spec)
    if grad_out.shape != (n, spec.out_ch, ho, wo):
        raise ShapeError(f"grad_out shape {grad_out.shape}, expected {(n, spec.out_ch, ho, wo)}")
    k, s, p = spec.kernel, spec.stride, spec.padding
    # grad_out is lowered on the deconv's output grid; its conv output is h x w
    cols = _im2col(grad_out, k, s, p, h, w)
    grad_w = (_to_cm(x) @ cols.T).reshape(weight.shape)
    grad_x = _from_cm(weight.reshape(spec.in_ch, -1) @ cols, n, h, w)
    return LayerGrads(grad_x, grad_w, _bias_sum(grad_out))


def relu_forward(x):
    return np.maximum(x, 0)


def relu_backward(x, grad_out):
    check_same_shape(x, grad_out, "relu input and grad_out")
    return np.where(x > 0, grad_out, 0).astype(grad_out.dtype, copy=False)


def skip_add_forward(conv_feat, deconv_feat):
    check_same_shape(conv_feat, deconv_feat, "skip branches")
    return conv_feat + deconv_feat


def skip_add_backward(grad_out):
    return grad_out, grad_out
