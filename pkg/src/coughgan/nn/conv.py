"""NHWC convolution and transposed convolution with "same" padding.

Kernels use the (kh, kw, c_in, c_out) layout of the forward convolution.
``conv2d_transpose(y, k)`` is the exact adjoint of ``conv2d(x, k)`` for an
input of spatial size ``(H*s, W*s)``, so a transposed layer mapping
``c_a -> c_b`` channels stores a kernel of shape (kh, kw, c_b, c_a).
"""

from __future__ import annotations

import math

import numpy as np

from ..errors import ShapeError


def same_padding(n: int, k: int, s: int) -> tuple[int, int, int]:
    """Output length and (low, high) padding; the odd pixel goes high."""
    out = math.ceil(n / s)
    total = max((out - 1) * s + k - n, 0)
    return out, total // 2, total - total // 2


def _geometry(h, w, kh, kw, s):
    ho, top, bottom = same_padding(h, kh, s)
    wo, left, right = same_padding(w, kw, s)
    return ho, wo, (top, bottom, left, right)


def _im2col(x, kh, kw, s, pads, ho, wo):
    top, bottom, left, right = pads
    xp = np.pad(x, ((0, 0), (top, bottom), (left, right), (0, 0)))
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(1, 2))
    win = win[:, : (ho - 1) * s + 1 : s, : (wo - 1) * s + 1 : s]
    # (B, ho, wo, C, kh, kw) -> (B*ho*wo, kh*kw*C)
    b, c = x.shape[0], x.shape[3]
    return win.transpose(0, 1, 2, 4, 5, 3).reshape(b * ho * wo, kh * kw * c)


def _col2im(cols, shape, kh, kw, s, pads, ho, wo):
    b, h, w, c = shape
    top, bottom, left, right = pads
    out = np.zeros((b, h + top + bottom, w + left + right, c), dtype=cols.dtype)
    cols = cols.reshape(b, ho, wo, kh, kw, c)
    for i in range(kh):
        for j in range(kw):
            out[:, i : i + (ho - 1) * s + 1 : s, j : j + (wo - 1) * s + 1 : s] += cols[:, :, :, i, j]
    return out[:, top : top + h, left : left + w]


def _chunk(per_sample: int) -> int:
    """Batch items per slice so a column buffer stays near 2**24 elements."""
    return max(1, (1 << 24) // max(per_sample, 1))


def _check(x, k, s, channel_axis):
    if s < 1:
        raise ShapeError(f"stride must be >= 1, got {s}")
    if x.ndim != 4 or k.ndim != 4:
        raise ShapeError("expected NHWC input and a rank-4 kernel")
    if x.shape[3] != k.shape[channel_axis]:
        raise ShapeError(f"input has {x.shape[3]} channels, kernel expects {k.shape[channel_axis]}")


def conv2d(x, k, stride: int = 1):
    """Cross-correlation; returns ``(y, cache)``."""
    _check(x, k, stride, 2)
    kh, kw, cin, cout = k.shape
    b, h, w, _ = x.shape
    ho, wo, pads = _geometry(h, w, kh, kw, stride)
    cols = _im2col(x, kh, kw, stride, pads, ho, wo)
    y = (cols @ k.reshape(-1, cout)).reshape(b, ho, wo, cout)
    return y, (cols, x.shape, k, stride, pads, ho, wo)


def conv2d_backward(dy, cache):
    cols, xshape, k, s, pads, ho, wo = cache
    kh, kw, cin, cout = k.shape
    dy2 = dy.reshape(-1, cout)
    dk = (cols.T @ dy2).reshape(k.shape)
    dx = _col2im(dy2 @ k.reshape(-1, cout).T, xshape, kh, kw, s, pads, ho, wo)
    return dx, dk


def conv2d_transpose(x, k, stride: int = 1):
    """Transposed convolution, output spatial size ``(H*s, W*s)``; returns ``(y, cache)``."""
    _check(x, k, stride, 3)
    kh, kw, cout, cin = k.shape
    b, h, w, _ = x.shape
    oshape = (b, h * stride, w * stride, cout)
    ho, wo, pads = _geometry(oshape[1], oshape[2], kh, kw, stride)
    assert (ho, wo) == (h, w)
    kmat = k.reshape(-1, cin).T
    y = np.empty(oshape, dtype=np.result_type(x, k))
    step = _chunk(h * w * kh * kw * cout)
    for i in range(0, b, step):
        part = x[i : i + step]
        y[i : i + step] = _col2im(part.reshape(-1, cin) @ kmat, (len(part),) + oshape[1:],
                                  kh, kw, stride, pads, h, w)
    return y, (x, oshape, k, stride, pads, h, w)


def conv2d_transpose_backward(dy, cache):
    x, oshape, k, s, pads, h, w = cache
    kh, kw, cout, cin = k.shape
    kmat = k.reshape(-1, cin)
    dx = np.empty(x.shape, dtype=np.result_type(dy, k))
    dk = np.zeros((kh * kw * cout, cin), dtype=dx.dtype)
    step = _chunk(h * w * kh * kw * cout)
    for i in range(0, oshape[0], step):
        cols = _im2col(dy[i : i + step], kh, kw, s, pads, h, w)
        dx[i : i + step] = (cols @ kmat).reshape(-1, h, w, cin)
        dk += cols.T @ x[i : i + step].reshape(-1, cin)
    return dx, dk.reshape(k.shape)
