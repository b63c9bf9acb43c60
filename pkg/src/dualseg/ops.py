"""Differentiable array operations: forward/backward function pairs.

Every forward returns ``(output, cache)``; the paired ``*_backward`` takes the
upstream gradient and the cache and returns gradients for each differentiable
input, in argument order. There is no autograd graph: composites chain these
by hand and are validated against finite differences.

Layout is channel-first (C, H, W), double precision throughout.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigurationError, ContractViolation


def _out_size(size: int, k: int, stride: int, padding: int) -> int:
    # mainstream floor convention: out = floor((size + 2p - k) / stride) + 1
    span = size + 2 * padding - k
    if span < 0:
        raise ConfigurationError(
            f"conv output empty: size={size} k={k} stride={stride} padding={padding}"
        )
    return span // stride + 1


# ---------------------------------------------------------------------------
# convolution


def conv2d(x, w, b, stride: int = 1, padding: int = 0):
    """Cross-correlation of (C_in,H,W) with (C_out,C_in,k,k) + bias, zero padding."""
    c_in, h, wd = x.shape
    c_out, c_in_w, kh, kw = w.shape
    if kh != kw or kh % 2 == 0:
        raise ConfigurationError(f"kernel must be square and odd, got {kh}x{kw}")
    if stride < 1 or padding < 0:
        raise ConfigurationError(f"stride={stride} padding={padding} out of range")
    if c_in_w != c_in:
        raise ContractViolation(f"input has {c_in} channels, weight expects {c_in_w}")
    if b.shape != (c_out,):
        raise ContractViolation(f"bias shape {b.shape} != ({c_out},)")
    out_h = _out_size(h, kh, stride, padding)
    out_w = _out_size(wd, kw, stride, padding)

    xp = np.pad(x, ((0, 0), (padding, padding), (padding, padding)))
    # (C, out_h, out_w, k, k) view, then one big matmul
    win = sliding_window_view(xp, (kh, kw), axis=(1, 2))[:, ::stride, ::stride]
    cols = win.transpose(1, 2, 0, 3, 4).reshape(out_h * out_w, c_in * kh * kw)
    y = cols @ w.reshape(c_out, -1).T + b
    y = y.T.reshape(c_out, out_h, out_w)
    cache = (cols, x.shape, w, stride, padding, out_h, out_w)
    return y, cache


def conv2d_backward(gy, cache):
    cols, x_shape, w, stride, padding, out_h, out_w = cache
    c_in, h, wd = x_shape
    c_out, _, kh, kw = w.shape
    gy_mat = gy.reshape(c_out, out_h * out_w).T  # (L, C_out)

    gw = (gy_mat.T @ cols).reshape(w.shape)
    gb = gy_mat.sum(axis=0)

    gcols = gy_mat @ w.reshape(c_out, -1)  # (L, C_in*k*k)
    gpatch = gcols.reshape(out_h, out_w, c_in, kh, kw).transpose(2, 3, 4, 0, 1)
    gxp = np.zeros((c_in, h + 2 * padding, wd + 2 * padding))
    for ki in range(kh):
        for kj in range(kw):
            gxp[:, ki : ki + stride * out_h : stride, kj : kj + stride * out_w : stride] += gpatch[:, ki, kj]
    gx = gxp[:, padding : padding + h, padding : padding + wd]
    return gx, gw, gb


# ---------------------------------------------------------------------------
# normalization


def group_norm(x, num_groups: int, gamma, beta, eps: float = 1e-5):
    """Normalize over (channels-in-group, H, W), then per-channel affine."""
    c = x.shape[0]
    if eps <= 0:
        raise ConfigurationError(f"eps must be positive, got {eps}")
    if c % num_groups != 0:
        raise ConfigurationError(f"{c} channels not divisible by {num_groups} groups")
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ContractViolation(f"affine shapes {gamma.shape}/{beta.shape} != ({c},)")
    xg = x.reshape(num_groups, -1)
    mu = xg.mean(axis=1, keepdims=True)
    var = xg.var(axis=1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = ((xg - mu) * inv_std).reshape(x.shape)
    y = gamma[:, None, None] * xhat + beta[:, None, None]
    cache = (xhat, inv_std, gamma, num_groups)
    return y, cache


def group_norm_backward(gy, cache):
    xhat, inv_std, gamma, num_groups = cache
    ggamma = (gy * xhat).sum(axis=(1, 2))
    gbeta = gy.sum(axis=(1, 2))
    gxh = (gy * gamma[:, None, None]).reshape(num_groups, -1)
    xh = xhat.reshape(num_groups, -1)
    gx = inv_std * (
        gxh
        - gxh.mean(axis=1, keepdims=True)
        - xh * (gxh * xh).mean(axis=1, keepdims=True)
    )
    return gx.reshape(xhat.shape), ggamma, gbeta


# ---------------------------------------------------------------------------
# pointwise / reshaping


def relu(x):
    mask = x > 0
    return np.where(mask, x, 0.0), mask


def relu_backward(gy, mask):
    return np.where(mask, gy, 0.0)


def sigmoid(x):
    y = np.empty_like(x)
    pos = x >= 0
    y[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    y[~pos] = ex / (1.0 + ex)
    return y, y


def sigmoid_backward(gy, y):
    return gy * y * (1.0 - y)


def softmax(x, axis: int = 0):
    shifted = x - x.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)
    return y, (y, axis)


def softmax_backward(gy, cache):
    y, axis = cache
    return y * (gy - (gy * y).sum(axis=axis, keepdims=True))


def add(a, b):
    if a.shape != b.shape:
        raise ContractViolation(f"add shapes differ: {a.shape} vs {b.shape}")
    return a + b, None


def add_backward(gy, cache):
    return gy, gy


def mul(a, b):
    if a.shape != b.shape:
        raise ContractViolation(f"mul shapes differ: {a.shape} vs {b.shape}")
    return a * b, (a, b)


def mul_backward(gy, cache):
    a, b = cache
    return gy * b, gy * a


def concat_channels(arrays):
    """Concatenate along axis 0; trailing dims must match."""
    tails = {a.shape[1:] for a in arrays}
    if len(tails) != 1:
        raise ContractViolation(f"concat non-channel dims differ: {sorted(tails)}")
    sizes = [a.shape[0] for a in arrays]
    return np.concatenate(arrays, axis=0), sizes


def concat_channels_backward(gy, sizes):
    grads = []
    start = 0
    for s in sizes:
        grads.append(gy[start : start + s])
        start += s
    return grads


def gap(x):
    """Global average pooling (C,H,W) -> (C,)."""
    c, h, w = x.shape
    return x.mean(axis=(1, 2)), (c, h, w)


def gap_backward(gy, cache):
    c, h, w = cache
    return np.broadcast_to(gy[:, None, None] / (h * w), (c, h, w)).copy()


def linear(x, w, b):
    """(D_in,) -> (D_out,) as w @ x + b."""
    if w.shape[1] != x.shape[0] or b.shape[0] != w.shape[0]:
        raise ContractViolation(f"linear shapes: x{x.shape} w{w.shape} b{b.shape}")
    return w @ x + b, (x, w)


def linear_backward(gy, cache):
    x, w = cache
    return w.T @ gy, np.outer(gy, x), gy.copy()


# ---------------------------------------------------------------------------
# bilinear interpolation (half-pixel centers, upsampling only)


def _bilinear_axis(n_in: int, n_out: int):
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1.0)
    i0 = np.floor(src).astype(np.intp)
    frac = src - i0
    i1 = np.minimum(i0 + 1, n_in - 1)
    return i0, i1, frac


def bilinear_upsample(x, out_h: int, out_w: int):
    c, h, w = x.shape
    if out_h <= 0 or out_w <= 0:
        raise ConfigurationError(f"output size {out_h}x{out_w} must be positive")
    if out_h < h or out_w < w:
        raise ConfigurationError(f"upsampling only: {h}x{w} -> {out_h}x{out_w}")
    iy0, iy1, fy = _bilinear_axis(h, out_h)
    ix0, ix1, fx = _bilinear_axis(w, out_w)
    wy0, wy1 = (1.0 - fy)[None, :, None], fy[None, :, None]
    wx0, wx1 = (1.0 - fx)[None, None, :], fx[None, None, :]
    y = (
        wy0 * (wx0 * x[:, iy0[:, None], ix0[None, :]] + wx1 * x[:, iy0[:, None], ix1[None, :]])
        + wy1 * (wx0 * x[:, iy1[:, None], ix0[None, :]] + wx1 * x[:, iy1[:, None], ix1[None, :]])
    )
    cache = (x.shape, iy0, iy1, fy, ix0, ix1, fx)
    return y, cache


def bilinear_upsample_backward(gy, cache):
    (c, h, w), iy0, iy1, fy, ix0, ix1, fx = cache
    gx = np.zeros((c, h, w))
    ch_idx = np.arange(c)[:, None, None]
    for iy, wy in ((iy0, 1.0 - fy), (iy1, fy)):
        for ix, wx in ((ix0, 1.0 - fx), (ix1, fx)):
            contrib = gy * wy[None, :, None] * wx[None, None, :]
            np.add.at(gx, (ch_idx, iy[None, :, None], ix[None, None, :]), contrib)
    return gx
