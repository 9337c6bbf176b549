"""Convolution, pooling, and batch normalization on the autograd tape."""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ShapeError
from .tensor import Tensor, _apply


def _im2col3x3(x: np.ndarray) -> np.ndarray:
    """[N,C,H,W] -> [N, C*9, H*W] columns for a 3x3 / pad 1 / stride 1 window."""
    n, c, h, w = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    win = sliding_window_view(xp, (3, 3), axis=(2, 3))  # [N,C,H,W,3,3]
    return np.ascontiguousarray(win.transpose(0, 1, 4, 5, 2, 3)).reshape(n, c * 9, h * w)


def conv2d(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """3x3 convolution, stride 1, pad 1; output spatial dims equal input's."""
    if x.data.ndim != 4 or weight.data.ndim != 4:
        raise ShapeError(f"conv2d expects 4-D input/weight, got {x.shape} / {weight.shape}")
    n, c, h, w = x.data.shape
    o, cw, kh, kw = weight.data.shape
    if (kh, kw) != (3, 3):
        raise ShapeError(f"conv2d kernels must be 3x3, got {kh}x{kw}")
    if cw != c:
        raise ShapeError(f"conv2d channel mismatch: input has {c}, weight expects {cw}")
    if bias.data.shape != (o,):
        raise ShapeError(f"conv2d bias must have shape ({o},), got {bias.shape}")
    if h < 1 or w < 1:
        raise ShapeError("conv2d input spatial dims must be >= 1")

    cols = _im2col3x3(x.data)                       # [N, C*9, H*W]
    w2 = weight.data.reshape(o, c * 9)
    out = np.matmul(w2, cols) + bias.data[:, None]  # [N, O, H*W]
    out = out.reshape(n, o, h, w)

    def bwd(g):
        g2 = g.reshape(n, o, h * w)
        dw = np.matmul(g2, cols.transpose(0, 2, 1)).sum(axis=0).reshape(weight.data.shape)
        db = g2.sum(axis=(0, 2))
        dcols = np.matmul(w2.T, g2)                 # [N, C*9, H*W]
        dcols = dcols.reshape(n, c, 3, 3, h, w)
        dxp = np.zeros((n, c, h + 2, w + 2), dtype=x.data.dtype)
        for i in range(3):
            for j in range(3):
                dxp[:, :, i : i + h, j : j + w] += dcols[:, :, i, j]
        return dxp[:, :, 1 : 1 + h, 1 : 1 + w], dw, db

    return _apply("conv2d", (x, weight, bias), out, bwd)


def pool_out_len(n: int, k: int, s: int, ceil_mode: bool) -> int:
    """Output extent of a 1-D pooling axis; the last window may be partial in ceil mode."""
    if k > n:
        raise ShapeError(f"pool kernel {k} larger than input extent {n}")
    if ceil_mode:
        out = -((n - k) // -s) + 1
        if (out - 1) * s >= n:  # last window must start inside the input
            out -= 1
    else:
        out = (n - k) // s + 1
    return out


def maxpool2d(x: Tensor, kernel: tuple[int, int], stride: tuple[int, int], ceil_mode: bool = False) -> Tensor:
    """Max pooling; ties route the gradient to the first max in row-major window order."""
    if x.data.ndim != 4:
        raise ShapeError(f"maxpool2d expects 4-D input, got {x.shape}")
    kh, kw = kernel
    sh, sw = stride
    if min(kh, kw, sh, sw) < 1:
        raise ShapeError("pool kernel and stride extents must be >= 1")
    n, c, h, w = x.data.shape
    oh = pool_out_len(h, kh, sh, ceil_mode)
    ow = pool_out_len(w, kw, sw, ceil_mode)
    hs = np.arange(oh) * sh
    ws = np.arange(ow) * sw

    best = None
    arg = None
    neg_inf = -np.inf
    for i in range(kh):
        rows = hs + i
        rv = rows < h
        rows_c = np.minimum(rows, h - 1)
        for j in range(kw):
            cols = ws + j
            cv = cols < w
            cols_c = np.minimum(cols, w - 1)
            v = x.data[:, :, rows_c[:, None], cols_c[None, :]]
            valid = rv[:, None] & cv[None, :]
            if not valid.all():
                v = np.where(valid, v, neg_inf)
            if best is None:
                best = v.copy()
                arg = np.zeros(v.shape, dtype=np.int64)
            else:
                better = v > best
                np.copyto(best, v, where=better)
                np.copyto(arg, i * kw + j, where=better)
    out = best

    def bwd(g):
        ai, aj = arg // kw, arg % kw
        nn, cc, hh, ww = np.indices(out.shape)
        src_h = hs[hh] + ai
        src_w = ws[ww] + aj
        dx = np.zeros_like(x.data)
        if sh >= kh and sw >= kw:
            # non-overlapping windows: targets are unique, plain fancy assignment
            dx[nn, cc, src_h, src_w] = g
        else:
            np.add.at(dx, (nn, cc, src_h, src_w), g)
        return (dx,)

    return _apply("maxpool2d", (x,), out, bwd)


def batchnorm2d(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    train: bool,
    momentum: float = 0.9,
    eps: float = 1e-5,
) -> Tensor:
    """Per-channel batch normalization over (N, H, W).

    Train mode normalizes with batch statistics and updates the running
    moments in place; eval mode normalizes with the running moments.
    """
    if x.data.ndim != 4:
        raise ShapeError(f"batchnorm2d expects 4-D input, got {x.shape}")
    n, c, h, w = x.data.shape
    if gamma.data.shape != (c,) or beta.data.shape != (c,):
        raise ShapeError(f"batchnorm2d affine params must have shape ({c},)")
    m = n * h * w
    g4 = gamma.data.reshape(1, c, 1, 1)

    if train:
        if m < 2:
            raise ShapeError(f"batchnorm2d train mode needs N*H*W >= 2 per channel, got {m}")
        mu = x.data.mean(axis=(0, 2, 3))
        var = x.data.var(axis=(0, 2, 3))
        running_mean *= momentum
        running_mean += (1.0 - momentum) * mu
        running_var *= momentum
        running_var += (1.0 - momentum) * var
    else:
        mu = running_mean.astype(x.data.dtype)
        var = running_var.astype(x.data.dtype)

    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu.reshape(1, c, 1, 1)) * inv_std.reshape(1, c, 1, 1)
    out = g4 * xhat + beta.data.reshape(1, c, 1, 1)

    def bwd(g):
        dgamma = (g * xhat).sum(axis=(0, 2, 3))
        dbeta = g.sum(axis=(0, 2, 3))
        dxhat = g * g4
        if train:
            s1 = dxhat.sum(axis=(0, 2, 3), keepdims=True)
            s2 = (dxhat * xhat).sum(axis=(0, 2, 3), keepdims=True)
            dx = (dxhat - s1 / m - xhat * s2 / m) * inv_std.reshape(1, c, 1, 1)
        else:
            dx = dxhat * inv_std.reshape(1, c, 1, 1)
        return dx, dgamma, dbeta

    return _apply("batchnorm2d", (x, gamma, beta), out, bwd)
