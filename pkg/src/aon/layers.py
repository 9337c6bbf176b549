"""Parameterized layers built on the autograd ops."""

from __future__ import annotations

import numpy as np

from . import nnops, tensor as T
from .errors import ShapeError
from .tensor import ParameterSet, Tensor


def uniform_init(rng: np.random.Generator, shape, fan_in: int, dtype) -> np.ndarray:
    """Centered uniform with 1/sqrt(fan_in) bounds."""
    bound = 1.0 / np.sqrt(max(fan_in, 1))
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Conv2d:
    """3x3 convolution with bias (stride 1, pad 1)."""

    def __init__(self, params: ParameterSet, name: str, c_in: int, c_out: int, rng, dtype):
        fan_in = c_in * 9
        self.w = params.add(f"{name}.w", Tensor(uniform_init(rng, (c_out, c_in, 3, 3), fan_in, dtype)))
        self.b = params.add(f"{name}.b", Tensor(np.zeros(c_out, dtype=dtype)))

    def __call__(self, x: Tensor) -> Tensor:
        return nnops.conv2d(x, self.w, self.b)


class BatchNorm2d:
    """Batch normalization with running moments kept as plain buffers."""

    def __init__(self, params: ParameterSet, buffers: dict, name: str, c: int, dtype,
                 momentum: float = 0.9, eps: float = 1e-5):
        self.gamma = params.add(f"{name}.gamma", Tensor(np.ones(c, dtype=dtype)))
        self.beta = params.add(f"{name}.beta", Tensor(np.zeros(c, dtype=dtype)))
        self.running_mean = buffers.setdefault(f"{name}.running_mean", np.zeros(c, dtype=dtype))
        self.running_var = buffers.setdefault(f"{name}.running_var", np.ones(c, dtype=dtype))
        self.momentum = momentum
        self.eps = eps

    def __call__(self, x: Tensor, train: bool) -> Tensor:
        return nnops.batchnorm2d(x, self.gamma, self.beta, self.running_mean,
                                 self.running_var, train, self.momentum, self.eps)


class ConvBlock:
    """conv 3x3 -> BN -> ReLU, optionally followed by a max pool."""

    def __init__(self, params, buffers, name, c_in, c_out, rng, dtype,
                 pool: tuple[int, int] | None = None, pool_ceil: bool = False):
        self.conv = Conv2d(params, f"{name}.conv", c_in, c_out, rng, dtype)
        self.bn = BatchNorm2d(params, buffers, f"{name}.bn", c_out, dtype)
        self.pool = pool
        self.pool_ceil = pool_ceil

    def __call__(self, x: Tensor, train: bool) -> Tensor:
        y = T.relu(self.bn(self.conv(x), train))
        if self.pool is not None and self.pool != (1, 1):
            y = nnops.maxpool2d(y, self.pool, self.pool, ceil_mode=self.pool_ceil)
        return y


class Linear:
    def __init__(self, params: ParameterSet, name: str, d_in: int, d_out: int, rng, dtype,
                 bias: bool = True, zero_init: bool = False):
        if zero_init:
            w = np.zeros((d_in, d_out), dtype=dtype)
        else:
            w = uniform_init(rng, (d_in, d_out), d_in, dtype)
        self.w = params.add(f"{name}.w", Tensor(w))
        self.b = params.add(f"{name}.b", Tensor(np.zeros(d_out, dtype=dtype))) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        y = T.matmul(x, self.w)
        if self.b is not None:
            y = T.add(y, self.b)
        return y


class LSTMCell:
    """Standard LSTM cell with input/forget/cell/output gates.

    Gate order in the packed weight matrices is (i, f, g, o); the forget
    gate bias starts at 1.0.
    """

    def __init__(self, params: ParameterSet, name: str, d_in: int, hidden: int, rng, dtype):
        self.hidden = hidden
        self.wx = params.add(f"{name}.wx", Tensor(uniform_init(rng, (d_in, 4 * hidden), d_in, dtype)))
        self.wh = params.add(f"{name}.wh", Tensor(uniform_init(rng, (hidden, 4 * hidden), hidden, dtype)))
        b = np.zeros(4 * hidden, dtype=dtype)
        b[hidden : 2 * hidden] = 1.0
        self.b = params.add(f"{name}.b", Tensor(b))

    def init_state(self, n: int, dtype) -> tuple[Tensor, Tensor]:
        z = np.zeros((n, self.hidden), dtype=dtype)
        return Tensor(z.copy()), Tensor(z.copy())

    def __call__(self, x: Tensor, h: Tensor, c: Tensor) -> tuple[Tensor, Tensor]:
        hd = self.hidden
        z = T.add(T.add(T.matmul(x, self.wx), T.matmul(h, self.wh)), self.b)
        i = T.sigmoid(T.slice_axis(z, 1, 0, hd))
        f = T.sigmoid(T.slice_axis(z, 1, hd, 2 * hd))
        g = T.tanh(T.slice_axis(z, 1, 2 * hd, 3 * hd))
        o = T.sigmoid(T.slice_axis(z, 1, 3 * hd, 4 * hd))
        c2 = T.add(T.mul(f, c), T.mul(i, g))
        h2 = T.mul(o, T.tanh(c2))
        return h2, c2


class BiLSTM:
    """Bidirectional LSTM over a [L, N, D_in] sequence, outputs [L, N, 2*hidden]."""

    def __init__(self, params: ParameterSet, name: str, d_in: int, hidden: int, rng, dtype):
        self.fwd = LSTMCell(params, f"{name}.fwd", d_in, hidden, rng, dtype)
        self.bwd = LSTMCell(params, f"{name}.bwd", d_in, hidden, rng, dtype)

    def __call__(self, seq: Tensor) -> Tensor:
        if seq.data.ndim != 3 or seq.data.shape[0] < 1:
            raise ShapeError(f"BiLSTM expects [L,N,D] with L >= 1, got {seq.shape}")
        length, n, _ = seq.data.shape
        dtype = seq.data.dtype
        frames = [T.slice_axis(seq, 0, t, t + 1) for t in range(length)]
        frames = [T.reshape(fr, (n, -1)) for fr in frames]

        h, c = self.fwd.init_state(n, dtype)
        out_f = []
        for t in range(length):
            h, c = self.fwd(frames[t], h, c)
            out_f.append(h)
        h, c = self.bwd.init_state(n, dtype)
        out_b: list[Tensor] = [None] * length  # type: ignore[list-item]
        for t in reversed(range(length)):
            h, c = self.bwd(frames[t], h, c)
            out_b[t] = h
        steps = [T.concat([out_f[t], out_b[t]], axis=1) for t in range(length)]
        steps = [T.reshape(s, (1, n, -1)) for s in steps]
        return T.concat(steps, axis=0)


class Embedding:
    def __init__(self, params: ParameterSet, name: str, count: int, dim: int, rng, dtype):
        self.dim = dim
        self.table = params.add(f"{name}.table", Tensor(uniform_init(rng, (count, dim), dim, dtype)))

    def __call__(self, idx: np.ndarray) -> Tensor:
        return T.embedding(self.table, idx)
