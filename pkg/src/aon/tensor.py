"""Dense tensors with reverse-mode automatic differentiation.

The engine is intentionally small. A :class:`Tensor` wraps a contiguous
numpy float array; every differentiable operation executed while a
:class:`Tape` is active pushes one node onto that tape; ``Tape.backward``
replays the nodes in reverse registration order and accumulates gradients
into the ``grad`` buffers of every ``requires_grad`` tensor reachable from
the loss. Outside a tape the same functions run as plain numpy code, which
is what inference uses.

Only float32 and float64 are supported: float32 is the training default,
float64 is switched on for finite-difference checking. Non-finite values
anywhere are a hard error.
"""

from __future__ import annotations

from typing import Callable, Iterator, Optional, Sequence

import numpy as np

from .errors import ContractError, NumericsError, ShapeError

DEFAULT_DTYPE = np.float32

_TAPE_STACK: list["Tape"] = []


def active_tape() -> Optional["Tape"]:
    """The innermost recording tape, or None when running untaped."""
    return _TAPE_STACK[-1] if _TAPE_STACK else None


def _check_finite(arr: np.ndarray, where: str) -> None:
    # single reduction as the fast path; confirm element-wise before raising
    if not np.isfinite(arr.sum()) and not np.all(np.isfinite(arr)):
        raise NumericsError(f"non-finite values in {where}")


class Tensor:
    """N-dimensional float array with an optional same-shape gradient."""

    __slots__ = ("data", "grad", "requires_grad", "_tape")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(DEFAULT_DTYPE)
        arr = np.ascontiguousarray(arr)
        _check_finite(arr, "tensor construction")
        self.data = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self._tape: Optional[Tape] = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        """A view of the same data with no grad requirement."""
        return Tensor(self.data.copy(), requires_grad=False)

    def zero_grad(self) -> None:
        self.grad = None

    def accumulate_grad(self, g: np.ndarray) -> None:
        if g.shape != self.data.shape:
            raise ShapeError(f"gradient shape {g.shape} != tensor shape {self.data.shape}")
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype.name}, requires_grad={self.requires_grad})"

    # light operator sugar; anything heavier goes through the module functions
    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        return add(self, scale(other, -1.0))

    def __mul__(self, other) -> "Tensor":
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__

    def __neg__(self) -> "Tensor":
        return scale(self, -1.0)


class _Node:
    __slots__ = ("inputs", "outputs", "backward_fn")

    def __init__(self, inputs, outputs, backward_fn):
        self.inputs = inputs
        self.outputs = outputs
        self.backward_fn = backward_fn


class Tape:
    """Ordered record of executed operations, replayed in reverse by backward."""

    def __init__(self):
        self._nodes: list[_Node] = []

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        popped = _TAPE_STACK.pop()
        assert popped is self

    def __len__(self) -> int:
        return len(self._nodes)

    def _record(self, node: _Node) -> None:
        self._nodes.append(node)

    def backward(self, loss: Tensor, params: Optional["ParameterSet"] = None) -> None:
        """Accumulate d(loss)/dx into ``grad`` for every reachable tensor.

        ``loss`` must be a scalar produced by an op recorded on this tape.
        When ``params`` is given, parameters the loss does not reach get an
        all-zero gradient, and every parameter gradient is checked finite.
        """
        if loss.data.size != 1:
            raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
        if loss._tape is not self:
            raise ContractError("loss was not produced on this tape")
        loss.grad = np.ones_like(loss.data)
        for node in reversed(self._nodes):
            g_out = node.output.grad
            if g_out is None:
                continue
            grads = node.backward_fn(g_out)
            for t, g in zip(node.inputs, grads):
                if g is None or not t.requires_grad:
                    continue
                t.accumulate_grad(g)
        if params is not None:
            for name, p in params.items():
                if p.grad is None:
                    p.grad = np.zeros_like(p.data)
                else:
                    _check_finite(p.grad, f"gradient of {name}")


def backward(loss: Tensor, params: Optional["ParameterSet"] = None) -> None:
    """Backward pass on the tape that recorded ``loss``."""
    if loss._tape is None:
        raise ContractError("loss is not on any tape")
    loss._tape.backward(loss, params)


class ParameterSet:
    """Ordered, uniquely named collection of trainable tensors."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}

    def add(self, name: str, tensor: Tensor) -> Tensor:
        if name in self._params:
            raise ContractError(f"duplicate parameter name {name!r}")
        tensor.requires_grad = True
        self._params[name] = tensor
        return tensor

    def get(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def items(self) -> Iterator[tuple[str, Tensor]]:
        return iter(self._params.items())

    def tensors(self) -> Iterator[Tensor]:
        return iter(self._params.values())

    def zero_grads(self) -> None:
        for p in self._params.values():
            p.grad = None

    def count_elements(self) -> int:
        return sum(p.size for p in self._params.values())


def _apply(
    name: str,
    inputs: tuple[Tensor, ...],
    out_data: np.ndarray,
    backward_fn: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]],
) -> Tensor:
    """Wrap an op result, check finiteness, and record it when taping."""
    out_data = np.ascontiguousarray(out_data)
    _check_finite(out_data, name)
    out = Tensor.__new__(Tensor)
    out.data = out_data
    out.grad = None
    out._tape = None
    tape = active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out._tape = tape
        tape._record(_Node(inputs, out, backward_fn))
    else:
        out.requires_grad = False
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise and linear algebra


def add(a: Tensor, b: Tensor) -> Tensor:
    out = a.data + b.data

    def bwd(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return _apply("add", (a, b), out, bwd)


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = a.data * b.data

    def bwd(g):
        return _unbroadcast(g * b.data, a.data.shape), _unbroadcast(g * a.data, b.data.shape)

    return _apply("mul", (a, b), out, bwd)


def scale(a: Tensor, s: float) -> Tensor:
    s = a.data.dtype.type(s)
    out = a.data * s

    def bwd(g):
        return (g * s,)

    return _apply("scale", (a,), out, bwd)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.shape} @ {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dims differ: {a.shape} @ {b.shape}")
    out = a.data @ b.data

    def bwd(g):
        return g @ b.data.T, a.data.T @ g

    return _apply("matmul", (a, b), out, bwd)


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def bwd(g):
        if axis is None:
            return (np.broadcast_to(g, a.data.shape).copy(),)
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.data.shape).copy(),)

    return _apply("sum", (a,), np.asarray(out), bwd)


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    n = a.data.size if axis is None else a.data.shape[axis]
    return scale(tsum(a, axis=axis, keepdims=keepdims), 1.0 / n)


def reshape(a: Tensor, shape) -> Tensor:
    out = a.data.reshape(shape)

    def bwd(g):
        return (g.reshape(a.data.shape),)

    return _apply("reshape", (a,), out, bwd)


def transpose(a: Tensor, axes: tuple[int, ...]) -> Tensor:
    out = a.data.transpose(axes)
    inv = np.argsort(axes)

    def bwd(g):
        return (g.transpose(inv),)

    return _apply("transpose", (a,), out, bwd)


def concat(tensors: Sequence[Tensor], axis: int) -> Tensor:
    if not tensors:
        raise ShapeError("concat of an empty sequence")
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        pieces = []
        for i in range(len(sizes)):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(offsets[i], offsets[i + 1])
            pieces.append(g[tuple(sl)])
        return pieces

    return _apply("concat", tuple(tensors), out, bwd)


def slice_axis(a: Tensor, axis: int, start: int, stop: int) -> Tensor:
    sl = [slice(None)] * a.data.ndim
    sl[axis] = slice(start, stop)
    sl = tuple(sl)
    out = a.data[sl]

    def bwd(g):
        full = np.zeros_like(a.data)
        full[sl] = g
        return (full,)

    return _apply("slice", (a,), out, bwd)


# ---------------------------------------------------------------------------
# activations


def relu(a: Tensor) -> Tensor:
    out = np.maximum(a.data, 0)

    def bwd(g):
        return (g * (a.data > 0),)

    return _apply("relu", (a,), out, bwd)


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)

    def bwd(g):
        return (g * (1 - out * out),)

    return _apply("tanh", (a,), out, bwd)


def sigmoid(a: Tensor) -> Tensor:
    out = 1.0 / (1.0 + np.exp(-a.data))

    def bwd(g):
        return (g * out * (1 - out),)

    return _apply("sigmoid", (a,), out, bwd)


def softmax(a: Tensor, axis: int) -> Tensor:
    if not -a.data.ndim <= axis < a.data.ndim:
        raise ShapeError(f"softmax axis {axis} out of range for shape {a.shape}")
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def bwd(g):
        dot = (g * out).sum(axis=axis, keepdims=True)
        return (out * (g - dot),)

    return _apply("softmax", (a,), out, bwd)


def log_softmax(a: Tensor, axis: int) -> Tensor:
    if not -a.data.ndim <= axis < a.data.ndim:
        raise ShapeError(f"log_softmax axis {axis} out of range for shape {a.shape}")
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))

    def bwd(g):
        return (g - np.exp(out) * g.sum(axis=axis, keepdims=True),)

    return _apply("log_softmax", (a,), out, bwd)


# ---------------------------------------------------------------------------
# indexed access


def take_rows(a: Tensor, idx: np.ndarray) -> Tensor:
    """Pick one entry per row: out[n] = a[n, idx[n]]."""
    if a.data.ndim != 2:
        raise ShapeError(f"take_rows expects a 2-D tensor, got {a.shape}")
    rows = np.arange(a.data.shape[0])
    idx = np.asarray(idx, dtype=np.int64)
    out = a.data[rows, idx]

    def bwd(g):
        full = np.zeros_like(a.data)
        np.add.at(full, (rows, idx), g)
        return (full,)

    return _apply("take_rows", (a,), out, bwd)


def embedding(table: Tensor, idx: np.ndarray) -> Tensor:
    """Row lookup: out[n] = table[idx[n]]."""
    if table.data.ndim != 2:
        raise ShapeError(f"embedding table must be 2-D, got {table.shape}")
    idx = np.asarray(idx, dtype=np.int64)
    out = table.data[idx]

    def bwd(g):
        full = np.zeros_like(table.data)
        np.add.at(full, idx, g)
        return (full,)

    return _apply("embedding", (table,), out, bwd)


# ---------------------------------------------------------------------------
# structural permutations (exact, no arithmetic)


def rot90(a: Tensor) -> Tensor:
    """Counterclockwise quarter turn of the trailing two (square) axes."""
    if a.data.ndim < 2 or a.data.shape[-1] != a.data.shape[-2]:
        raise ShapeError(f"rot90 needs square trailing dims, got {a.shape}")
    out = np.rot90(a.data, 1, axes=(-2, -1))

    def bwd(g):
        return (np.ascontiguousarray(np.rot90(g, -1, axes=(-2, -1))),)

    return _apply("rot90", (a,), out, bwd)


def reverse_seq(a: Tensor) -> Tensor:
    """Reverse frame order along the leading axis."""
    if a.data.ndim < 1 or a.data.shape[0] < 1:
        raise ShapeError(f"reverse_seq needs a leading sequence axis, got {a.shape}")
    out = np.flip(a.data, 0)

    def bwd(g):
        return (np.ascontiguousarray(np.flip(g, 0)),)

    return _apply("reverse_seq", (a,), out, bwd)
