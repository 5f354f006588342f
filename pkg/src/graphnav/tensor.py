"""Dense float64 tensors with tape-based reverse-mode autodiff.

Everything learnable in this package runs through the small op set below:
matmul, transpose, reshape, elementwise add/mul, concat, tanh, sigmoid,
relu, exp, softmax, sum reduction, embedding lookup and cross-entropy.
Ops are recorded on a thread-local tape when an input requires gradients;
``backward`` replays the tape in reverse and accumulates into ``.grad``
buffers. Gradient accumulation is additive: the caller (optimizer) zeroes
grads between steps.
"""

from __future__ import annotations

import math
import threading
from typing import Callable, Iterable, Sequence

import numpy as np


class ShapeError(ValueError):
    """Operands have incompatible shapes for the requested op."""


class NumericError(ArithmeticError):
    """An op produced NaN or Inf."""


class TapeError(RuntimeError):
    """Tape misuse, e.g. backward called twice on the same tape."""


class Tensor:
    """A dense float64 array plus an optional gradient buffer.

    Leaf tensors created with ``requires_grad=True`` get a zero-filled
    ``grad`` buffer immediately; intermediate results produced by ops keep
    their gradients only transiently inside :func:`backward`.
    """

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = np.zeros_like(arr) if requires_grad else None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() on tensor of shape {self.data.shape}")
        return float(self.data.reshape(()))

    def zero_grad(self) -> None:
        if self.grad is not None:
            self.grad[...] = 0.0

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # Operator sugar; everything routes through the module-level ops so it
    # is recorded on the tape.
    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __radd__(self, other):
        return add(_as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, _as_tensor(other))

    def __rmul__(self, other):
        return mul(_as_tensor(other), self)

    def __neg__(self):
        return mul(self, _as_tensor(-1.0))

    def __sub__(self, other):
        return add(self, mul(_as_tensor(other), _as_tensor(-1.0)))

    def __rsub__(self, other):
        return add(_as_tensor(other), mul(self, _as_tensor(-1.0)))

    def __matmul__(self, other):
        return matmul(self, _as_tensor(other))


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class _Op:
    __slots__ = ("name", "out", "inputs", "backward_fn")

    def __init__(self, name, out, inputs, backward_fn):
        self.name = name
        self.out = out
        self.inputs = inputs
        self.backward_fn = backward_fn


class Tape:
    """Ordered record of ops; execution order is topological by construction."""

    def __init__(self) -> None:
        self.ops: list[_Op] = []
        self.consumed = False

    def __len__(self) -> int:
        return len(self.ops)

    def __enter__(self) -> "Tape":
        _STATE.stack.append(self)
        return self

    def __exit__(self, *exc) -> None:
        popped = _STATE.stack.pop()
        assert popped is self


class _ThreadState(threading.local):
    def __init__(self):
        self.stack: list[Tape] = []


_STATE = _ThreadState()


def tape() -> Tape:
    """Create a fresh tape; use as ``with tape() as tp:``."""
    return Tape()


def active_tape() -> Tape | None:
    return _STATE.stack[-1] if _STATE.stack else None


def _finish(name: str, out_data: np.ndarray, inputs: Sequence[Tensor],
            backward_fn: Callable[[np.ndarray], Sequence[np.ndarray | None]]) -> Tensor:
    # NaN/Inf propagate through the sum, so one fused reduce detects them;
    # this sits on the hot path of every op and isfinite().all() costs ~2x.
    if not math.isfinite(float(out_data.sum())):
        raise NumericError(f"non-finite output from op '{name}'")
    tp = active_tape()
    track = tp is not None and any(t.requires_grad for t in inputs)
    out = Tensor.__new__(Tensor)
    out.data = out_data
    out.requires_grad = track
    out.grad = None
    if track:
        tp.ops.append(_Op(name, out, tuple(inputs), backward_fn))
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# ---------------------------------------------------------------------------
# elementwise


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        out = a.data + b.data
    except ValueError:
        raise ShapeError(f"add: shapes {a.shape} and {b.shape} do not broadcast") from None

    def bwd(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _finish("add", out, (a, b), bwd)


def mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        out = a.data * b.data
    except ValueError:
        raise ShapeError(f"mul: shapes {a.shape} and {b.shape} do not broadcast") from None

    def bwd(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _finish("mul", out, (a, b), bwd)


def tanh(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    out = np.tanh(x.data)

    def bwd(g):
        return (g * (1.0 - out * out),)

    return _finish("tanh", out, (x,), bwd)


def sigmoid(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    out = 1.0 / (1.0 + np.exp(-np.clip(x.data, -500.0, 500.0)))

    def bwd(g):
        return (g * out * (1.0 - out),)

    return _finish("sigmoid", out, (x,), bwd)


def relu(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    out = np.maximum(x.data, 0.0)

    def bwd(g):
        return (g * (x.data > 0.0),)

    return _finish("relu", out, (x,), bwd)


def exp(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    with np.errstate(over="ignore"):
        out = np.exp(x.data)

    def bwd(g):
        return (g * out,)

    return _finish("exp", out, (x,), bwd)


# ---------------------------------------------------------------------------
# shape ops


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ShapeError(f"matmul needs >=2-d operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: inner dims differ, {a.shape} @ {b.shape}")
    try:
        out = a.data @ b.data
    except ValueError:
        raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} do not broadcast") from None

    def bwd(g):
        ga = _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape)
        gb = _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape)
        return ga, gb

    return _finish("matmul", out, (a, b), bwd)


def transpose(x: Tensor, axes: tuple[int, ...] | None = None) -> Tensor:
    x = _as_tensor(x)
    out = np.transpose(x.data, axes)
    inv = None if axes is None else tuple(np.argsort(axes))

    def bwd(g):
        return (np.transpose(g, inv),)

    return _finish("transpose", out, (x,), bwd)


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    x = _as_tensor(x)
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot view {x.shape} as {shape}") from None
    orig = x.shape

    def bwd(g):
        return (g.reshape(orig),)

    return _finish("reshape", out, (x,), bwd)


def concat(tensors: Iterable[Tensor], axis: int = -1) -> Tensor:
    ts = [_as_tensor(t) for t in tensors]
    if not ts:
        raise ShapeError("concat of empty sequence")
    try:
        out = np.concatenate([t.data for t in ts], axis=axis)
    except ValueError:
        raise ShapeError(
            f"concat axis={axis}: incompatible shapes {[t.shape for t in ts]}") from None
    sizes = [t.shape[axis] for t in ts]
    splits = np.cumsum(sizes)[:-1]

    def bwd(g):
        return tuple(np.split(g, splits, axis=axis))

    return _finish("concat", out, tuple(ts), bwd)


def sum_reduce(x: Tensor, axis: int | tuple[int, ...] | None = None,
               keepdims: bool = False) -> Tensor:
    x = _as_tensor(x)
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def bwd(g):
        if axis is None:
            return (np.broadcast_to(g, x.shape).copy(),)
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _finish("sum_reduce", np.asarray(out), (x,), bwd)


def embedding_lookup(table: Tensor, indices) -> Tensor:
    """Gather rows of ``table`` by integer index."""
    table = _as_tensor(table)
    idx = np.asarray(indices, dtype=np.intp)
    if idx.ndim != 1:
        raise ShapeError(f"embedding_lookup: indices must be 1-d, got {idx.shape}")
    if table.data.ndim != 2:
        raise ShapeError(f"embedding_lookup: table must be 2-d, got {table.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise ShapeError(
            f"embedding_lookup: index out of range for table with {table.shape[0]} rows")
    out = table.data[idx]

    def bwd(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, idx, g)
        return (gt,)

    return _finish("embedding_lookup", out, (table,), bwd)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Numerically stable softmax along ``axis``; rows sum to 1."""
    x = _as_tensor(x)
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def bwd(g):
        gs = g * out
        return (gs - out * gs.sum(axis=axis, keepdims=True),)

    return _finish("softmax", out, (x,), bwd)


def cross_entropy_with_logits(logits: Tensor, labels) -> Tensor:
    """Mean negative log-likelihood of integer ``labels`` under ``logits``.

    ``logits`` is (n,) with a scalar label, or (B, n) with B labels.
    """
    logits = _as_tensor(logits)
    lab = np.atleast_1d(np.asarray(labels, dtype=np.intp))
    data = logits.data if logits.data.ndim == 2 else logits.data[None, :]
    if data.ndim != 2:
        raise ShapeError(f"cross_entropy: logits must be 1-d or 2-d, got {logits.shape}")
    if lab.shape[0] != data.shape[0]:
        raise ShapeError(
            f"cross_entropy: {data.shape[0]} logit rows vs {lab.shape[0]} labels")
    if lab.min() < 0 or lab.max() >= data.shape[1]:
        raise ShapeError(f"cross_entropy: label outside [0, {data.shape[1]})")
    m = data.max(axis=1, keepdims=True)
    lse = m[:, 0] + np.log(np.exp(data - m).sum(axis=1))
    losses = lse - data[np.arange(data.shape[0]), lab]
    out = np.asarray(losses.mean())
    batch = data.shape[0]

    def bwd(g):
        p = np.exp(data - m)
        p /= p.sum(axis=1, keepdims=True)
        p[np.arange(batch), lab] -= 1.0
        gl = (float(g) / batch) * p
        return (gl if logits.data.ndim == 2 else gl[0],)

    return _finish("cross_entropy", out, (logits,), bwd)


# ---------------------------------------------------------------------------
# reverse pass


def backward(loss: Tensor, tp: Tape) -> None:
    """Accumulate d(loss)/d(leaf) into every reachable leaf's ``.grad``.

    Leaves not reachable from ``loss`` keep whatever is already in their
    grad buffer (zeros after ``zero_grad``). Raises :class:`TapeError` if
    the tape was already consumed.
    """
    if tp.consumed:
        raise TapeError("backward called twice on the same tape")
    tp.consumed = True
    if loss.data.size != 1:
        raise ShapeError(f"backward: loss must be scalar, got shape {loss.shape}")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for op in reversed(tp.ops):
        g_out = grads.pop(id(op.out), None)
        if g_out is None:
            continue
        in_grads = op.backward_fn(g_out)
        for inp, g in zip(op.inputs, in_grads):
            if g is None or not inp.requires_grad:
                continue
            if inp.grad is not None:  # leaf parameter
                inp.grad += g
            else:
                acc = grads.get(id(inp))
                if acc is None:
                    # Own the buffer: backward fns may alias their output
                    # grad across inputs.
                    acc = np.zeros_like(inp.data)
                    grads[id(inp)] = acc
                acc += g
