"""Dense real tensors with reverse-mode differentiation.

The operation set is exactly what the model needs: matmul, elementwise
arithmetic, masked softmax, layer norm, gelu, reductions, embedding lookup
and a handful of shape ops. Computation runs in single precision by
default; gradient checking rebuilds the same graph in double.

Recording is explicit: ops only build a backward graph while a `Tape` is
active (``with Tape() as tape: ...``). Outside a tape everything is plain
forward numpy, which is what inference and benchmarking use.
"""

from __future__ import annotations

import math
import threading
from typing import Iterable, Sequence

import numpy as np
from .errors import ShapeError, TapeError, VocabularyError

__all__ = [
    "Tensor",
    "Tape",
    "as_tensor",
    "backward",
    "matmul",
    "add",
    "sub",
    "mul",
    "neg",
    "tsum",
    "mean",
    "softmax",
    "log_softmax",
    "layer_norm",
    "gelu",
    "sigmoid",
    "softplus",
    "softmax_pool",
    "absolute",
    "embed",
    "transpose",
    "reshape",
    "broadcast_to",
    "concat",
    "dropout",
]


class Tensor:
    """A dense nd-array plus an optional gradient accumulator.

    ``data`` is always a numpy array. Float input without an explicit dtype
    is stored in single precision (the engine default); pass
    ``dtype=np.float64`` for double-precision work such as gradient checks.
    """

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if dtype is None and arr.dtype.kind == "f" and arr.dtype != np.float32:
            arr = arr.astype(np.float32)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None

    @classmethod
    def _wrap(cls, data: np.ndarray, requires_grad: bool) -> "Tensor":
        out = cls.__new__(cls)
        out.data = data
        out.requires_grad = requires_grad
        out.grad = None
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor._wrap(self.data, False)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    # operator sugar; all semantics live in the module-level functions
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return _getitem(self, key)

    def sum(self, axis=None, keepdims: bool = False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, axes: Sequence[int]):
        return transpose(self, axes)

    def abs(self):
        return absolute(self)


class _Node:
    __slots__ = ("out", "parents", "pullback")

    def __init__(self, out: Tensor, parents: tuple[Tensor, ...], pullback):
        self.out = out
        self.parents = parents
        self.pullback = pullback


_TLS = threading.local()


def _tape_stack() -> list["Tape"]:
    stack = getattr(_TLS, "stack", None)
    if stack is None:
        stack = []
        _TLS.stack = stack
    return stack


def _active_tape() -> "Tape | None":
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tape:
    """Ordered record of executed ops for one forward pass.

    Execution order is a topological order of the graph, so walking the
    entries in reverse performs reverse accumulation. A tape is
    single-writer; run concurrent passes on distinct tapes.
    """

    __slots__ = ("_entries",)

    def __init__(self):
        self._entries: list[_Node] = []

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _tape_stack().pop()
        assert popped is self, "tapes must unwind in LIFO order"
        return False

    def __len__(self) -> int:
        return len(self._entries)

    def backward(self, loss: Tensor) -> None:
        """Accumulate d(loss)/d(t) into ``t.grad`` for every tensor on the tape.

        Repeated calls add another copy of the gradient. Stored gradients
        may alias internal buffers; treat them as read-only (replace, don't
        mutate in place).
        """
        if loss.data.shape != ():
            raise ShapeError(f"loss must be scalar, got shape {loss.data.shape}")
        if not loss.requires_grad:
            raise TapeError("loss was not recorded on a tape (requires_grad is False)")
        adjoint: dict[int, np.ndarray] = {id(loss): np.ones((), dtype=loss.data.dtype)}
        touched: dict[int, Tensor] = {id(loss): loss}
        for node in reversed(self._entries):
            out_grad = adjoint.get(id(node.out))
            if out_grad is None:
                continue
            for parent, pgrad in zip(node.parents, node.pullback(out_grad)):
                if pgrad is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in adjoint:
                    adjoint[key] = adjoint[key] + pgrad
                else:
                    adjoint[key] = pgrad
                    touched[key] = parent
        for key, t in touched.items():
            g = adjoint[key]
            t.grad = g if t.grad is None else t.grad + g


def backward(loss: Tensor) -> None:
    """Reverse-accumulate through the innermost active tape."""
    tape = _active_tape()
    if tape is None:
        raise TapeError("backward called with no active tape")
    tape.backward(loss)


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x, dtype=dtype)


def _apply(data: np.ndarray, parents: tuple[Tensor, ...], pullback) -> Tensor:
    tape = _active_tape()
    requires = tape is not None and any(p.requires_grad for p in parents)
    out = Tensor._wrap(data, requires)
    if requires:
        tape._entries.append(_Node(out, parents, pullback))
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum `grad` down to `shape` (the reverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def matmul(a, b) -> Tensor:
    """Batched matrix product with numpy-style broadcasting of leading axes."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs >=2-d operands, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner extents differ: {a.shape} @ {b.shape}")
    try:
        data = np.matmul(a.data, b.data)
    except ValueError as exc:  # leading extents not broadcastable
        raise ShapeError(f"matmul broadcast failure: {a.shape} @ {b.shape}") from exc

    def pullback(g):
        ga = gb = None
        if a.requires_grad:
            ga = _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape)
        if b.requires_grad:
            gb = _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape)
        return ga, gb

    return _apply(data, (a, b), pullback)


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data + b.data

    def pullback(g):
        return (
            _unbroadcast(g, a.shape) if a.requires_grad else None,
            _unbroadcast(g, b.shape) if b.requires_grad else None,
        )

    return _apply(data, (a, b), pullback)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data - b.data

    def pullback(g):
        return (
            _unbroadcast(g, a.shape) if a.requires_grad else None,
            _unbroadcast(-g, b.shape) if b.requires_grad else None,
        )

    return _apply(data, (a, b), pullback)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data * b.data

    def pullback(g):
        return (
            _unbroadcast(g * b.data, a.shape) if a.requires_grad else None,
            _unbroadcast(g * a.data, b.shape) if b.requires_grad else None,
        )

    return _apply(data, (a, b), pullback)


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _apply(-a.data, (a,), lambda g: (-g,))


def tsum(x, axis=None, keepdims: bool = False) -> Tensor:
    """Sum over `axis` (int, tuple or None for all)."""
    x = as_tensor(x)
    data = x.data.sum(axis=axis, keepdims=keepdims)

    def pullback(g):
        # read-only broadcast views; pullback consumers never mutate grads
        if axis is None:
            return (np.broadcast_to(g, x.shape),)
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        if not keepdims:
            g = np.expand_dims(g, [a % x.ndim for a in axes])
        return (np.broadcast_to(g, x.shape),)

    return _apply(data, (x,), pullback)


def mean(x, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    if axis is None:
        count = x.data.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        count = int(np.prod([x.shape[a % x.ndim] for a in axes]))
    return mul(tsum(x, axis=axis, keepdims=keepdims), np.asarray(1.0 / count, dtype=x.dtype))


def _masked_shift_exp(x: np.ndarray, axis: int, mask: np.ndarray | None):
    """exp(x - rowmax) with masked entries forced to 0; returns (e, denom)."""
    if mask is not None:
        mask = np.broadcast_to(mask, x.shape)
        x = np.where(mask, x, -np.inf)
    rowmax = np.max(x, axis=axis, keepdims=True)
    if mask is not None:
        rowmax = np.where(np.isfinite(rowmax), rowmax, 0.0)  # fully masked row
    e = np.exp(x - rowmax)
    if mask is not None:
        e = np.where(mask, e, 0.0)
    denom = e.sum(axis=axis, keepdims=True)
    return e, denom


def softmax(x, axis: int = -1, mask=None) -> Tensor:
    """Numerically stabilized softmax along `axis`.

    `mask` (broadcastable boolean, True = keep) zeroes the weight of masked
    entries exactly; fully masked slices return all zeros.
    """
    x = as_tensor(x)
    axis_ = axis % x.ndim
    mask_arr = None if mask is None else np.asarray(mask, dtype=bool)
    if mask_arr is not None and mask_arr.all():
        mask_arr = None  # identical result, skips two full-size where-passes
    e, denom = _masked_shift_exp(x.data, axis_, mask_arr)
    if mask_arr is None:
        data = e / denom
    else:
        with np.errstate(invalid="ignore", divide="ignore"):
            data = np.where(denom > 0, e / np.where(denom > 0, denom, 1.0), 0.0)
    data = data.astype(x.dtype, copy=False)

    def pullback(g):
        dot = (g * data).sum(axis=axis_, keepdims=True)
        return ((data * (g - dot)).astype(x.dtype, copy=False),)

    return _apply(data, (x,), pullback)


def log_softmax(x, axis: int = -1, mask=None) -> Tensor:
    """log(softmax(x)); masked entries return 0 (their probability is pinned to 0
    by the caller's loss mask, never read)."""
    x = as_tensor(x)
    axis_ = axis % x.ndim
    mask_arr = None if mask is None else np.asarray(mask, dtype=bool)
    if mask_arr is not None and mask_arr.all():
        mask_arr = None
    e, denom = _masked_shift_exp(x.data, axis_, mask_arr)
    with np.errstate(divide="ignore", invalid="ignore"):
        p = e / denom if mask_arr is None else np.where(denom > 0, e / np.where(denom > 0, denom, 1.0), 0.0)
        logp = np.where(p > 0, np.log(np.where(p > 0, p, 1.0)), 0.0)
    if mask_arr is not None:
        keep = np.broadcast_to(mask_arr, x.shape)
        logp = np.where(keep, logp, 0.0)
    logp = logp.astype(x.dtype, copy=False)
    p = p.astype(x.dtype, copy=False)

    def pullback(g):
        if mask_arr is not None:
            g = np.where(np.broadcast_to(mask_arr, x.shape), g, 0.0)
        tot = g.sum(axis=axis_, keepdims=True)
        return ((g - p * tot).astype(x.dtype, copy=False),)

    return _apply(logp, (x,), pullback)


def softmax_pool(x, axis: int, mask=None) -> Tensor:
    """Fused ``sum(x * softmax(x), axis)`` over one axis.

    Equivalent to composing softmax, multiply and sum but with fewer
    full-size temporaries. Masked entries get zero weight; a fully masked
    slice pools to 0. Gradient: ``g * w * (1 + x - pooled)`` with
    ``w = softmax(x)``.
    """
    x = as_tensor(x)
    axis_ = axis % x.ndim
    mask_arr = None if mask is None else np.asarray(mask, dtype=bool)
    if mask_arr is not None and mask_arr.all():
        mask_arr = None
    e, denom = _masked_shift_exp(x.data, axis_, mask_arr)
    if mask_arr is None:
        w = e / denom
    else:
        with np.errstate(invalid="ignore", divide="ignore"):
            w = np.where(denom > 0, e / np.where(denom > 0, denom, 1.0), 0.0)
    w = w.astype(x.dtype, copy=False)
    data = (x.data * w).sum(axis=axis_)

    def pullback(g):
        ge = np.expand_dims(g, axis_)
        pooled = np.expand_dims(data, axis_)
        return ((ge * w * (1.0 + x.data - pooled)).astype(x.dtype, copy=False),)

    return _apply(data, (x,), pullback)


def layer_norm(x, gain, bias, eps: float = 1e-5) -> Tensor:
    """Zero-mean unit-variance normalization over the last axis, then affine."""
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeError(f"layer_norm affine shape {gain.shape}/{bias.shape} != ({d},)")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + np.asarray(eps, dtype=x.dtype))
    y = xc * inv
    data = y * gain.data + bias.data

    def pullback(g):
        gx = gg = gb = None
        if gain.requires_grad:
            gg = (g * y).reshape(-1, d).sum(axis=0)
        if bias.requires_grad:
            gb = g.reshape(-1, d).sum(axis=0)
        if x.requires_grad:
            gy = g * gain.data
            m1 = gy.mean(axis=-1, keepdims=True)
            m2 = (gy * y).mean(axis=-1, keepdims=True)
            gx = (gy - m1 - y * m2) * inv
        return gx, gg, gb

    return _apply(data, (x, gain, bias), pullback)


_GELU_C = math.sqrt(2.0 / math.pi)
_GELU_K = 0.044715


def _gelu_dx(x: np.ndarray) -> np.ndarray:
    u = np.tanh(_GELU_C * (x + _GELU_K * x * x * x))
    du = _GELU_C * (1.0 + 3.0 * _GELU_K * x * x)
    return 0.5 * (1.0 + u) + 0.5 * x * (1.0 - u * u) * du


def gelu(x) -> Tensor:
    """Gaussian error linear unit, tanh form (faster than erf, sub-1e-3 gap)."""
    x = as_tensor(x)
    u = np.tanh(_GELU_C * (x.data + _GELU_K * x.data**3))
    data = (0.5 * x.data * (1.0 + u)).astype(x.dtype, copy=False)

    def pullback(g):
        return ((g * _gelu_dx(x.data)).astype(x.dtype, copy=False),)

    return _apply(data, (x,), pullback)


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    data = np.where(x.data >= 0, 1.0 / (1.0 + np.exp(-np.abs(x.data))),
                    np.exp(-np.abs(x.data)) / (1.0 + np.exp(-np.abs(x.data))))
    data = data.astype(x.dtype, copy=False)

    def pullback(g):
        return ((g * data * (1.0 - data)).astype(x.dtype, copy=False),)

    return _apply(data, (x,), pullback)


def softplus(x) -> Tensor:
    """log(1 + exp(x)), computed stably; derivative is sigmoid(x)."""
    x = as_tensor(x)
    data = (np.maximum(x.data, 0.0) + np.log1p(np.exp(-np.abs(x.data)))).astype(x.dtype, copy=False)

    def pullback(g):
        s = np.where(x.data >= 0, 1.0 / (1.0 + np.exp(-np.abs(x.data))),
                     np.exp(-np.abs(x.data)) / (1.0 + np.exp(-np.abs(x.data))))
        return ((g * s).astype(x.dtype, copy=False),)

    return _apply(data, (x,), pullback)


def absolute(x) -> Tensor:
    """|x| with sign subgradient (0 at the origin)."""
    x = as_tensor(x)
    data = np.abs(x.data)

    def pullback(g):
        return ((g * np.sign(x.data)).astype(x.dtype, copy=False),)

    return _apply(data, (x,), pullback)


def embed(table, ids) -> Tensor:
    """Row lookup `table[ids]`; the gradient scatters back into the table."""
    table = as_tensor(table)
    ids_arr = np.asarray(ids.data if isinstance(ids, Tensor) else ids)
    if ids_arr.dtype.kind not in "iu":
        raise VocabularyError(f"embedding ids must be integers, got dtype {ids_arr.dtype}")
    if table.ndim != 2:
        raise ShapeError(f"embedding table must be 2-d, got shape {table.shape}")
    vocab = table.shape[0]
    if ids_arr.size and (ids_arr.min() < 0 or ids_arr.max() >= vocab):
        raise VocabularyError(
            f"ids out of range [0, {vocab}): min={ids_arr.min()}, max={ids_arr.max()}"
        )
    data = table.data[ids_arr]

    def pullback(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids_arr.ravel(), g.reshape(-1, table.shape[1]))
        return (gt,)

    return _apply(data, (table,), pullback)


def transpose(x, axes: Sequence[int]) -> Tensor:
    x = as_tensor(x)
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return _apply(np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inv),))


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    shape = tuple(shape)
    old = x.shape
    return _apply(x.data.reshape(shape), (x,), lambda g: (g.reshape(old),))


def broadcast_to(x, shape) -> Tensor:
    x = as_tensor(x)
    shape = tuple(shape)
    data = np.broadcast_to(x.data, shape)
    return _apply(data, (x,), lambda g: (_unbroadcast(g, x.shape),))


def concat(parts: Iterable[Tensor], axis: int = 0) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    data = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def pullback(g):
        grads = []
        for p, start, stop in zip(parts, offsets[:-1], offsets[1:]):
            if p.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(int(start), int(stop))
                grads.append(g[tuple(idx)])
            else:
                grads.append(None)
        return tuple(grads)

    return _apply(data, tuple(parts), pullback)


def _getitem(x: Tensor, key) -> Tensor:
    data = x.data[key]

    def pullback(g):
        gx = np.zeros_like(x.data)
        gx[key] = g  # basic indexing only: no repeated positions
        return (gx,)

    return _apply(data, (x,), pullback)


def dropout(x: Tensor, rate: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout; identity when rate <= 0."""
    if rate <= 0.0:
        return x
    keep = (rng.random(x.shape) >= rate).astype(x.dtype) / np.asarray(1.0 - rate, dtype=x.dtype)
    return mul(x, keep)
