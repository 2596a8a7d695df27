"""Dense tensors with reverse-mode automatic differentiation.

Define-by-run: every operation records its parents and a VJP closure on the
output node, and `backward` replays the graph in reverse topological order.
The graph lives only as long as the output tensors; each training batch
builds a fresh one.

Element width is float32 for training and float64 for verification runs.
Operands of one expression must share a width; there is no implicit
promotion.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.special import erf

from .errors import ContractError, NumericError

Array = np.ndarray

_ALLOWED_DTYPES = (np.float32, np.float64)

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


class Tensor:
    """N-dimensional float array that can participate in a backward pass."""

    __slots__ = ("data", "grad", "requires_grad", "op", "_parents", "_vjp")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in (np.dtype(np.float32), np.dtype(np.float64)):
            arr = arr.astype(np.float32)
        self.data: Array = arr
        self.grad: Array | None = None
        self.requires_grad = bool(requires_grad)
        self.op = "leaf"
        self._parents: tuple[Tensor, ...] = ()
        self._vjp: Callable[[Array], tuple[Array | None, ...]] | None = None

    # -- introspection -----------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def astype(self, dtype) -> "Tensor":
        return Tensor(self.data.astype(dtype), requires_grad=self.requires_grad)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}{flag}, op={self.op!r})"

    # -- operator sugar ----------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.data.dtype if like is not None else None
    return Tensor(np.asarray(x, dtype=dtype))


def _check_same_dtype(*tensors: Tensor) -> None:
    dtypes = {t.data.dtype for t in tensors}
    if len(dtypes) > 1:
        raise ContractError(f"mixed element widths in one expression: {sorted(map(str, dtypes))}")


def _node(data: Array, parents: Sequence[Tensor], vjp, op: str) -> Tensor:
    out = Tensor(data)
    out.op = op
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._vjp = vjp
    return out


def _unbroadcast(grad: Array, shape: tuple[int, ...]) -> Array:
    """Sum `grad` down to `shape`, undoing NumPy broadcasting."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# -- elementwise arithmetic ------------------------------------------------


def add(a, b) -> Tensor:
    a = as_tensor(a, like=b if isinstance(b, Tensor) else None)
    b = as_tensor(b, like=a)
    _check_same_dtype(a, b)

    def vjp(g: Array):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _node(a.data + b.data, (a, b), vjp, "add")


def sub(a, b) -> Tensor:
    a = as_tensor(a, like=b if isinstance(b, Tensor) else None)
    b = as_tensor(b, like=a)
    _check_same_dtype(a, b)

    def vjp(g: Array):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _node(a.data - b.data, (a, b), vjp, "sub")


def mul(a, b) -> Tensor:
    a = as_tensor(a, like=b if isinstance(b, Tensor) else None)
    b = as_tensor(b, like=a)
    _check_same_dtype(a, b)

    def vjp(g: Array):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _node(a.data * b.data, (a, b), vjp, "mul")


def div(a, b) -> Tensor:
    a = as_tensor(a, like=b if isinstance(b, Tensor) else None)
    b = as_tensor(b, like=a)
    _check_same_dtype(a, b)

    def vjp(g: Array):
        ga = _unbroadcast(g / b.data, a.shape)
        gb = _unbroadcast(-g * a.data / (b.data * b.data), b.shape)
        return ga, gb

    return _node(a.data / b.data, (a, b), vjp, "div")


def neg(a: Tensor) -> Tensor:
    def vjp(g: Array):
        return (-g,)

    return _node(-a.data, (a,), vjp, "neg")


# -- shape manipulation ----------------------------------------------------


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    old = a.shape

    def vjp(g: Array):
        return (g.reshape(old),)

    return _node(a.data.reshape(shape), (a,), vjp, "reshape")


def transpose(a: Tensor, axes: tuple[int, ...]) -> Tensor:
    inverse = tuple(np.argsort(axes))

    def vjp(g: Array):
        return (g.transpose(inverse),)

    return _node(a.data.transpose(axes), (a,), vjp, "transpose")


def _swap_last2(x: Array) -> Array:
    return np.swapaxes(x, -1, -2)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product; leading dims broadcast per NumPy rules."""
    if a.ndim < 2 or b.ndim < 2:
        raise ContractError("matmul requires operands of rank >= 2")
    _check_same_dtype(a, b)

    def _reduce_batch(grad: Array, shape: tuple[int, ...]) -> Array:
        extra = grad.ndim - len(shape)
        if extra > 0:
            grad = grad.sum(axis=tuple(range(extra)))
        axes = tuple(i for i, n in enumerate(shape[:-2]) if n == 1 and grad.shape[i] != 1)
        if axes:
            grad = grad.sum(axis=axes, keepdims=True)
        return grad

    def vjp(g: Array):
        ga = _reduce_batch(np.matmul(g, _swap_last2(b.data)), a.shape)
        gb = _reduce_batch(np.matmul(_swap_last2(a.data), g), b.shape)
        return ga, gb

    return _node(np.matmul(a.data, b.data), (a, b), vjp, "matmul")


def gather_rows(table: Tensor, ids: Array) -> Tensor:
    """Row lookup: out[..., :] = table[ids[...], :]. `ids` is a plain int array."""
    ids = np.asarray(ids)
    if table.ndim != 2:
        raise ContractError("gather_rows expects a 2-D table")

    def vjp(g: Array):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids.reshape(-1), g.reshape(-1, table.shape[1]))
        return (gt,)

    return _node(table.data[ids], (table,), vjp, "gather_rows")


# -- reductions ------------------------------------------------------------


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    def vjp(g: Array):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg, a.shape).copy(),)

    return _node(a.data.sum(axis=axis, keepdims=keepdims), (a,), vjp, "sum")


def tmean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        count = a.size
    else:
        count = a.shape[axis]

    def vjp(g: Array):
        if axis is None:
            return (np.broadcast_to(g / count, a.shape).copy(),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg / count, a.shape).copy(),)

    return _node(a.data.mean(axis=axis, keepdims=keepdims), (a,), vjp, "mean")


# -- nonlinearities --------------------------------------------------------


def texp(a: Tensor) -> Tensor:
    out_data = np.exp(a.data)

    def vjp(g: Array):
        return (g * out_data,)

    return _node(out_data, (a,), vjp, "exp")


def tlog(a: Tensor) -> Tensor:
    def vjp(g: Array):
        return (g / a.data,)

    return _node(np.log(a.data), (a,), vjp, "log")


def tsqrt(a: Tensor) -> Tensor:
    out_data = np.sqrt(a.data)

    def vjp(g: Array):
        return (g * (0.5 / out_data),)

    return _node(out_data, (a,), vjp, "sqrt")


def ttanh(a: Tensor) -> Tensor:
    out_data = np.tanh(a.data)

    def vjp(g: Array):
        return (g * (1.0 - out_data * out_data),)

    return _node(out_data, (a,), vjp, "tanh")


def gelu(a: Tensor) -> Tensor:
    """Exact (erf-based) GELU."""
    x = a.data
    phi = 0.5 * (1.0 + erf(x * _INV_SQRT2))
    out_data = (x * phi).astype(x.dtype)

    def vjp(g: Array):
        pdf = _INV_SQRT_2PI * np.exp(-0.5 * x * x)
        return ((g * (phi + x * pdf)).astype(x.dtype),)

    return _node(out_data, (a,), vjp, "gelu")


def clip_min(a: Tensor, floor: float) -> Tensor:
    """max(a, floor) elementwise; gradient is zero where the floor engages."""
    mask = a.data > floor

    def vjp(g: Array):
        return (g * mask,)

    return _node(np.maximum(a.data, floor), (a,), vjp, "clip_min")


def softmax_last(a: Tensor) -> Tensor:
    """Softmax over the last axis, computed with max-subtraction."""
    z = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    out_data = e / e.sum(axis=-1, keepdims=True)

    def vjp(g: Array):
        inner = (g * out_data).sum(axis=-1, keepdims=True)
        return (out_data * (g - inner),)

    return _node(out_data, (a,), vjp, "softmax")


def layer_norm(x: Tensor, scale: Tensor, shift: Tensor, eps: float) -> Tensor:
    """Layer normalization over the last axis with learned scale and shift."""
    _check_same_dtype(x, scale, shift)
    h = x.shape[-1]
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv_std
    out_data = xhat * scale.data + shift.data

    def vjp(g: Array):
        reduce_axes = tuple(range(g.ndim - 1))
        gscale = (g * xhat).sum(axis=reduce_axes)
        gshift = g.sum(axis=reduce_axes)
        gxhat = g * scale.data
        # d/dx of (x - mu) / sqrt(var + eps) with mu, var over the last axis
        gx = inv_std * (
            gxhat
            - gxhat.mean(axis=-1, keepdims=True)
            - xhat * (gxhat * xhat).mean(axis=-1, keepdims=True)
        )
        return gx, gscale, gshift

    del h
    return _node(out_data, (x, scale, shift), vjp, "layer_norm")


# -- backward pass ---------------------------------------------------------


def _toposort(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(loss: Tensor, params: Iterable[Tensor] = ()) -> None:
    """Populate .grad on every reachable tensor with requires_grad.

    `loss` must be a scalar. Parameters listed in `params` that the graph
    never reaches get an explicit zero gradient. Accumulates into existing
    .grad buffers; call `zero_grads` between steps.
    """
    if loss.size != 1:
        raise ContractError(f"backward expects a scalar loss, got shape {loss.shape}")
    if not np.isfinite(loss.data).all():
        raise NumericError("non-finite loss value")
    if not loss.requires_grad:
        for p in params:
            if p.requires_grad and p.grad is None:
                p.grad = np.zeros_like(p.data)
        return

    order = _toposort(loss)
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._vjp is None:
            continue
        g = node.grad
        if g is None:
            continue
        if not np.isfinite(g).all():
            raise NumericError(f"non-finite gradient flowing into primitive {node.op!r}")
        grads = node._vjp(g)
        for parent, pg in zip(node._parents, grads):
            if pg is None or not parent.requires_grad:
                continue
            if parent.grad is None:
                parent.grad = np.zeros_like(parent.data)
            parent.grad += pg

    for p in params:
        if p.requires_grad and p.grad is None:
            p.grad = np.zeros_like(p.data)


def zero_grads(params: Iterable[Tensor]) -> None:
    for p in params:
        p.grad = None
