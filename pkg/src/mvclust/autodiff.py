"""Reverse-mode automatic differentiation over dense float64 arrays.

Every operation returns a new :class:`Tensor` that remembers its parents and
a closure mapping the output gradient to parent gradients.  Calling
:meth:`Tensor.backward` on a scalar walks the graph in reverse topological
order and accumulates gradients into the leaves that require them.
"""

from __future__ import annotations

import itertools
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import DomainError, ShapeError

LOG_FLOOR = 1e-12

_ids = itertools.count()


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "op", "node_id", "clamped")

    def __init__(self, data, requires_grad: bool = False, _parents: tuple = (), _backward=None, op: str = "leaf"):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._parents = _parents
        self._backward = _backward
        self.op = op
        self.node_id = next(_ids)
        self.clamped = False

    # -- basic properties -------------------------------------------------
    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return not self._parents

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(()))

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self.op}, requires_grad={self.requires_grad})"

    # -- operators --------------------------------------------------------
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

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return negate(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    @property
    def T(self):
        return transpose(self)

    def sum(self, axis=None, keepdims=False):
        return reduce(self, "sum", axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return reduce(self, "mean", axis, keepdims)

    def min(self, axis=None, keepdims=False):
        return reduce(self, "min", axis, keepdims)

    def max(self, axis=None, keepdims=False):
        return reduce(self, "max", axis, keepdims)

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)

    def relu(self):
        return relu(self)

    def sqrt(self):
        return sqrt(self)

    def square(self):
        return square(self)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def detach(self):
        return detach(self)

    def backward(self):
        backward(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents: Sequence[Tensor], backward_fn, op: str) -> Tensor:
    needs = any(p.requires_grad for p in parents)
    if not needs:
        return Tensor(data, op=op)
    return Tensor(data, requires_grad=True, _parents=tuple(parents), _backward=backward_fn, op=op)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(a: Tensor, b: Tensor, op: str) -> tuple:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: operand shapes {a.shape} and {b.shape} are not broadcast-compatible") from None


# ---------------------------------------------------------------------------
# elementwise
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "add")

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make(a.data + b.data, (a, b), bw, "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "sub")

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _make(a.data - b.data, (a, b), bw, "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "mul")

    def bw(g):
        ga = _unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return _make(a.data * b.data, (a, b), bw, "mul")


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "div")
    out = a.data / b.data

    def bw(g):
        ga = _unbroadcast(g / b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(-g * out / b.data, b.shape) if b.requires_grad else None
        return ga, gb

    return _make(out, (a, b), bw, "div")


def scalar_mul(a, c: float) -> Tensor:
    a = as_tensor(a)
    c = float(c)
    return _make(a.data * c, (a,), lambda g: (g * c,), "scalar_mul")


def negate(a) -> Tensor:
    a = as_tensor(a)
    return _make(-a.data, (a,), lambda g: (-g,), "negate")


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return _make(out, (a,), lambda g: (g * out,), "exp")


def log(a, strict: bool = False) -> Tensor:
    """Natural log.  Non-positive inputs raise in strict mode; otherwise inputs
    are clamped to at least 1e-12 and the result's ``clamped`` flag is set."""
    a = as_tensor(a)
    if strict and np.any(a.data <= 0):
        raise DomainError(f"log of non-positive value (min {a.data.min():.3g})")
    low = a.data < LOG_FLOOR
    clamped = bool(low.any())
    x = np.maximum(a.data, LOG_FLOOR) if clamped else a.data

    def bw(g):
        gx = g / x
        if clamped:
            gx = np.where(low, 0.0, gx)
        return (gx,)

    out = _make(np.log(x), (a,), bw, "log")
    out.clamped = clamped
    return out


def sqrt(a, strict: bool = False) -> Tensor:
    a = as_tensor(a)
    neg = a.data < 0
    clamped = bool(neg.any())
    if clamped and strict:
        raise DomainError(f"sqrt of negative value (min {a.data.min():.3g})")
    out = np.sqrt(np.maximum(a.data, 0.0)) if clamped else np.sqrt(a.data)

    def bw(g):
        with np.errstate(divide="ignore", invalid="ignore"):
            gx = g * 0.5 / out
        if clamped:
            gx = np.where(neg, 0.0, gx)
        return (gx,)

    res = _make(out, (a,), bw, "sqrt")
    res.clamped = clamped
    return res


def square(a) -> Tensor:
    a = as_tensor(a)
    return _make(a.data * a.data, (a,), lambda g: (2.0 * g * a.data,), "square")


def relu(a) -> Tensor:
    a = as_tensor(a)
    out = np.maximum(a.data, 0.0)
    return _make(out, (a,), lambda g: (np.where(out > 0, g, 0.0),), "relu")


def clamp_min(a, floor: float) -> Tensor:
    """max(a, floor) elementwise; gradient is zero where the floor is active."""
    a = as_tensor(a)
    mask = a.data >= floor
    return _make(np.where(mask, a.data, floor), (a,), lambda g: (g * mask,), "clamp_min")


_UNARY = {"exp": exp, "log": log, "relu": relu, "square": square, "sqrt": sqrt, "negate": negate}
_BINARY = {"add": add, "sub": sub, "mul": mul, "div": div}


def elementwise(kind: str, a, b=None) -> Tensor:
    """Dispatch by name.  For ``scalar-mul``, ``b`` is a Python number."""
    if kind in _UNARY:
        if b is not None:
            raise ShapeError(f"{kind} takes one operand")
        return _UNARY[kind](a)
    if kind in _BINARY:
        if b is None:
            raise ShapeError(f"{kind} takes two operands")
        return _BINARY[kind](a, b)
    if kind in ("scalar-mul", "scalar_mul"):
        return scalar_mul(a, b)
    raise ValueError(f"unknown elementwise op {kind!r}")


# ---------------------------------------------------------------------------
# linear algebra and structure
# ---------------------------------------------------------------------------

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")

    def bw(g):
        ga = g @ b.data.T if a.requires_grad else None
        gb = a.data.T @ g if b.requires_grad else None
        return ga, gb

    return _make(a.data @ b.data, (a, b), bw, "matmul")


def transpose(a, axes=None) -> Tensor:
    a = as_tensor(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inverse = tuple(np.argsort(axes))
    return _make(np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inverse),), "transpose")


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"cannot reshape {a.shape} to {shape}") from None
    return _make(out, (a,), lambda g: (g.reshape(a.shape),), "reshape")


def getitem(a, index) -> Tensor:
    a = as_tensor(a)
    out = a.data[index]

    def bw(g):
        full = np.zeros_like(a.data)
        np.add.at(full, index, g)
        return (full,)

    return _make(np.array(out, copy=True), (a,), bw, "getitem")


def take(a, flat_index) -> Tensor:
    """Gather from the flattened tensor; repeated indices accumulate gradient."""
    a = as_tensor(a)
    idx = np.asarray(flat_index, dtype=np.intp)

    def bw(g):
        full = np.bincount(idx.ravel(), weights=g.ravel(), minlength=a.size)
        return (full.reshape(a.shape),)

    return _make(a.data.ravel()[idx], (a,), bw, "take")


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeError("stack of an empty list")
    shapes = {t.shape for t in tensors}
    if len(shapes) != 1:
        raise ShapeError(f"stack needs equal shapes, got {sorted(shapes)}")
    out = np.stack([t.data for t in tensors], axis=axis)

    def bw(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    return _make(out, tuple(tensors), bw, "stack")


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat of an empty list")
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise ShapeError(f"concat: {exc}") from None
    splits = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def bw(g):
        return tuple(np.split(g, splits, axis=axis))

    return _make(out, tuple(tensors), bw, "concat")


# ---------------------------------------------------------------------------
# reductions
# ---------------------------------------------------------------------------

def _check_axis(a: Tensor, axis):
    if axis is None:
        return None
    if not -a.ndim <= axis < a.ndim:
        raise ShapeError(f"axis {axis} out of range for shape {a.shape}")
    return axis % a.ndim


def reduce(a, kind: str, axis=None, keepdims: bool = False) -> Tensor:
    """sum / mean / min / max, over one axis or the whole tensor.

    min and max send the gradient to the first extremum (lowest index).
    """
    a = as_tensor(a)
    axis = _check_axis(a, axis)
    if kind == "sum":
        out = a.data.sum(axis=axis, keepdims=keepdims)

        def bw(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, a.shape).copy(),)

    elif kind == "mean":
        count = a.size if axis is None else a.shape[axis]
        out = a.data.mean(axis=axis, keepdims=keepdims)

        def bw(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g / count, a.shape).copy(),)

    elif kind in ("min", "max"):
        if a.size == 0:
            raise ShapeError(f"{kind} of an empty tensor")
        pick = np.argmin if kind == "min" else np.argmax
        if axis is None:
            pos = int(pick(a.data))
            out = a.data.ravel()[pos]
            if keepdims:
                out = np.reshape(out, (1,) * a.ndim)

            def bw(g):
                full = np.zeros(a.size)
                full[pos] = np.asarray(g).reshape(())
                return (full.reshape(a.shape),)

        else:
            pos = np.expand_dims(pick(a.data, axis=axis), axis)
            out = np.take_along_axis(a.data, pos, axis=axis)
            if not keepdims:
                out = np.squeeze(out, axis=axis)

            def bw(g):
                if not keepdims:
                    g = np.expand_dims(g, axis)
                full = np.zeros_like(a.data)
                np.put_along_axis(full, pos, g, axis=axis)
                return (full,)

    else:
        raise ValueError(f"unknown reduction {kind!r}")
    return _make(out, (a,), bw, kind)


def logsumexp(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    axis = _check_axis(a, axis)
    m = a.data.max(axis=axis, keepdims=True)
    e = np.exp(a.data - m)
    s = e.sum(axis=axis, keepdims=True)
    out = (np.log(s) + m).squeeze(axis)
    soft = e / s
    return _make(out, (a,), lambda g: (np.expand_dims(g, axis) * soft,), "logsumexp")


def row_softmax(a) -> Tensor:
    a = as_tensor(a)
    if a.ndim != 2:
        raise ShapeError(f"row_softmax expects a matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a.data)):
        raise DomainError("row_softmax received non-finite input")
    e = np.exp(a.data - a.data.max(axis=1, keepdims=True))
    out = e / e.sum(axis=1, keepdims=True)

    def bw(g):
        return (out * (g - (g * out).sum(axis=1, keepdims=True)),)

    return _make(out, (a,), bw, "row_softmax")


def pairwise_sq_dists(h) -> Tensor:
    """Squared Euclidean distances between all rows, clamped at zero."""
    h = as_tensor(h)
    if h.ndim != 2:
        raise ShapeError(f"pairwise_sq_dists expects a matrix, got shape {h.shape}")
    x = h.data
    sq = np.einsum("ij,ij->i", x, x)
    raw = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    active = raw > 0
    np.fill_diagonal(active, False)
    out = np.where(active, raw, 0.0)

    def bw(g):
        g = np.where(active, g, 0.0)
        gs = g + g.T
        return (2.0 * (gs.sum(axis=1)[:, None] * x - gs @ x),)

    return _make(out, (h,), bw, "pairwise_sq_dists")


def detach(a) -> Tensor:
    """Same values, no graph ancestry, no gradient."""
    a = as_tensor(a)
    return Tensor(a.data.copy(), op="detach")


# ---------------------------------------------------------------------------
# graph traversal
# ---------------------------------------------------------------------------

def _topo_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if node.node_id in seen:
            continue
        seen.add(node.node_id)
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and p.node_id not in seen:
                stack.append((p, False))
    return order


def backward(root: Tensor) -> None:
    """Accumulate d(root)/d(leaf) into ``leaf.grad`` for every reachable leaf
    with ``requires_grad``."""
    if root.size != 1:
        raise ShapeError(f"backward needs a scalar, got shape {root.shape}")
    if not root.requires_grad:
        return
    grads: dict[int, np.ndarray] = {root.node_id: np.ones_like(root.data)}
    for node in reversed(_topo_order(root)):
        g = grads.pop(node.node_id, None)
        if g is None:
            continue
        if node.is_leaf:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            pg = np.asarray(pg, dtype=np.float64)
            if parent.node_id in grads:
                grads[parent.node_id] = grads[parent.node_id] + pg
            else:
                grads[parent.node_id] = pg


def clip_global_norm(grads: Iterable, max_norm: float) -> float:
    """Rescale gradient arrays in place so their joint L2 norm is at most
    ``max_norm``.  Accepts Tensors (their ``.grad`` is clipped) or arrays.
    Returns the norm before clipping."""
    if max_norm <= 0:
        raise ValueError("max_norm must be positive")
    arrays = []
    for g in grads:
        if isinstance(g, Tensor):
            g = g.grad
        if g is not None:
            arrays.append(g)
    total = float(np.sqrt(sum(float(np.vdot(g, g)) for g in arrays)))
    if total > max_norm:
        scale = max_norm / total
        for g in arrays:
            g *= scale
    return total


def numeric_grad(fn: Callable[[np.ndarray], float], x: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar function of ``x``."""
    x = np.array(x, dtype=np.float64)
    out = np.zeros_like(x)
    flat = x.reshape(-1)
    grad = out.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = fn(x)
        flat[i] = orig - eps
        lo = fn(x)
        flat[i] = orig
        grad[i] = (hi - lo) / (2 * eps)
    return out
