"""Minimal dense-tensor engine with define-by-run reverse-mode differentiation.

Every op returns a new :class:`Tensor` that remembers its operands and a
backward rule.  Calling :meth:`Tensor.backward` on a scalar walks the recorded
graph in reverse topological order and accumulates ``.grad`` on every tensor
created with ``requires_grad=True``.

All data is float64.  A non-finite value produced by any forward op raises
:class:`NumericError`.
"""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DimensionError, NumericError

__all__ = [
    "Tensor",
    "tensor",
    "tape",
    "matmul",
    "conv2d",
    "add",
    "sub",
    "mul",
    "div",
    "relu",
    "sqrt",
    "sum",
    "mean",
    "flatten",
    "reshape",
    "take",
    "transpose",
    "separable_map",
    "softmax_cross_entropy",
    "grad_check",
]


class Tensor:
    """A float64 array plus the bookkeeping needed for backprop."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "op")
    __array_priority__ = 100.0

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        _parents: tuple["Tensor", ...] = (),
        _backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None,
        op: str = "leaf",
    ):
        arr = np.array(data, dtype=np.float64)
        if not np.isfinite(arr).all():
            raise NumericError(f"non-finite value produced by {op!r}")
        arr.setflags(write=False)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._parents = _parents
        self._backward = _backward
        self.op = op

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        if self.data.size != 1:
            raise DimensionError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self, grad: np.ndarray | None = None) -> None:
        """Accumulate d(self)/d(leaf) into every trainable leaf's ``.grad``."""
        if grad is None:
            if self.data.size != 1:
                raise DimensionError("backward() without a seed gradient needs a scalar")
            grad = np.ones_like(self.data)
        grads: dict[int, np.ndarray] = {id(self): np.asarray(grad, dtype=np.float64)}
        for node in reversed(tape(self)):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if not node._parents:
                if node.requires_grad:
                    node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = grads[key] + pg if key in grads else pg

    # operator sugar
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

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, op={self.op!r}{flag})"


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data, parents: tuple[Tensor, ...], backward, op: str) -> Tensor:
    # op outputs are fresh arrays or views of read-only parents, so skip the copy
    arr = np.asarray(data, dtype=np.float64)
    if not np.isfinite(arr).all():
        raise NumericError(f"non-finite value produced by {op!r}")
    if arr.flags.writeable:
        arr.setflags(write=False)
    t = Tensor.__new__(Tensor)
    t.data = arr
    t.requires_grad = any(p.requires_grad for p in parents)
    t.grad = None
    t._parents = parents
    t._backward = backward
    t.op = op
    return t


def tape(root: Tensor) -> list[Tensor]:
    """Nodes reachable from ``root`` in topological order (operands first)."""
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
        for p in node._parents:
            if id(p) not in seen and p.requires_grad:
                stack.append((p, False))
    return order


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape == b.shape or not b.shape:
        return
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast(a, b, "add")
    return _node(
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
        "add",
    )


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast(a, b, "sub")
    return _node(
        a.data - b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
        "sub",
    )


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast(a, b, "mul")
    return _node(
        a.data * b.data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
        "mul",
    )


def div(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast(a, b, "div")
    if np.any(b.data == 0.0):
        raise NumericError("division by zero")
    out = a.data / b.data
    return _node(
        out,
        (a, b),
        lambda g: (_unbroadcast(g / b.data, a.shape), _unbroadcast(-g * out / b.data, b.shape)),
        "div",
    )


def relu(x) -> Tensor:
    x = _as_tensor(x)
    mask = x.data > 0
    return _node(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,), "relu")


def sqrt(x) -> Tensor:
    x = _as_tensor(x)
    if np.any(x.data < 0):
        raise NumericError("sqrt of a negative value")
    out = np.sqrt(x.data)
    if x.requires_grad and np.any(out == 0):
        raise NumericError("sqrt gradient is unbounded at 0")
    return _node(out, (x,), lambda g: (g * 0.5 / out,), "sqrt")


def sum(x, axis: int | tuple[int, ...] | None = None) -> Tensor:  # noqa: A001
    x = _as_tensor(x)
    shape = x.shape

    def backward(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _node(x.data.sum(axis=axis), (x,), backward, "sum")


def mean(x, axis: int | tuple[int, ...] | None = None) -> Tensor:
    x = _as_tensor(x)
    if axis is None:
        n = x.size
    else:
        axes = (axis,) if isinstance(axis, int) else axis
        n = int(np.prod([x.shape[a] for a in axes]))
    return mul(sum(x, axis), 1.0 / n)


def reshape(x, shape: Sequence[int]) -> Tensor:
    x = _as_tensor(x)
    shape = tuple(int(s) for s in shape)
    if int(np.prod(shape)) != x.size:
        raise DimensionError(f"cannot reshape {x.shape} into {shape}")
    src = x.shape
    return _node(x.data.reshape(shape), (x,), lambda g: (g.reshape(src),), "reshape")


def flatten(x) -> Tensor:
    x = _as_tensor(x)
    return reshape(x, (x.size,))


def take(x, indices, axis: int) -> Tensor:
    """Select ``indices`` along ``axis`` (gather); gradient scatters back."""
    x = _as_tensor(x)
    idx = np.asarray(indices, dtype=np.intp)

    def backward(g):
        out = np.zeros(x.shape)
        moved = np.moveaxis(out, axis, 0)
        np.add.at(moved, idx, np.moveaxis(g, axis, 0))
        return (out,)

    return _node(np.take(x.data, idx, axis=axis), (x,), backward, "take")


def transpose(x) -> Tensor:
    """Reverse the axes of ``x``."""
    x = _as_tensor(x)
    return _node(x.data.T, (x,), lambda g: (g.T,), "transpose")


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul expects 2D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul inner extents differ: {a.shape} @ {b.shape}")
    return _node(
        a.data @ b.data,
        (a, b),
        lambda g: (g @ b.data.T, a.data.T @ g),
        "matmul",
    )


def conv2d(x, kernel) -> Tensor:
    """Valid, stride-1 cross-correlation of ``x[c_in,H,W]`` with ``kernel[c_out,c_in,k,k]``."""
    x, kernel = _as_tensor(x), _as_tensor(kernel)
    if x.ndim != 3 or kernel.ndim != 4:
        raise DimensionError(f"conv2d expects 3D input and 4D kernel, got {x.shape}, {kernel.shape}")
    c_in, H, W = x.shape
    c_out, kc, k, k2 = kernel.shape
    if kc != c_in or k != k2:
        raise DimensionError(f"kernel {kernel.shape} incompatible with input {x.shape}")
    if k > H or k > W:
        raise DimensionError(f"kernel size {k} exceeds input extent {(H, W)}")
    # patches[c, i, j, u, v] = x[c, i+u, j+v]
    patches = sliding_window_view(x.data, (k, k), axis=(1, 2))
    out = np.einsum("cijuv,ocuv->oij", patches, kernel.data)

    def backward(g):
        dk = np.einsum("cijuv,oij->ocuv", patches, g)
        dx = np.zeros(x.shape)
        Ho, Wo = g.shape[1:]
        for u in range(k):
            for v in range(k):
                dx[:, u : u + Ho, v : v + Wo] += np.einsum("oc,oij->cij", kernel.data[:, :, u, v], g)
        return dx, dk

    return _node(out, (x, kernel), backward, "conv2d")


def separable_map(x, left: np.ndarray, right: np.ndarray) -> Tensor:
    """``y[a, b, ...] = sum_pq left[a, p] * x[p, q, ...] * right[b, q]``.

    A fixed linear map applied independently along the first two axes; the
    matrices are constants.  Used for resampling cortical sheets.
    """
    x = _as_tensor(x)
    left = np.asarray(left, dtype=np.float64)
    right = np.asarray(right, dtype=np.float64)
    if x.ndim < 2 or left.shape[1] != x.shape[0] or right.shape[1] != x.shape[1]:
        raise DimensionError(
            f"separable_map: matrices {left.shape}, {right.shape} do not fit input {x.shape}"
        )
    return _node(
        _separable(left, x.data, right),
        (x,),
        lambda g: (_separable(left.T, g, right.T),),
        "separable_map",
    )


def _separable(left: np.ndarray, x: np.ndarray, right: np.ndarray) -> np.ndarray:
    # two tensordots beat a three-operand einsum by a wide margin
    t = np.tensordot(x, right, axes=([1], [1]))
    return np.moveaxis(np.tensordot(left, t, axes=([1], [0])), -1, 1)


def softmax_cross_entropy(logits, labels) -> Tensor:
    """Mean cross-entropy of ``logits[batch, classes]`` against integer ``labels``."""
    logits = _as_tensor(logits)
    labels = np.asarray(labels, dtype=np.intp)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise DimensionError(f"logits {logits.shape} and labels {labels.shape} disagree")
    if labels.min(initial=0) < 0 or labels.max(initial=0) >= logits.shape[1]:
        raise DimensionError("label out of range")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(z).sum(axis=1))
    rows = np.arange(len(labels))
    loss = np.mean(logsumexp - z[rows, labels])

    def backward(g):
        p = np.exp(z - logsumexp[:, None])
        p[rows, labels] -= 1.0
        return (g * p / len(labels),)

    return _node(loss, (logits,), backward, "softmax_cross_entropy")


def grad_check(f: Callable[[Tensor], Tensor], x, eps: float = 1e-5) -> float:
    """Max relative disagreement between backprop and central differences.

    ``f`` maps a tensor to a scalar tensor.  Relative error per coordinate is
    ``|analytic - numeric| / (|analytic| + |numeric| + 1e-12)``.
    """
    if not 0 < eps <= 1e-2:
        raise ValueError("eps must lie in (0, 1e-2]")
    base = np.array(x.data if isinstance(x, Tensor) else x, dtype=np.float64)
    leaf = Tensor(base, requires_grad=True)
    out = f(leaf)
    if out.size != 1:
        raise DimensionError("grad_check needs a scalar-valued function")
    out.backward()
    analytic = np.zeros_like(base) if leaf.grad is None else leaf.grad

    numeric = np.empty_like(base)
    flat = base.reshape(-1)
    num_flat = numeric.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        up = f(Tensor(base)).item()
        flat[i] = orig - eps
        down = f(Tensor(base)).item()
        flat[i] = orig
        num_flat[i] = (up - down) / (2 * eps)
    err = np.abs(analytic - numeric) / (np.abs(analytic) + np.abs(numeric) + 1e-12)
    return float(err.max())
