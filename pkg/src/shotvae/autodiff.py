"""Dense float64 tensors with reverse-mode automatic differentiation.

Everything downstream (encoders, decoders, every loss term) is built from
the ops in this module.  Values are numpy arrays in row-major order;
broadcasting follows numpy's trailing-dimension rules.  The computation
graph is recorded implicitly: each op attaches its parents and a backward
rule to the output tensor.  ``backward`` on a scalar loss topologically
sorts that record and accumulates gradients into every reachable tensor
that has ``requires_grad`` set.

Design notes:

* float64 everywhere; the verification suite needs tight tolerances.
* ``log`` raises on non-positive input instead of clamping.  Callers that
  want a probability floor must clamp explicitly (see ``clip``).
* Repeated ``backward`` calls accumulate into ``grad``; use ``zero_grad``
  between optimizer steps.
"""

from __future__ import annotations

from typing import Callable, Iterable, Optional, Sequence, Union

import numpy as np

__all__ = [
    "Tensor",
    "ShapeError",
    "DomainError",
    "GraphError",
    "tensor",
    "matmul",
    "add",
    "sub",
    "mul",
    "div",
    "exp",
    "log",
    "relu",
    "sigmoid",
    "softmax",
    "square",
    "scale",
    "clip",
    "concat",
    "take_rows",
    "stop_gradient",
    "reshape",
    "reduce_sum",
    "reduce_mean",
    "backward",
    "zero_grad",
]


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested op."""


class DomainError(ValueError):
    """Operand values fall outside the op's mathematical domain."""


class GraphError(RuntimeError):
    """The computation graph is used in an unsupported way."""


ArrayLike = Union[np.ndarray, float, int, Sequence]


class Tensor:
    """A node in the computation graph.

    ``data`` is always a float64 ndarray.  ``grad`` stays ``None`` until a
    backward pass reaches this tensor (only when ``requires_grad``).
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "_op")

    def __init__(
        self,
        data: ArrayLike,
        requires_grad: bool = False,
        _parents: tuple = (),
        _backward: Optional[Callable[[np.ndarray], tuple]] = None,
        _op: str = "leaf",
    ):
        arr = np.asarray(data, dtype=np.float64)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self._parents = _parents
        self._backward = _backward
        self._op = _op

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise GraphError(f"item() requires a scalar tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return stop_gradient(self)

    # Operator sugar; all graph building goes through the module functions.
    def __add__(self, other):
        return add(self, _coerce(other))

    def __radd__(self, other):
        return add(_coerce(other), self)

    def __sub__(self, other):
        return sub(self, _coerce(other))

    def __rsub__(self, other):
        return sub(_coerce(other), self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, _coerce(other))

    def __rmul__(self, other):
        return self.__mul__(other)

    def __truediv__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, 1.0 / float(other))
        return div(self, _coerce(other))

    def __matmul__(self, other):
        return matmul(self, _coerce(other))

    def __neg__(self):
        return scale(self, -1.0)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self._op}, requires_grad={self.requires_grad})"


def _coerce(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def tensor(data: ArrayLike, requires_grad: bool = False) -> Tensor:
    """Build a leaf tensor."""
    return Tensor(data, requires_grad=requires_grad)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _binary(a: Tensor, b: Tensor, out_data: np.ndarray, op: str, bwd) -> Tensor:
    return Tensor(out_data, _parents=(a, b), _backward=bwd, _op=op)


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "add")
    out = a.data + b.data
    return _binary(a, b, out, "add", lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "sub")
    out = a.data - b.data
    return _binary(a, b, out, "sub", lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "mul")
    out = a.data * b.data
    return _binary(
        a, b, out, "mul",
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def div(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "div")
    if np.any(b.data == 0.0):
        raise DomainError("div: denominator contains zero")
    out = a.data / b.data
    return _binary(
        a, b, out, "div",
        lambda g: (
            _unbroadcast(g / b.data, a.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.shape),
        ),
    )


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"matmul: expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dimensions differ, {a.shape} vs {b.shape}")
    out = a.data @ b.data
    return _binary(
        a, b, out, "matmul",
        lambda g: (g @ b.data.T, a.data.T @ g),
    )


def exp(t: Tensor) -> Tensor:
    out = np.exp(t.data)
    return Tensor(out, _parents=(t,), _backward=lambda g: (g * out,), _op="exp")


def log(t: Tensor) -> Tensor:
    if np.any(t.data <= 0.0):
        raise DomainError("log: input must be strictly positive")
    out = np.log(t.data)
    return Tensor(out, _parents=(t,), _backward=lambda g: (g / t.data,), _op="log")


def relu(t: Tensor) -> Tensor:
    out = np.maximum(t.data, 0.0)
    mask = t.data > 0.0
    return Tensor(out, _parents=(t,), _backward=lambda g: (g * mask,), _op="relu")


def sigmoid(t: Tensor) -> Tensor:
    x = t.data
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return Tensor(out, _parents=(t,), _backward=lambda g: (g * out * (1.0 - out),), _op="sigmoid")


def softmax(t: Tensor) -> Tensor:
    """Softmax along the last dimension, computed with max subtraction."""
    x = t.data
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=-1, keepdims=True)

    def bwd(g):
        dot = (g * out).sum(axis=-1, keepdims=True)
        return (out * (g - dot),)

    return Tensor(out, _parents=(t,), _backward=bwd, _op="softmax")


def square(t: Tensor) -> Tensor:
    out = t.data * t.data
    return Tensor(out, _parents=(t,), _backward=lambda g: (2.0 * g * t.data,), _op="square")


def scale(t: Tensor, c: float) -> Tensor:
    c = float(c)
    out = t.data * c
    return Tensor(out, _parents=(t,), _backward=lambda g: (g * c,), _op="scale")


def clip(t: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp values to [lo, hi]; gradient is zero where the clamp engages."""
    if not lo < hi:
        raise DomainError(f"clip: need lo < hi, got [{lo}, {hi}]")
    out = np.clip(t.data, lo, hi)
    mask = (t.data >= lo) & (t.data <= hi)
    return Tensor(out, _parents=(t,), _backward=lambda g: (g * mask,), _op="clip")


def concat(a: Tensor, b: Tensor, axis: int = -1) -> Tensor:
    try:
        out = np.concatenate([a.data, b.data], axis=axis)
    except ValueError:
        raise ShapeError(f"concat: shapes {a.shape} and {b.shape} on axis {axis}") from None
    split = a.shape[axis]

    def bwd(g):
        ga, gb = np.split(g, [split], axis=axis)
        return ga, gb

    return _binary(a, b, out, "concat", bwd)


def take_rows(t: Tensor, idx: np.ndarray) -> Tensor:
    """Gather rows of a 2-D tensor; backward scatter-adds."""
    if t.data.ndim != 2:
        raise ShapeError(f"take_rows: expects a 2-D tensor, got {t.shape}")
    idx = np.asarray(idx, dtype=np.int64)
    out = t.data[idx]

    def bwd(g):
        acc = np.zeros_like(t.data)
        np.add.at(acc, idx, g)
        return (acc,)

    return Tensor(out, _parents=(t,), _backward=bwd, _op="take_rows")


def stop_gradient(t: Tensor) -> Tensor:
    """Value copy that blocks gradient flow."""
    return Tensor(t.data.copy(), requires_grad=False, _op="stop_gradient")


def reshape(t: Tensor, shape: tuple) -> Tensor:
    try:
        out = t.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot view {t.shape} as {shape}") from None
    return Tensor(out, _parents=(t,), _backward=lambda g: (g.reshape(t.shape),), _op="reshape")


def _check_axis(t: Tensor, axis: Optional[int], op: str) -> Optional[int]:
    if axis is None:
        return None
    if not -t.data.ndim <= axis < t.data.ndim:
        raise ShapeError(f"{op}: axis {axis} out of range for shape {t.shape}")
    return axis % t.data.ndim if t.data.ndim else 0


def reduce_sum(t: Tensor, axis: Optional[int] = None) -> Tensor:
    axis = _check_axis(t, axis, "reduce_sum")
    out = t.data.sum(axis=axis)

    def bwd(g):
        if axis is None:
            return (np.full_like(t.data, float(g)),)
        return (np.broadcast_to(np.expand_dims(g, axis), t.shape).copy(),)

    return Tensor(out, _parents=(t,), _backward=bwd, _op="sum")


def reduce_mean(t: Tensor, axis: Optional[int] = None) -> Tensor:
    axis = _check_axis(t, axis, "reduce_mean")
    count = t.data.size if axis is None else t.shape[axis]
    out = t.data.mean(axis=axis)

    def bwd(g):
        if axis is None:
            return (np.full_like(t.data, float(g) / count),)
        return (np.broadcast_to(np.expand_dims(g, axis), t.shape).copy() / count,)

    return Tensor(out, _parents=(t,), _backward=bwd, _op="mean")


def _topo_order(root: Tensor) -> list:
    order: list = []
    seen: set = set()
    stack = [(root, False)]
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
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(loss: Tensor) -> None:
    """Populate ``grad`` on every ``requires_grad`` tensor reachable from ``loss``.

    ``loss`` must be scalar.  Gradients accumulate across repeated calls.
    """
    if loss.data.size != 1:
        raise GraphError(f"backward: loss must be scalar, got shape {loss.shape}")
    grads: dict = {id(loss): np.ones_like(loss.data)}
    for node in reversed(_topo_order(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.requires_grad:
            if node.grad is None:
                node.grad = np.zeros_like(node.data)
            node.grad += g
        if node._backward is None:
            continue
        parent_grads = node._backward(g)
        for parent, pg in zip(node._parents, parent_grads):
            if pg is None:
                continue
            prev = grads.get(id(parent))
            # Out-of-place accumulation: backward rules may hand the same
            # ndarray to several parents, so in-place += would alias.
            grads[id(parent)] = pg if prev is None else prev + pg


def zero_grad(params: Iterable[Tensor]) -> None:
    for p in params:
        p.zero_grad()
