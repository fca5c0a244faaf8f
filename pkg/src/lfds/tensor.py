"""Dense float64 tensors with reverse-mode automatic differentiation.

Every differentiable operation records its parents and a local backward
rule on the output tensor.  :func:`backward` orders the recorded graph
topologically (a :class:`Tape`) and replays the rules in reverse.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ContractError, EmptyInputError, ShapeError

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (used for evaluation)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def is_grad_enabled() -> bool:
    return _grad_enabled


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.array(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable | None = None
        self.op = ""
        self.name = name

    # -- bookkeeping -----------------------------------------------------

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
    def is_leaf(self) -> bool:
        return not self._parents

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> Tensor:
        return Tensor(self.data)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"

    def __len__(self) -> int:
        return self.shape[0]

    # -- arithmetic --------------------------------------------------------

    def __add__(self, other):
        other = _lift(other)
        return _make(
            self.data + other.data,
            (self, other),
            lambda g: (_unbroadcast(g, self.shape), _unbroadcast(g, other.shape)),
            "add",
        )

    __radd__ = __add__

    def __sub__(self, other):
        other = _lift(other)
        return _make(
            self.data - other.data,
            (self, other),
            lambda g: (_unbroadcast(g, self.shape), -_unbroadcast(g, other.shape)),
            "sub",
        )

    def __rsub__(self, other):
        return _lift(other) - self

    def __neg__(self):
        return _make(-self.data, (self,), lambda g: (-g,), "neg")

    def __mul__(self, other):
        other = _lift(other)
        a, b = self.data, other.data
        return _make(
            a * b,
            (self, other),
            lambda g: (_unbroadcast(g * b, self.shape), _unbroadcast(g * a, other.shape)),
            "mul",
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = _lift(other)
        a, b = self.data, other.data
        return _make(
            a / b,
            (self, other),
            lambda g: (
                _unbroadcast(g / b, self.shape),
                _unbroadcast(-g * a / (b * b), other.shape),
            ),
            "div",
        )

    def __pow__(self, exponent: float):
        if isinstance(exponent, Tensor):
            raise TypeError("only constant exponents are supported")
        a = self.data
        return _make(
            a**exponent, (self,), lambda g: (g * exponent * a ** (exponent - 1),), "pow"
        )

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(_lift(other), self)

    # -- shape manipulation --------------------------------------------------

    def reshape(self, *shape) -> Tensor:
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        src = self.shape
        return _make(self.data.reshape(shape), (self,), lambda g: (g.reshape(src),), "reshape")

    def transpose(self, *axes) -> Tensor:
        if not axes:
            axes = tuple(range(self.ndim - 2)) + (self.ndim - 1, self.ndim - 2)
        elif len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        inverse = tuple(np.argsort(axes))
        return _make(
            self.data.transpose(axes), (self,), lambda g: (g.transpose(inverse),), "transpose"
        )

    @property
    def T(self) -> Tensor:
        return self.transpose()

    def __getitem__(self, index) -> Tensor:
        src_shape = self.shape

        def back(g):
            out = np.zeros(src_shape)
            np.add.at(out, index, g)
            return (out,)

        return _make(self.data[index], (self,), back, "getitem")

    # -- reductions ------------------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False) -> Tensor:
        src_shape = self.shape

        def back(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, src_shape).copy(),)

        return _make(self.data.sum(axis=axis, keepdims=keepdims), (self,), back, "sum")

    def mean(self, axis=None, keepdims: bool = False) -> Tensor:
        count = self.data.size if axis is None else np.prod(
            [self.shape[a] for a in np.atleast_1d(axis)]
        )
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    def max(self, axis: int = 0) -> Tensor:
        return amax(self, axis)

    def backward(self) -> None:
        backward(self)


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (the inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _make(data, parents: Sequence[Tensor], backward_fn, op: str) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data if isinstance(data, np.ndarray) else np.asarray(data, dtype=np.float64)
    out.grad = None
    out.name = None
    out.op = op
    needs = _grad_enabled and any(p.requires_grad for p in parents)
    out.requires_grad = needs
    if needs:
        out._parents = tuple(parents)
        out._backward = backward_fn
    else:
        out._parents = ()
        out._backward = None
    return out


def make_op(data, parents: Sequence[Tensor], backward_fn, op: str) -> Tensor:
    """Create a recorded tensor from a forward result and a backward rule.

    ``backward_fn`` maps the output gradient to one gradient (or ``None``)
    per parent.  Used by the fused operations in :mod:`lfds.functional`.
    """
    return _make(data, parents, backward_fn, op)


class Tape:
    """Topologically ordered record of the operations reachable from a loss."""

    def __init__(self, nodes: list[Tensor]):
        self.nodes = nodes

    @classmethod
    def from_output(cls, root: Tensor) -> Tape:
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
                if id(parent) not in seen and parent.requires_grad:
                    stack.append((parent, False))
        return cls(order)

    def __len__(self) -> int:
        return len(self.nodes)

    def __iter__(self):
        return iter(self.nodes)


def backward(loss: Tensor, tape: Tape | None = None) -> Tape:
    """Populate ``.grad`` on every tensor recorded under ``loss``.

    Leaf gradients accumulate across calls; call ``zero_grad`` between steps.
    """
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if tape is None:
        tape = Tape.from_output(loss)
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(tape.nodes):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.is_leaf:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        node.grad = g
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = np.asarray(pg, dtype=np.float64)
    return tape


# -- free-standing operations ---------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product with numpy batch broadcasting on leading axes."""
    a, b = _lift(a), _lift(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    x, y = a.data, b.data

    def back(g):
        ga = g @ np.swapaxes(y, -1, -2)
        gb = np.swapaxes(x, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _make(x @ y, (a, b), back, "matmul")


def outer(p: Tensor, x: Tensor) -> Tensor:
    p, x = _lift(p), _lift(x)
    if p.ndim != 1 or x.ndim != 1:
        raise ShapeError(f"outer expects vectors, got {p.shape} and {x.shape}")
    u, v = p.data, x.data
    return _make(np.outer(u, v), (p, x), lambda g: (g @ v, u @ g), "outer")


def concat(tensors: Iterable[Tensor], axis: int = 0) -> Tensor:
    tensors = [_lift(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]
    return _make(
        np.concatenate([t.data for t in tensors], axis=axis),
        tensors,
        lambda g: tuple(np.split(g, splits, axis=axis)),
        "concat",
    )


def stack(tensors: Iterable[Tensor], axis: int = 0) -> Tensor:
    tensors = [_lift(t) for t in tensors]
    n = len(tensors)
    return _make(
        np.stack([t.data for t in tensors], axis=axis),
        tensors,
        lambda g: tuple(np.take(g, i, axis=axis) for i in range(n)),
        "stack",
    )


def amax(a: Tensor, axis: int = 0) -> Tensor:
    """Maximum along ``axis``; the gradient goes to the first maximal entry."""
    if a.shape[axis] == 0:
        raise EmptyInputError("max over an empty axis")
    idx = np.expand_dims(np.argmax(a.data, axis=axis), axis)
    out = np.take_along_axis(a.data, idx, axis=axis)
    src_shape = a.shape

    def back(g):
        full = np.zeros(src_shape)
        np.put_along_axis(full, idx, np.expand_dims(g, axis), axis=axis)
        return (full,)

    return _make(np.squeeze(out, axis=axis), (a,), back, "max")


def rowwise_max(a: Tensor) -> Tensor:
    """Column-wise maximum over the rows of an ``[n, d]`` matrix."""
    a = _lift(a)
    if a.ndim != 2:
        raise ShapeError(f"rowwise_max expects a matrix, got shape {a.shape}")
    if a.shape[0] == 0:
        raise EmptyInputError("rowwise_max of a matrix with no rows")
    return amax(a, axis=0)


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _make(out, (a,), lambda g: (g * out,), "exp")


def log(a: Tensor) -> Tensor:
    x = a.data
    return _make(np.log(x), (a,), lambda g: (g / x,), "log")
