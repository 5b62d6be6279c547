"""Reverse-mode automatic differentiation on a dynamically recorded tape.

Values are numpy arrays (0-d, 1-d or 2-d).  Every primitive applied to a
:class:`Var` is appended to the owning :class:`Tape` together with its
vector-Jacobian product, and :meth:`Tape.backward` sweeps the record in
reverse to accumulate adjoints.

The module-level functions (``exp``, ``tanh``, ``select`` ...) accept either
``Var`` or plain numbers/arrays, so model code can be written once and run
both for plain evaluation and under differentiation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np


class ShapeError(ValueError):
    pass


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


def _broadcast_check(*vals: np.ndarray) -> None:
    try:
        np.broadcast_shapes(*(np.shape(v) for v in vals))
    except ValueError as exc:
        raise ShapeError(str(exc)) from None


# Each primitive: forward(*values, **params) -> value
#                 backward(g, out, *values, **params) -> tuple of input grads
# Input grads may be None for non-differentiable inputs.

def _matmul_fwd(a, b):
    if a.ndim == 0 or b.ndim == 0 or a.shape[-1] != b.shape[0]:
        raise ShapeError(f"matmul shape mismatch {a.shape} @ {b.shape}")
    return a @ b


def _matmul_bwd(g, out, a, b, needs=(True, True)):
    if a.ndim == 2 and b.ndim == 2:
        return (g @ b.T if needs[0] else None), (a.T @ g if needs[1] else None)
    if a.ndim == 2 and b.ndim == 1:
        return np.outer(g, b), a.T @ g
    if a.ndim == 1 and b.ndim == 2:
        return b @ g, np.outer(a, g)
    return g * b, g * a


def _select_fwd(cond, a, b):
    _broadcast_check(cond, a, b)
    return np.where(cond, a, b)


def _select_bwd(g, out, cond, a, b):
    zero = np.zeros_like(g)
    return None, np.where(cond, g, zero), np.where(cond, zero, g)


def _sum_bwd(g, out, a, axis=None, keepdims=False):
    if axis is not None and not keepdims:
        g = np.expand_dims(g, axis)
    return (np.broadcast_to(g, a.shape).copy(),)


def _mean_bwd(g, out, a, axis=None, keepdims=False):
    n = a.size if axis is None else a.shape[axis]
    return (_sum_bwd(g, out, a, axis=axis, keepdims=keepdims)[0] / n,)


def _getitem_bwd(g, out, a, index=None):
    grad = np.zeros_like(a, dtype=float)
    np.add.at(grad, index, g)
    return (grad,)


def _concat_fwd(*vals, axis=0):
    return np.concatenate(vals, axis=axis)


def _concat_bwd(g, out, *vals, axis=0):
    sizes = np.cumsum([v.shape[axis] for v in vals])[:-1]
    return tuple(np.split(g, sizes, axis=axis))


def _stack_bwd(g, out, *vals, axis=0):
    return tuple(np.take(g, i, axis=axis) for i in range(len(vals)))


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


PRIMITIVES: dict[str, tuple[Callable, Callable]] = {
    "add": (lambda a, b: (_broadcast_check(a, b), a + b)[1], lambda g, o, a, b: (g, g)),
    "sub": (lambda a, b: (_broadcast_check(a, b), a - b)[1], lambda g, o, a, b: (g, -g)),
    "mul": (lambda a, b: (_broadcast_check(a, b), a * b)[1], lambda g, o, a, b: (g * b, g * a)),
    "div": (lambda a, b: (_broadcast_check(a, b), a / b)[1], lambda g, o, a, b: (g / b, -g * o / b)),
    "neg": (lambda a: -a, lambda g, o, a: (-g,)),
    "reciprocal": (lambda a: 1.0 / a, lambda g, o, a: (-g * o * o,)),
    "square": (lambda a: a * a, lambda g, o, a: (2.0 * g * a,)),
    "matmul": (_matmul_fwd, _matmul_bwd),
    "transpose": (lambda a: a.T, lambda g, o, a: (g.T,)),
    "reshape": (lambda a, shape=None: a.reshape(shape), lambda g, o, a, shape=None: (g.reshape(a.shape),)),
    "tanh": (np.tanh, lambda g, o, a: (g * (1.0 - o * o),)),
    "sigmoid": (_sigmoid, lambda g, o, a: (g * o * (1.0 - o),)),
    "exp": (np.exp, lambda g, o, a: (g * o,)),
    "sin": (np.sin, lambda g, o, a: (g * np.cos(a),)),
    "cos": (np.cos, lambda g, o, a: (-g * np.sin(a),)),
    "sqrt": (np.sqrt, lambda g, o, a: (0.5 * g / o,)),
    "select": (_select_fwd, _select_bwd),
    "sum": (lambda a, axis=None, keepdims=False: np.sum(a, axis=axis, keepdims=keepdims), _sum_bwd),
    "mean": (lambda a, axis=None, keepdims=False: np.mean(a, axis=axis, keepdims=keepdims), _mean_bwd),
    "getitem": (lambda a, index=None: a[index], _getitem_bwd),
    "concat": (_concat_fwd, _concat_bwd),
    "stack": (lambda *vals, axis=0: np.stack(vals, axis=axis), _stack_bwd),
}

# inputs of these ops that never receive gradients
_NONDIFF_ARGS = {"select": (0,)}

# backward rules that can skip work for constant inputs
_NEEDS_AWARE = {"matmul"}


@dataclass
class _Node:
    op: str
    parents: tuple[Any, ...]
    params: dict[str, Any]


class Tape:
    """Ordered record of primitive applications.

    A tape is single-threaded; create one per forward/backward pass.
    """

    def __init__(self) -> None:
        self._nodes: list[_Node | None] = []
        self._values: list[np.ndarray] = []

    def __len__(self) -> int:
        return len(self._nodes)

    def leaf(self, value: Any) -> Var:
        self._nodes.append(None)
        self._values.append(np.array(value, dtype=float))
        return Var(self, len(self._nodes) - 1)

    def record(self, op: str, *inputs: Any, **params: Any) -> Var:
        """Apply primitive ``op`` to ``inputs`` and record it."""
        try:
            forward, _ = PRIMITIVES[op]
        except KeyError:
            raise ValueError(f"unknown primitive {op!r}") from None
        parents = []
        vals = []
        for i, x in enumerate(inputs):
            if isinstance(x, Var):
                if x.tape is not self:
                    raise ValueError("inputs belong to a different tape")
                parents.append(x.index)
                vals.append(x.value)
            else:
                arr = np.asarray(x) if i in _NONDIFF_ARGS.get(op, ()) else np.asarray(x, dtype=float)
                parents.append(arr)
                vals.append(arr)
        value = np.asarray(forward(*vals, **params), dtype=float)
        self._nodes.append(_Node(op, tuple(parents), params))
        self._values.append(value)
        return Var(self, len(self._nodes) - 1)

    def backward(self, output: Var) -> Gradients:
        """Adjoints of the scalar ``output`` with respect to every recorded value."""
        if output.tape is not self:
            raise ValueError("output belongs to a different tape")
        if output.value.size != 1:
            raise ShapeError(f"backward needs a scalar output, got shape {output.value.shape}")
        adj: list[np.ndarray | None] = [None] * len(self._nodes)
        adj[output.index] = np.ones_like(output.value)
        for i in range(output.index, -1, -1):
            node = self._nodes[i]
            g = adj[i]
            if node is None or g is None:
                continue
            vals = [self._values[p] if isinstance(p, int) else p for p in node.parents]
            if node.op in _NEEDS_AWARE:
                needs = tuple(isinstance(p, int) for p in node.parents)
                grads = PRIMITIVES[node.op][1](g, self._values[i], *vals, needs=needs, **node.params)
            else:
                grads = PRIMITIVES[node.op][1](g, self._values[i], *vals, **node.params)
            for p, v, pg in zip(node.parents, vals, grads):
                if not isinstance(p, int) or pg is None:
                    continue
                pg = _unbroadcast(np.asarray(pg, dtype=float), v.shape)
                adj[p] = pg if adj[p] is None else adj[p] + pg
        return Gradients(self, adj)


@dataclass
class Gradients:
    tape: Tape
    adjoints: list[np.ndarray | None] = field(repr=False)

    def __getitem__(self, var: Var) -> np.ndarray:
        if var.tape is not self.tape:
            raise ValueError("variable belongs to a different tape")
        g = self.adjoints[var.index]
        return np.zeros_like(var.value) if g is None else g


class Var:
    """Handle to a value recorded on a :class:`Tape`."""

    __slots__ = ("tape", "index")
    __array_ufunc__ = None

    def __init__(self, tape: Tape, index: int) -> None:
        self.tape = tape
        self.index = index

    @property
    def value(self) -> np.ndarray:
        return self.tape._values[self.index]

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def T(self) -> Var:
        return self.tape.record("transpose", self)

    def __repr__(self) -> str:
        return f"Var(shape={self.shape}, index={self.index})"

    def __add__(self, other):
        return self.tape.record("add", self, other)

    def __radd__(self, other):
        return self.tape.record("add", other, self)

    def __sub__(self, other):
        return self.tape.record("sub", self, other)

    def __rsub__(self, other):
        return self.tape.record("sub", other, self)

    def __mul__(self, other):
        return self.tape.record("mul", self, other)

    def __rmul__(self, other):
        return self.tape.record("mul", other, self)

    def __truediv__(self, other):
        return self.tape.record("div", self, other)

    def __rtruediv__(self, other):
        return self.tape.record("div", other, self)

    def __neg__(self):
        return self.tape.record("neg", self)

    def __pow__(self, power):
        if power != 2:
            raise ValueError("only squaring is supported")
        return self.tape.record("square", self)

    def __matmul__(self, other):
        return self.tape.record("matmul", self, other)

    def __rmatmul__(self, other):
        return self.tape.record("matmul", other, self)

    def __getitem__(self, index):
        return self.tape.record("getitem", self, index=index)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        return self.tape.record("reshape", self, shape=shape)


def value(x: Any) -> np.ndarray:
    """Plain numeric value of ``x`` whether or not it is a ``Var``."""
    return x.value if isinstance(x, Var) else np.asarray(x, dtype=float)


def _tape_of(*xs: Any) -> Tape | None:
    for x in xs:
        if isinstance(x, Var):
            return x.tape
    return None


def _unary(op: str, fn: Callable) -> Callable:
    def apply(x):
        if isinstance(x, Var):
            return x.tape.record(op, x)
        return fn(np.asarray(x, dtype=float))

    apply.__name__ = op
    return apply


exp = _unary("exp", np.exp)
sin = _unary("sin", np.sin)
cos = _unary("cos", np.cos)
tanh = _unary("tanh", np.tanh)
sqrt = _unary("sqrt", np.sqrt)
sigmoid = _unary("sigmoid", _sigmoid)
square = _unary("square", np.square)


def select(cond: Any, a: Any, b: Any) -> Any:
    """Elementwise ``a`` where ``cond`` else ``b``; ``cond`` is not differentiated."""
    cond = np.asarray(cond, dtype=bool)
    tape = _tape_of(a, b)
    if tape is None:
        return np.where(cond, np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    return tape.record("select", cond, a, b)


def sum(x: Any, axis: int | None = None) -> Any:  # noqa: A001
    if isinstance(x, Var):
        return x.tape.record("sum", x, axis=axis)
    return np.sum(x, axis=axis)


def mean(x: Any, axis: int | None = None) -> Any:
    if isinstance(x, Var):
        return x.tape.record("mean", x, axis=axis)
    return np.mean(x, axis=axis)


def concat(xs: list[Any], axis: int = 0) -> Any:
    tape = _tape_of(*xs)
    if tape is None:
        return np.concatenate([np.asarray(x, dtype=float) for x in xs], axis=axis)
    return tape.record("concat", *xs, axis=axis)


def stack(xs: list[Any], axis: int = 0) -> Any:
    tape = _tape_of(*xs)
    if tape is None:
        return np.stack([np.asarray(x, dtype=float) for x in xs], axis=axis)
    return tape.record("stack", *xs, axis=axis)


def reshape(x: Any, shape: tuple[int, ...]) -> Any:
    if isinstance(x, Var):
        return x.reshape(shape)
    return np.reshape(x, shape)
