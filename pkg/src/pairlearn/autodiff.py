"""Minimal reverse-mode differentiation over dense float64 arrays.

Only the operations the training and analysis code needs are provided: affine
layers, relu/hinge, softmax, exp/log, clipping, elementwise arithmetic with
broadcasting, row gathers, and sum/mean reductions.

Reductions over the output-node axis (softmax normaliser, inner products, KL
sums) go through :func:`canonical_sum`, which adds the terms in sorted order.
That makes those results independent of the order of the output nodes, bit for
bit, which the permutation-invariance guarantees of the losses rely on.

Calling :func:`backward` a second time on a graph whose gradients are already
populated raises; reset with :func:`zero_grad` first.
"""

from __future__ import annotations

from typing import Callable, Iterable, Mapping

import numpy as np

from .errors import ContractError, DomainError


class Value:
    """A float64 array node in a computation record."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")
    # make ``ndarray <op> Value`` dispatch to Value's reflected operators
    __array_ufunc__ = None

    def __init__(self, data, requires_grad: bool = False, _parents=(), _op: str = ""):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Value, ...] = tuple(_parents)
        self._backward: Callable | None = None
        self.op = _op

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"expected a scalar, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> Value:
        return Value(self.data)

    def __repr__(self) -> str:
        return f"Value(shape={self.shape}, op={self.op!r}, requires_grad={self.requires_grad})"

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
        return neg(self)

    def __pow__(self, exponent: float) -> Value:
        return power(self, exponent)

    def __getitem__(self, index) -> Value:
        return take(self, index)


def lift(x) -> Value:
    return x if isinstance(x, Value) else Value(x)


def _node(data, parents: tuple[Value, ...], op: str, backward: Callable) -> Value:
    if any(p.requires_grad for p in parents):
        out = Value(data, True, parents, op)
        out._backward = backward
        return out
    return Value(data, False, (), op)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


# -- elementwise arithmetic ------------------------------------------------


def add(a, b) -> Value:
    a, b = lift(a), lift(b)
    return _node(
        a.data + b.data,
        (a, b),
        "add",
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a, b) -> Value:
    a, b = lift(a), lift(b)
    return _node(
        a.data - b.data,
        (a, b),
        "sub",
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
    )


def neg(a) -> Value:
    a = lift(a)
    return _node(-a.data, (a,), "neg", lambda g: (-g,))


def mul(a, b) -> Value:
    a, b = lift(a), lift(b)
    return _node(
        a.data * b.data,
        (a, b),
        "mul",
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def div(a, b) -> Value:
    a, b = lift(a), lift(b)
    out = a.data / b.data

    def backward(g):
        ga = _unbroadcast(g / b.data, a.shape)
        gb = _unbroadcast(-g * out / b.data, b.shape)
        return ga, gb

    return _node(out, (a, b), "div", backward)


def power(a, exponent: float) -> Value:
    a = lift(a)
    p = float(exponent)
    return _node(a.data**p, (a,), "pow", lambda g: (g * p * a.data ** (p - 1.0),))


def exp(a) -> Value:
    a = lift(a)
    out = np.exp(a.data)
    return _node(out, (a,), "exp", lambda g: (g * out,))


def log(a) -> Value:
    a = lift(a)
    if not np.all(a.data > 0):
        raise DomainError("log requires strictly positive input; clamp first")
    return _node(np.log(a.data), (a,), "log", lambda g: (g / a.data,))


def relu(a) -> Value:
    """max(0, a). The derivative at exactly 0 is taken to be 0."""
    a = lift(a)
    active = a.data > 0
    return _node(np.where(active, a.data, 0.0), (a,), "relu", lambda g: (g * active,))


hinge = relu


def clip(a, lo: float, hi: float = np.inf) -> Value:
    """Clamp to [lo, hi]; gradient passes only where the input is inside."""
    a = lift(a)
    inside = (a.data >= lo) & (a.data <= hi)
    return _node(np.clip(a.data, lo, hi), (a,), "clip", lambda g: (g * inside,))


# -- structural ops --------------------------------------------------------


def take(a, index) -> Value:
    """Gather ``a[index]`` (basic or advanced indexing); gradients scatter-add back."""
    a = lift(a)

    def backward(g):
        out = np.zeros_like(a.data)
        np.add.at(out, index, g)
        return (out,)

    return _node(a.data[index], (a,), "take", backward)


def affine(x, weight, bias, ordered: bool = False) -> Value:
    """``x @ weight.T + bias`` with weight laid out (out_features, in_features).

    With ``ordered=True`` every output unit is accumulated term by term in a
    fixed order instead of through BLAS, whose blocked kernels round a unit's
    dot product differently depending on its row position. Permuting the rows of
    ``weight`` then permutes the outputs and weight gradients bit-exactly.
    """
    x, weight, bias = lift(x), lift(weight), lift(bias)
    X, W = x.data, weight.data
    if ordered:
        out = np.zeros((X.shape[0], W.shape[0]))
        for j in range(X.shape[1]):
            out += X[:, j : j + 1] * W[:, j]
        out += bias.data
    else:
        out = X @ W.T + bias.data

    def backward(g):
        gx = gw = gb = None
        if x.requires_grad:
            # sum over output units in canonical order (see module docstring)
            gx = np.sort(g[:, :, None] * W[None, :, :], axis=1).sum(axis=1)
        if weight.requires_grad:
            if ordered:
                gw = np.zeros_like(W)
                for r in range(X.shape[0]):
                    gw += g[r][:, None] * X[r]
            else:
                gw = g.T @ X
        if bias.requires_grad:
            if ordered:
                gb = np.zeros(W.shape[0])
                for r in range(g.shape[0]):
                    gb += g[r]
            else:
                gb = g.sum(axis=0)
        return gx, gw, gb

    return _node(out, (x, weight, bias), "affine", backward)


# -- reductions ------------------------------------------------------------


def sum(a, axis=None, keepdims: bool = False) -> Value:  # noqa: A001
    a = lift(a)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _node(a.data.sum(axis=axis, keepdims=keepdims), (a,), "sum", backward)


def mean(a, axis=None, keepdims: bool = False) -> Value:
    a = lift(a)
    count = a.data.size if axis is None else a.shape[axis]
    return div(sum(a, axis=axis, keepdims=keepdims), float(count))


def canonical_sum(a, axis: int = -1, keepdims: bool = False) -> Value:
    """Sum along ``axis`` after sorting, so the result ignores term order exactly."""
    a = lift(a)
    out = np.sort(a.data, axis=axis).sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _node(out, (a,), "canonical_sum", backward)


def rowdot(a, b) -> Value:
    """Inner product of matching rows: ``sum_k a[i, k] * b[i, k]``."""
    return canonical_sum(mul(a, b), axis=-1)


def softmax(a, axis: int = -1) -> Value:
    a = lift(a)
    if not np.all(np.isfinite(a.data)):
        raise DomainError("softmax requires finite logits")
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / np.sort(e, axis=axis).sum(axis=axis, keepdims=True)

    def backward(g):
        inner = np.sort(g * out, axis=axis).sum(axis=axis, keepdims=True)
        return (out * (g - inner),)

    return _node(out, (a,), "softmax", backward)


# -- graph traversal -------------------------------------------------------


def topological_order(root: Value) -> list[Value]:
    """Nodes reachable from ``root``, every operand before its consumer."""
    order: list[Value] = []
    seen: set[int] = set()
    stack: list[tuple[Value, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in reversed(node._parents):
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(loss: Value) -> None:
    """Populate ``.grad`` on every requires_grad node that ``loss`` depends on."""
    if loss.data.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ContractError("loss does not depend on any value with requires_grad=True")
    order = topological_order(loss)
    if any(v.requires_grad and v.grad is not None for v in order):
        raise ContractError("gradients already populated; call zero_grad before a second backward")

    pending: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = pending.pop(id(node), None)
        if not node.requires_grad:
            continue
        if g is None:
            g = np.zeros_like(node.data)
        node.grad = g
        if not node._parents:
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            pending[key] = pending[key] + pg if key in pending else pg


def zero_grad(values: Iterable[Value]) -> None:
    for v in values:
        v.grad = None


def finite_difference_check(
    f: Callable[[dict[str, Value]], Value],
    params: Mapping[str, np.ndarray],
    eps: float = 1e-6,
) -> float:
    """Max relative error between reverse-mode and central-difference gradients.

    ``f`` maps a dict of named Values to a scalar Value. The relative error of a
    coordinate is ``|analytic - numeric| / max(|analytic|, |numeric|, 1e-12)``.
    """
    if eps <= 0:
        raise ContractError("eps must be positive")
    leaves = {name: Value(np.array(arr, dtype=np.float64), requires_grad=True) for name, arr in params.items()}
    backward(f(leaves))

    def evaluate(arrays: dict[str, np.ndarray]) -> float:
        return f({name: Value(arr) for name, arr in arrays.items()}).item()

    worst = 0.0
    base = {name: np.array(arr, dtype=np.float64) for name, arr in params.items()}
    for name, arr in base.items():
        analytic = leaves[name].grad
        flat = arr.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = evaluate(base)
            flat[i] = orig - eps
            down = evaluate(base)
            flat[i] = orig
            numeric = (up - down) / (2.0 * eps)
            a = analytic.reshape(-1)[i]
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-12)
            worst = max(worst, err)
    return worst
