"""Small reverse-mode autodiff over numpy arrays.

Every backward rule is itself written with Tensor operations, so gradients can
be differentiated again (``grad(..., create_graph=True)``). That is what makes
the gradient penalty's parameter gradient exact.
"""

from __future__ import annotations

import contextlib
import threading
from typing import Callable, Sequence

import numpy as np

_state = threading.local()


def is_grad_enabled() -> bool:
    return getattr(_state, "enabled", True)


@contextlib.contextmanager
def _grad_mode(flag: bool):
    prev = is_grad_enabled()
    _state.enabled = flag
    try:
        yield
    finally:
        _state.enabled = prev


def no_grad():
    return _grad_mode(False)


def enable_grad():
    return _grad_mode(True)


class Tensor:
    __slots__ = ("value", "requires_grad", "_parents")
    __array_priority__ = 100.0

    def __init__(self, value, requires_grad: bool = False, _parents: tuple = ()):
        self.value = np.asarray(value, dtype=np.float64)
        self.requires_grad = requires_grad
        self._parents = _parents

    def __repr__(self):
        return f"Tensor(shape={self.value.shape}, requires_grad={self.requires_grad})"

    @property
    def shape(self):
        return self.value.shape

    @property
    def T(self):
        return transpose(self)

    def detach(self) -> "Tensor":
        return Tensor(self.value)

    def __add__(self, o):
        return add(self, o)

    __radd__ = __add__

    def __sub__(self, o):
        return add(self, neg(_t(o)))

    def __rsub__(self, o):
        return add(_t(o), neg(self))

    def __mul__(self, o):
        return mul(self, o)

    __rmul__ = __mul__

    def __truediv__(self, o):
        return div(self, o)

    def __rtruediv__(self, o):
        return div(_t(o), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, o):
        return matmul(self, o)

    def __pow__(self, p: float):
        return power(self, p)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)


def _t(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(value, parents: Sequence[tuple[Tensor, Callable]]) -> Tensor:
    if is_grad_enabled():
        live = tuple((p, fn) for p, fn in parents if p.requires_grad)
        if live:
            return Tensor(value, True, live)
    return Tensor(value)


# -- shape helpers -------------------------------------------------------------


def sum_to(x: Tensor, shape) -> Tensor:
    """Sum a broadcast result back down to ``shape``."""
    x = _t(x)
    shape = tuple(shape)
    if x.shape == shape:
        return x
    v = x.value
    lead = v.ndim - len(shape)
    axes = tuple(range(lead)) + tuple(i + lead for i, s in enumerate(shape) if s == 1 and v.shape[i + lead] != 1)
    out = v.sum(axis=axes, keepdims=True)
    if lead:
        out = out.reshape(out.shape[lead:])
    src = x.shape
    return _node(out, [(x, lambda g: broadcast_to(g, src))])


def broadcast_to(x: Tensor, shape) -> Tensor:
    x = _t(x)
    shape = tuple(shape)
    if x.shape == shape:
        return x
    src = x.shape
    return _node(np.broadcast_to(x.value, shape).copy(), [(x, lambda g: sum_to(g, src))])


def reshape(x: Tensor, shape) -> Tensor:
    x = _t(x)
    shape = tuple(shape)
    if x.shape == shape:
        return x
    src = x.shape
    return _node(x.value.reshape(shape), [(x, lambda g: reshape(g, src))])


def transpose(x: Tensor) -> Tensor:
    return _node(x.value.T, [(x, lambda g: transpose(g))])


# -- arithmetic ----------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _t(a), _t(b)
    sa, sb = a.shape, b.shape
    return _node(a.value + b.value, [(a, lambda g: sum_to(g, sa)), (b, lambda g: sum_to(g, sb))])


def neg(a) -> Tensor:
    return _node(-a.value, [(a, lambda g: neg(g))])


def mul(a, b) -> Tensor:
    a, b = _t(a), _t(b)
    sa, sb = a.shape, b.shape
    return _node(a.value * b.value, [(a, lambda g: sum_to(g * b, sa)), (b, lambda g: sum_to(g * a, sb))])


def div(a, b) -> Tensor:
    a, b = _t(a), _t(b)
    sa, sb = a.shape, b.shape
    return _node(
        a.value / b.value,
        [(a, lambda g: sum_to(g / b, sa)), (b, lambda g: sum_to(neg(g * a / (b * b)), sb))],
    )


def matmul(a, b) -> Tensor:
    a, b = _t(a), _t(b)
    return _node(a.value @ b.value, [(a, lambda g: g @ transpose(b)), (b, lambda g: transpose(a) @ g)])


def power(a, p: float) -> Tensor:
    a = _t(a)
    return _node(a.value**p, [(a, lambda g: g * (power(a, p - 1) * p))])


def tsum(a, axis=None, keepdims=False) -> Tensor:
    a = _t(a)
    src = a.shape
    kept_shape = a.value.sum(axis=axis, keepdims=True).shape

    def back(g):
        return broadcast_to(reshape(g, kept_shape), src)

    return _node(a.value.sum(axis=axis, keepdims=keepdims), [(a, back)])


def mean(a, axis=None, keepdims=False) -> Tensor:
    a = _t(a)
    count = a.value.size if axis is None else a.shape[axis]
    return tsum(a, axis, keepdims) * (1.0 / count)


# -- elementwise functions -----------------------------------------------------


def exp(a) -> Tensor:
    a = _t(a)
    box = []
    out = _node(np.exp(a.value), [(a, lambda g: g * box[0])])
    box.append(out)
    return out


def log(a, floor: float = 1e-300) -> Tensor:
    """Natural log; inputs below ``floor`` are evaluated at ``floor``."""
    a = _t(a)
    if np.any(a.value < floor):
        a = add(a, Tensor(np.where(a.value < floor, floor - a.value, 0.0)))
    return _node(np.log(a.value), [(a, lambda g: g / a)])


def tanh(a) -> Tensor:
    a = _t(a)
    box = []
    out = _node(np.tanh(a.value), [(a, lambda g: g * (1.0 - box[0] * box[0]))])
    box.append(out)
    return out


def sqrt(a) -> Tensor:
    a = _t(a)
    box = []
    out = _node(np.sqrt(a.value), [(a, lambda g: g / (box[0] * 2.0))])
    box.append(out)
    return out


def leaky_relu(a, slope: float = 0.2) -> Tensor:
    a = _t(a)
    m = np.where(a.value > 0, 1.0, slope)
    return _node(a.value * m, [(a, lambda g: g * m)])


def row_norm(a) -> Tensor:
    """Euclidean norm of each row, shape (n, 1); subgradient 0 at the origin."""
    a = _t(a)
    n = np.sqrt((a.value * a.value).sum(axis=1, keepdims=True))
    box = []
    out = _node(n, [(a, lambda g: a * (g / (box[0] + (box[0].value == 0.0))))])
    box.append(out)
    return out


def softmax(a, temperature: float = 1.0) -> Tensor:
    a = _t(a)
    shift = a.value.max(axis=1, keepdims=True)
    e = exp((a - shift) * (1.0 / temperature))
    return e / e.sum(axis=1, keepdims=True)


def log_softmax(a, temperature: float = 1.0) -> Tensor:
    a = _t(a)
    z = (a - a.value.max(axis=1, keepdims=True)) * (1.0 / temperature)
    return z - log(exp(z).sum(axis=1, keepdims=True))


# -- slicing ---------------------------------------------------------------------


def cols(a, start: int, stop: int) -> Tensor:
    a = _t(a)
    width = a.shape[1]
    return _node(a.value[:, start:stop], [(a, lambda g: pad_cols(g, width, start))])


def pad_cols(g, width: int, start: int) -> Tensor:
    g = _t(g)
    out = np.zeros((g.shape[0], width))
    stop = start + g.shape[1]
    out[:, start:stop] = g.value
    return _node(out, [(g, lambda gg: cols(gg, start, stop))])


def concat(parts: Sequence, axis: int = 1) -> Tensor:
    if axis != 1:
        raise NotImplementedError("concat supports axis=1 only")
    parts = [_t(p) for p in parts]
    offs = np.cumsum([0] + [p.shape[1] for p in parts])
    return _node(
        np.concatenate([p.value for p in parts], axis=1),
        [(p, (lambda s, e: lambda g: cols(g, s, e))(int(offs[i]), int(offs[i + 1]))) for i, p in enumerate(parts)],
    )


# -- differentiation ---------------------------------------------------------------


def _topo(root: Tensor) -> list[Tensor]:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p, _ in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def grad(output: Tensor, inputs: Sequence[Tensor], grad_output=None, create_graph: bool = False):
    """Gradients of ``output`` (weighted by ``grad_output``) w.r.t. ``inputs``.

    Returns Tensors when ``create_graph`` (so they can be differentiated again),
    otherwise plain arrays. Unreachable inputs get zeros.
    """
    seed = np.ones(output.shape) if grad_output is None else np.asarray(grad_output, dtype=np.float64)
    if seed.shape != output.shape:
        raise ValueError(f"grad_output shape {seed.shape} does not match output {output.shape}")
    wanted = {id(t): k for k, t in enumerate(inputs)}
    result: list = [None] * len(inputs)
    grads = {id(output): Tensor(seed)}
    with _grad_mode(create_graph):
        for node in reversed(_topo(output)):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if id(node) in wanted:
                result[wanted[id(node)]] = g
            for parent, fn in node._parents:
                contrib = fn(g)
                prev = grads.get(id(parent))
                grads[id(parent)] = contrib if prev is None else prev + contrib
    out = []
    for t, g in zip(inputs, result):
        if g is None:
            g = Tensor(np.zeros(t.shape))
        out.append(g if create_graph else g.value)
    return out
