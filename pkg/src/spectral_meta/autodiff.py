"""A small reverse-mode autodiff tape over numpy arrays.

Every vector-Jacobian product is written with the same differentiable ops,
so calling :func:`grad` with ``create_graph=True`` records the backward pass
too and gradients can be differentiated again (needed by second-order MAML).
"""

from __future__ import annotations

import contextlib
from typing import Callable, Sequence

import numpy as np

_RECORDING = True


@contextlib.contextmanager
def recording(enabled: bool):
    global _RECORDING
    prev = _RECORDING
    _RECORDING = enabled
    try:
        yield
    finally:
        _RECORDING = prev


def no_grad():
    return recording(False)


class Tensor:
    __slots__ = ("value", "parents", "vjp", "requires_grad")
    __array_priority__ = 100

    def __init__(self, value, parents=(), vjp=None, requires_grad=False):
        self.value = np.asarray(value, dtype=np.float64)
        self.parents = parents
        self.vjp = vjp
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    @property
    def T(self):
        return swap_last(self)

    def detach(self) -> "Tensor":
        return Tensor(self.value)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

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
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, idx):
        return take(self, idx)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis, keepdims)


def leaf(value) -> Tensor:
    """A tensor that gradients can be taken with respect to."""
    return Tensor(np.array(value, dtype=np.float64), requires_grad=True)


def const(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _node(value, parents: tuple, vjp: Callable) -> Tensor:
    if _RECORDING and any(p.requires_grad for p in parents):
        return Tensor(value, parents, vjp, True)
    return Tensor(value)


# shape plumbing ---------------------------------------------------------------

def sum_to(a: Tensor, shape) -> Tensor:
    """Sum a broadcast result back down to ``shape``."""
    a = const(a)
    shape = tuple(shape)
    if a.shape == shape:
        return a
    v = a.value
    lead = v.ndim - len(shape)
    axes = tuple(range(lead)) + tuple(
        lead + i for i, s in enumerate(shape) if s == 1 and v.shape[lead + i] != 1)
    out = v.sum(axis=axes, keepdims=True) if axes else v
    if lead:
        out = out.reshape(out.shape[lead:])
    out = out.reshape(shape)
    return _node(out, (a,), lambda g, o: (broadcast_to(g, a.shape),))


def broadcast_to(a: Tensor, shape) -> Tensor:
    a = const(a)
    shape = tuple(shape)
    if a.shape == shape:
        return a
    return _node(np.broadcast_to(a.value, shape).copy(), (a,),
                 lambda g, o: (sum_to(g, a.shape),))


def reshape(a: Tensor, shape) -> Tensor:
    a = const(a)
    return _node(a.value.reshape(shape), (a,), lambda g, o: (reshape(g, a.shape),))


def swap_last(a: Tensor) -> Tensor:
    a = const(a)
    return _node(np.swapaxes(a.value, -1, -2), (a,), lambda g, o: (swap_last(g),))


def take(a: Tensor, idx) -> Tensor:
    a = const(a)
    return _node(a.value[idx], (a,), lambda g, o: (scatter(g, idx, a.shape),))


def scatter(g: Tensor, idx, shape) -> Tensor:
    """Zeros of ``shape`` with ``g`` added at ``idx`` (adjoint of indexing)."""
    g = const(g)
    out = np.zeros(shape)
    np.add.at(out, idx, g.value)
    return _node(out, (g,), lambda h, o: (take(h, idx),))


def stack(items: Sequence[Tensor], axis: int = 0) -> Tensor:
    items = [const(t) for t in items]
    value = np.stack([t.value for t in items], axis=axis)

    def vjp(g, o):
        return tuple(take(g, (slice(None),) * (axis % value.ndim) + (i,))
                     for i in range(len(items)))
    return _node(value, tuple(items), vjp)


def concat(items: Sequence[Tensor], axis: int = 0) -> Tensor:
    items = [const(t) for t in items]
    value = np.concatenate([t.value for t in items], axis=axis)
    ax = axis % value.ndim
    bounds = np.cumsum([0] + [t.shape[ax] for t in items])

    def vjp(g, o):
        return tuple(take(g, (slice(None),) * ax + (slice(bounds[i], bounds[i + 1]),))
                     for i in range(len(items)))
    return _node(value, tuple(items), vjp)


# arithmetic -------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = const(a), const(b)
    return _node(a.value + b.value, (a, b),
                 lambda g, o: (sum_to(g, a.shape), sum_to(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = const(a), const(b)
    return _node(a.value - b.value, (a, b),
                 lambda g, o: (sum_to(g, a.shape), sum_to(neg(g), b.shape)))


def neg(a) -> Tensor:
    a = const(a)
    return _node(-a.value, (a,), lambda g, o: (neg(g),))


def mul(a, b) -> Tensor:
    a, b = const(a), const(b)
    return _node(a.value * b.value, (a, b),
                 lambda g, o: (sum_to(mul(g, b), a.shape), sum_to(mul(g, a), b.shape)))


def div(a, b) -> Tensor:
    a, b = const(a), const(b)

    def vjp(g, o):
        ga = sum_to(div(g, b), a.shape)
        gb = sum_to(neg(mul(g, div(o, b))), b.shape)
        return ga, gb
    return _node(a.value / b.value, (a, b), vjp)


def matmul(a, b) -> Tensor:
    a, b = const(a), const(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError("matmul expects operands with ndim >= 2")

    def vjp(g, o):
        return (sum_to(matmul(g, swap_last(b)), a.shape),
                sum_to(matmul(swap_last(a), g), b.shape))
    return _node(np.matmul(a.value, b.value), (a, b), vjp)


def tsum(a, axis=None, keepdims=False) -> Tensor:
    a = const(a)
    value = a.value.sum(axis=axis, keepdims=keepdims)

    def vjp(g, o):
        if axis is None:
            kshape = (1,) * a.ndim
        else:
            axes = (axis,) if np.isscalar(axis) else tuple(axis)
            axes = {ax % a.ndim for ax in axes}
            kshape = tuple(1 if i in axes else s for i, s in enumerate(a.shape))
        return (broadcast_to(reshape(g, kshape), a.shape),)
    return _node(value, (a,), vjp)


def tmean(a, axis=None, keepdims=False) -> Tensor:
    a = const(a)
    total = tsum(a, axis, keepdims)
    count = a.value.size // max(total.value.size, 1)
    return mul(total, 1.0 / count)


# elementwise nonlinearities ---------------------------------------------------

def tanh(a) -> Tensor:
    a = const(a)
    return _node(np.tanh(a.value), (a,), lambda g, o: (mul(g, sub(1.0, mul(o, o))),))


def relu(a) -> Tensor:
    a = const(a)
    mask = (a.value > 0).astype(np.float64)  # subgradient 0 at 0
    return _node(a.value * mask, (a,), lambda g, o: (mul(g, mask),))


def identity(a) -> Tensor:
    return const(a)


def exp(a) -> Tensor:
    a = const(a)
    return _node(np.exp(a.value), (a,), lambda g, o: (mul(g, o),))


def log(a) -> Tensor:
    a = const(a)
    return _node(np.log(a.value), (a,), lambda g, o: (div(g, a),))


def sqrt(a) -> Tensor:
    a = const(a)
    return _node(np.sqrt(a.value), (a,), lambda g, o: (div(g, mul(2.0, o)),))


def square(a) -> Tensor:
    a = const(a)
    return _node(a.value * a.value, (a,), lambda g, o: (mul(g, mul(2.0, a)),))


ACTIVATIONS = {"tanh": tanh, "relu": relu, "identity": identity}


# composites -------------------------------------------------------------------

def logsumexp(a, axis=-1) -> Tensor:
    a = const(a)
    shift = np.max(a.value, axis=axis, keepdims=True)
    return add(log(tsum(exp(sub(a, shift)), axis=axis, keepdims=True)), shift)


def log_softmax(a, axis=-1) -> Tensor:
    return sub(a, logsumexp(a, axis))


def cross_entropy(logits, labels, axis=-1) -> Tensor:
    """Mean over the leading sample axes of -log softmax(logits)[label]."""
    logits = const(logits)
    labels = np.asarray(labels)
    onehot = np.zeros(logits.shape)
    np.put_along_axis(onehot, labels[..., None], 1.0, axis=-1)
    nll = neg(tsum(mul(log_softmax(logits, axis), onehot), axis=-1))
    return tmean(nll)


def spectral(a, fn: Callable[[np.ndarray], tuple]) -> Tensor:
    """Wrap a matrix function whose gradient is supplied explicitly.

    ``fn(matrix) -> (value, gradient)``. The gradient is treated as constant,
    so this op is differentiable once.
    """
    a = const(a)
    value, gradient = fn(a.value)
    G = np.asarray(gradient, dtype=np.float64)
    return _node(np.asarray(value, dtype=np.float64), (a,), lambda g, o: (mul(g, G),))


# reverse sweep ----------------------------------------------------------------

def _relevant_order(output: Tensor, targets: set):
    """Topological order of nodes between ``output`` and any node in ``targets``."""
    reaches = {}
    order = []
    stack_ = [(output, False)]
    while stack_:
        node, expanded = stack_.pop()
        nid = id(node)
        if expanded:
            hit = nid in targets or any(reaches.get(id(p), False) for p in node.parents)
            reaches[nid] = hit
            if hit:
                order.append(node)
            continue
        if nid in reaches:
            continue
        reaches[nid] = False
        stack_.append((node, True))
        for p in node.parents:
            if p.requires_grad and id(p) not in reaches:
                stack_.append((p, False))
    return order


def grad(output: Tensor, inputs: Sequence[Tensor], create_graph: bool = False,
         seed=None) -> list:
    """Gradients of ``output`` with respect to each input (zeros if unconnected).

    ``seed`` is the upstream cotangent, defaulting to ones (scalar outputs).
    With ``create_graph`` the returned tensors are themselves differentiable.
    """
    inputs = list(inputs)
    targets = {id(t) for t in inputs}
    upstream = np.ones(output.shape) if seed is None else np.asarray(seed, dtype=np.float64)
    grads = {}
    if output.requires_grad:
        order = _relevant_order(output, targets)
        grads[id(output)] = Tensor(upstream)
        with recording(create_graph):
            for node in reversed(order):
                g = grads.get(id(node))
                if g is None or node.vjp is None:
                    continue
                for p, pg in zip(node.parents, node.vjp(g, node)):
                    if pg is None or not p.requires_grad:
                        continue
                    pid = id(p)
                    grads[pid] = add(grads[pid], pg) if pid in grads else pg
    elif id(output) in targets:
        grads[id(output)] = Tensor(upstream)
    out = []
    for t in inputs:
        g = grads.get(id(t))
        out.append(Tensor(np.zeros(t.shape)) if g is None else g)
    return out
