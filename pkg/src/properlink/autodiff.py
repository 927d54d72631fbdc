"""Reverse-mode automatic differentiation over float64 numpy values.

Every gradient request opens a fresh tape that records primitive
applications (affine maps, elementwise nonlinearities, reductions, the
shifted log-sum-exp, label gather/scatter). The backward sweep is written
in terms of the same primitives, so a gradient computation is itself
recordable: a gradient map may appear inside a larger recorded function
and be differentiated again. The model's forward pass applies gradients
of convex blocks, and the training loss differentiates through them, so
nesting depth two is the normal operating mode here.

Inputs may be python floats, numpy arrays, or nodes from an enclosing
tape; constants pass through untouched. All arithmetic is float64.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Any, Callable, Mapping

import numpy as np
from scipy.special import expit

from . import simplex

__all__ = [
    "Node",
    "ParamGradient",
    "UnsupportedPrimitiveError",
    "grad_input",
    "grad_params",
    "value_and_grad_params",
    "value_of",
    "shape_of",
    "ndim_of",
    "add", "sub", "mul", "div", "neg",
    "matmul", "transpose", "reshape",
    "reduce_sum", "broadcast_to", "sum_to",
    "exp", "log", "softplus", "sigmoid",
    "lse_plus", "softmax_rows",
    "take_label", "scatter_label", "take_index", "put_index",
]


class UnsupportedPrimitiveError(TypeError):
    """A recorded computation produced something the engine cannot differentiate."""


class Tape:
    """Append-only record of one recorded computation.

    Nodes are stored in creation order, so iterating in reverse is a valid
    topological order for the backward sweep.
    """

    __slots__ = ("nodes", "level")

    def __init__(self, level: int):
        self.nodes: list[Node] = []
        self.level = level


class Node:
    """One recorded value. ``value`` may itself be a node of an enclosing tape."""

    __slots__ = ("value", "tape", "idx", "parents", "vjps")

    # Keep numpy from absorbing us into elementwise object arrays; arithmetic
    # with ndarray on the left must dispatch to our reflected operators.
    __array_ufunc__ = None

    def __init__(self, value, tape: Tape, parents=(), vjps=()):
        self.value = value
        self.tape = tape
        self.parents = parents
        self.vjps = vjps
        self.idx = len(tape.nodes)
        tape.nodes.append(self)

    # arithmetic sugar so model code reads like numpy
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

    def __repr__(self):
        return f"Node(level={self.tape.level}, value={value_of(self)!r})"


_TAPE_STACK: list[Tape] = []


def value_of(x) -> Any:
    """Fully unwrap a (possibly nested) node to its raw float/ndarray."""
    while type(x) is Node:
        x = x.value
    return x


def shape_of(x) -> tuple:
    return np.shape(value_of(x))


def ndim_of(x) -> int:
    return np.ndim(value_of(x))


def _top_tape(args) -> Tape | None:
    top = None
    for a in args:
        if type(a) is Node and (top is None or a.tape.level > top.level):
            top = a.tape
    return top


def _apply(raw_fn, vjp_builder, *args, **kw):
    """Dispatch a primitive at the highest active trace level among its args."""
    tape = _top_tape(args)
    if tape is None:
        return raw_fn(*args, **kw)
    vals = tuple(a.value if (type(a) is Node and a.tape is tape) else a for a in args)
    out = _apply(raw_fn, vjp_builder, *vals, **kw)
    vjp_all = vjp_builder(out, *vals, **kw)
    parents, vjps = [], []
    for a, vjp in zip(args, vjp_all):
        if vjp is not None and type(a) is Node and a.tape is tape:
            parents.append(a)
            vjps.append(vjp)
    return Node(out, tape, tuple(parents), tuple(vjps))


# ---------------------------------------------------------------------------
# primitives
# ---------------------------------------------------------------------------

def _np_sum_to(a, shape):
    """Raw sum of ``a`` down to ``shape`` (inverse of broadcasting)."""
    a = np.asarray(a, dtype=np.float64)
    shape = tuple(shape)
    if a.shape == shape:
        return a
    while a.ndim > len(shape):
        a = a.sum(axis=0)
    for axis, (have, want) in enumerate(zip(a.shape, shape)):
        if want == 1 and have != 1:
            a = a.sum(axis=axis, keepdims=True)
    return a.reshape(shape)


def _unbroadcast(g, shape):
    if shape_of(g) == tuple(shape):
        return g
    return sum_to(g, shape)


def add(a, b):
    return _apply(np.add, _vjp_add, a, b)


def _vjp_add(out, a, b):
    return (lambda g: _unbroadcast(g, shape_of(a)),
            lambda g: _unbroadcast(g, shape_of(b)))


def sub(a, b):
    return _apply(np.subtract, _vjp_sub, a, b)


def _vjp_sub(out, a, b):
    return (lambda g: _unbroadcast(g, shape_of(a)),
            lambda g: _unbroadcast(neg(g), shape_of(b)))


def mul(a, b):
    return _apply(np.multiply, _vjp_mul, a, b)


def _vjp_mul(out, a, b):
    return (lambda g: _unbroadcast(mul(g, b), shape_of(a)),
            lambda g: _unbroadcast(mul(g, a), shape_of(b)))


def div(a, b):
    return _apply(np.divide, _vjp_div, a, b)


def _vjp_div(out, a, b):
    return (lambda g: _unbroadcast(div(g, b), shape_of(a)),
            lambda g: _unbroadcast(neg(div(mul(g, a), mul(b, b))), shape_of(b)))


def neg(a):
    return _apply(np.negative, _vjp_neg, a)


def _vjp_neg(out, a):
    return (neg,)


def matmul(a, b):
    return _apply(np.matmul, _vjp_matmul, a, b)


def _vjp_matmul(out, a, b):
    an, bn = ndim_of(a), ndim_of(b)
    if an == 2 and bn == 2:
        return (lambda g: matmul(g, transpose(b)),
                lambda g: matmul(transpose(a), g))
    if an == 2 and bn == 1:
        return (lambda g: mul(reshape(g, (-1, 1)), reshape(b, (1, -1))),
                lambda g: matmul(transpose(a), g))
    if an == 1 and bn == 2:
        return (lambda g: matmul(b, g),
                lambda g: mul(reshape(a, (-1, 1)), reshape(g, (1, -1))))
    if an == 1 and bn == 1:
        return (lambda g: mul(g, b), lambda g: mul(g, a))
    raise UnsupportedPrimitiveError(f"matmul on ndim {an} x {bn}")


def transpose(a):
    return _apply(np.transpose, _vjp_transpose, a)


def _vjp_transpose(out, a):
    return (transpose,)


def reshape(a, shape):
    return _apply(lambda x, shape: np.reshape(x, shape), _vjp_reshape, a, shape=shape)


def _vjp_reshape(out, a, *, shape):
    orig = shape_of(a)
    return (lambda g: reshape(g, orig),)


def reduce_sum(a, axis: int | None = None, keepdims: bool = False):
    return _apply(lambda x, axis, keepdims: np.sum(x, axis=axis, keepdims=keepdims),
                  _vjp_reduce_sum, a, axis=axis, keepdims=keepdims)


def _vjp_reduce_sum(out, a, *, axis, keepdims):
    orig = shape_of(a)

    def vjp(g):
        if axis is None or keepdims:
            return broadcast_to(g, orig)
        kept = list(orig)
        kept[axis] = 1
        return broadcast_to(reshape(g, tuple(kept)), orig)

    return (vjp,)


def broadcast_to(a, shape):
    return _apply(lambda x, shape: np.broadcast_to(np.asarray(x, dtype=np.float64), shape),
                  _vjp_broadcast_to, a, shape=shape)


def _vjp_broadcast_to(out, a, *, shape):
    orig = shape_of(a)
    return (lambda g: sum_to(g, orig),)


def sum_to(a, shape):
    return _apply(_np_sum_to, _vjp_sum_to, a, shape=shape)


def _vjp_sum_to(out, a, *, shape):
    orig = shape_of(a)
    return (lambda g: broadcast_to(g, orig),)


def exp(a):
    return _apply(np.exp, _vjp_exp, a)


def _vjp_exp(out, a):
    return (lambda g: mul(g, out),)


def log(a):
    return _apply(np.log, _vjp_log, a)


def _vjp_log(out, a):
    return (lambda g: div(g, a),)


def softplus(a):
    return _apply(lambda x: np.logaddexp(0.0, x), _vjp_softplus, a)


def _vjp_softplus(out, a):
    return (lambda g: mul(g, sigmoid(a)),)


def sigmoid(a):
    return _apply(lambda x: expit(np.asarray(x, dtype=np.float64)), _vjp_sigmoid, a)


def _vjp_sigmoid(out, a):
    return (lambda g: mul(g, mul(out, sub(1.0, out))),)


def lse_plus(a):
    """log(1 + sum(exp(a))) over the last axis; (k,) -> scalar, (n,k) -> (n,)."""
    return _apply(simplex.log_sum_exp_plus, _vjp_lse_plus, a)


def _vjp_lse_plus(out, a):
    def vjp(g):
        mu = softmax_rows(a)
        if ndim_of(a) == 1:
            return mul(g, mu)
        return mul(reshape(g, (-1, 1)), mu)

    return (vjp,)


def softmax_rows(a):
    """softmax over C implicit logits, last axis, returning the first k entries."""
    return _apply(simplex.softmax_plus, _vjp_softmax_rows, a)


def _vjp_softmax_rows(out, a):
    def vjp(g):
        s = mul(out, g)
        return sub(s, mul(out, reduce_sum(s, axis=ndim_of(a) - 1, keepdims=True)))

    return (vjp,)


def _np_take_label(x, labels0):
    n, k = x.shape
    picked = np.zeros(n, dtype=np.float64)
    explicit = labels0 < k
    rows = np.nonzero(explicit)[0]
    picked[rows] = x[rows, labels0[rows]]
    return picked


def take_label(x, labels0):
    """Per-row gather x[i, labels0[i]]; an index equal to x.shape[1] selects the
    implicit zero logit and yields 0.0. labels0 is a constant int array."""
    labels0 = np.asarray(value_of(labels0), dtype=np.intp)
    return _apply(_np_take_label, _vjp_take_label, x, labels0=labels0)


def _vjp_take_label(out, x, *, labels0):
    n, k = shape_of(x)
    return (lambda g: scatter_label(g, labels0, n, k),)


def _np_scatter_label(g, labels0, n, k):
    out = np.zeros((n, k), dtype=np.float64)
    explicit = labels0 < k
    rows = np.nonzero(explicit)[0]
    out[rows, labels0[rows]] = np.asarray(g, dtype=np.float64)[rows]
    return out


def scatter_label(g, labels0, n, k):
    labels0 = np.asarray(value_of(labels0), dtype=np.intp)
    return _apply(_np_scatter_label, _vjp_scatter_label, g, labels0=labels0, n=n, k=k)


def _vjp_scatter_label(out, g, *, labels0, n, k):
    return (lambda gg: take_label(gg, labels0),)


def take_index(v, i: int):
    """v[i] for a 1-D vector; scalar out."""
    return _apply(lambda x, i: np.asarray(x, dtype=np.float64)[i], _vjp_take_index, v, i=i)


def _vjp_take_index(out, v, *, i):
    n = shape_of(v)[0]
    return (lambda g: put_index(g, i, n),)


def _np_put_index(g, i, length):
    out = np.zeros(length, dtype=np.float64)
    out[i] = g
    return out


def put_index(g, i: int, length: int):
    return _apply(_np_put_index, _vjp_put_index, g, i=i, length=length)


def _vjp_put_index(out, g, *, i, length):
    return (lambda gg: take_index(gg, i),)


# ---------------------------------------------------------------------------
# gradients
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ParamGradient:
    """Gradient of a recorded scalar with respect to a named parameter set.

    ``values`` covers exactly the parameter names that were passed in.
    Parameters the loss never touched get a zero array and are listed in
    ``structural_zeros`` to distinguish them from numerically zero gradients.
    """

    values: dict[str, Any]
    structural_zeros: frozenset[str]

    def __getitem__(self, name: str):
        return self.values[name]

    def is_structural_zero(self, name: str) -> bool:
        return name in self.structural_zeros


def _backward(out: Node, tape: Tape) -> dict[int, Any]:
    """Backward sweep over one tape; returns cotangents of parentless nodes."""
    cotangents: dict[int, Any] = {out.idx: 1.0}
    sinks: dict[int, Any] = {}
    for node in reversed(tape.nodes[: out.idx + 1]):
        g = cotangents.pop(node.idx, None)
        if g is None:
            continue
        if not node.parents:
            sinks[node.idx] = g
            continue
        for parent, vjp in zip(node.parents, node.vjps):
            pg = vjp(g)
            held = cotangents.get(parent.idx)
            cotangents[parent.idx] = pg if held is None else add(held, pg)
    return sinks


def _trace(f: Callable, leaves_spec):
    tape = Tape(len(_TAPE_STACK))
    _TAPE_STACK.append(tape)
    try:
        if isinstance(leaves_spec, Mapping):
            leaves = {name: Node(v, tape) for name, v in leaves_spec.items()}
            out = f(leaves)
        else:
            leaves = Node(leaves_spec, tape)
            out = f(leaves)
    finally:
        _TAPE_STACK.pop()
    return tape, leaves, out


def grad_input(f: Callable, x):
    """Reverse-mode gradient of the scalar function ``f`` at ``x``.

    The returned gradient is built from recordable primitives, so this call
    may itself appear inside a larger recorded computation and be
    differentiated again (nesting depth >= 2 is supported and exercised).
    """
    tape, leaf, out = _trace(f, x)
    if type(out) is not Node or out.tape is not tape:
        return np.zeros(np.shape(value_of(x)))
    if np.shape(value_of(out)) != ():
        raise UnsupportedPrimitiveError("grad_input requires a scalar-valued function")
    g = _backward(out, tape).get(leaf.idx)
    if g is None:
        return np.zeros(np.shape(value_of(x)))
    return g


def value_and_grad_params(f: Callable, params: Mapping[str, Any]):
    """Evaluate ``f(params)`` and its gradient w.r.t. every named parameter.

    ``f`` receives a dict mapping each name to a recorded leaf; its forward
    pass may contain ``grad_input`` calls (the engine differentiates through
    them). Returns ``(value, ParamGradient)``.
    """
    tape, leaves, out = _trace(f, params)
    if type(out) is Node and out.tape is tape:
        if np.shape(value_of(out)) != ():
            raise UnsupportedPrimitiveError("grad_params requires a scalar-valued loss")
        sinks = _backward(out, tape)
        value = out.value
    else:
        sinks = {}
        value = out
    grads: dict[str, Any] = {}
    structural: set[str] = set()
    for name, leaf in leaves.items():
        g = sinks.get(leaf.idx)
        if g is None:
            structural.add(name)
            grads[name] = np.zeros(np.shape(value_of(params[name])))
        else:
            grads[name] = g
    return value, ParamGradient(grads, frozenset(structural))


def grad_params(f: Callable, params: Mapping[str, Any]) -> ParamGradient:
    """Gradient of the recorded scalar ``f(params)`` for every parameter."""
    return value_and_grad_params(f, params)[1]
