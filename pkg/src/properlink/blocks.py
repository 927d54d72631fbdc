"""Strongly convex scalar blocks and chained gradient maps.

Each block g is a fully input-convex network: a positive-weight first
layer, then layers that add an unconstrained affine path on the raw input
to a positive-weight path on the softplus of the previous layer, a scalar
softplus head, and a quadratic term

    g(x) = softplus(w0) * h(x) + softplus(w1) * ||x||^2 / 2.

Positive weights are stored unconstrained and pushed through softplus at
use, so positivity is structural rather than maintained by the optimizer,
and softplus(w1) > 0 makes every block strongly convex with an invertible
gradient. The learnable map is the composition of block gradients,
applied innermost-last: chain [g_1, ..., g_B] means grad g_B first and
grad g_1 last. Gradients come from the reverse pass of
:mod:`properlink.autodiff`, never from a hand-derived formula.

Blocks are immutable during evaluation; evaluation is pure and
thread-safe. Parameter updates happen between evaluation phases under
exclusive access (see the training loop).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad

__all__ = [
    "ConvexBlock",
    "GradientChain",
    "init_block",
    "block_eval",
    "block_grad",
    "chain_apply",
    "block_param_names",
]


@dataclass(frozen=True)
class ConvexBlock:
    """Parameters of one input-convex block.

    ``pos_raw`` holds the unconstrained matrices of the positive-weight
    path (softplus applied at use), one per layer k = 1..M+1; ``free``
    holds the unconstrained matrices acting on the raw input for layers
    k = 2..M+1; ``biases`` one vector per layer. ``w0_raw``/``w1_raw``
    are the unconstrained head scalars.
    """

    pos_raw: tuple[np.ndarray, ...]
    free: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]
    w0_raw: float
    w1_raw: float
    input_dim: int
    hidden_dim: int
    depth: int

    def __post_init__(self):
        if self.input_dim < 1 or self.hidden_dim < 1 or self.depth < 1:
            raise ValueError("block dimensions must be positive")
        if len(self.pos_raw) != self.depth + 1 or len(self.free) != self.depth:
            raise ValueError("block has wrong layer count")

    def param_lists(self):
        return (list(self.pos_raw), list(self.free), list(self.biases),
                self.w0_raw, self.w1_raw)


@dataclass(frozen=True)
class GradientChain:
    """Ordered blocks whose gradients compose into the learnable map.

    An empty chain is the identity map. All blocks must share one input
    dimension.
    """

    blocks: tuple[ConvexBlock, ...]

    def __post_init__(self):
        dims = {b.input_dim for b in self.blocks}
        if len(dims) > 1:
            raise ValueError(f"chain blocks disagree on input dimension: {sorted(dims)}")

    def __len__(self) -> int:
        return len(self.blocks)

    @property
    def input_dim(self) -> int | None:
        return self.blocks[0].input_dim if self.blocks else None


def init_block(input_dim: int, hidden_dim: int, depth: int, rng: np.random.Generator) -> ConvexBlock:
    """Seeded initialization: weight entries uniform in [-a, a] with
    a = 1/sqrt(fan_in), biases zero, head scalars zero (effective scales
    softplus(0) = ln 2), keeping the initial gradient map near a mildly
    contracted identity."""
    def draw(rows, cols, fan_in):
        a = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-a, a, size=(rows, cols))

    pos_raw = [draw(hidden_dim, input_dim, input_dim)]
    free = []
    biases = [np.zeros(hidden_dim)]
    for k in range(2, depth + 2):
        out_dim = 1 if k == depth + 1 else hidden_dim
        free.append(draw(out_dim, input_dim, input_dim))
        pos_raw.append(draw(out_dim, hidden_dim, hidden_dim))
        biases.append(np.zeros(out_dim))
    return ConvexBlock(tuple(pos_raw), tuple(free), tuple(biases), 0.0, 0.0,
                       input_dim, hidden_dim, depth)


def _check_dim(x, input_dim):
    shape = ad.shape_of(x)
    if shape[-1] != input_dim:
        raise ValueError(f"input dimension {shape[-1]} does not match block dimension {input_dim}")


def _block_value(pos_raw, free, biases, w0_raw, w1_raw, x):
    """g(x) for a single point (d,) -> scalar or a batch (n,d) -> (n,).

    Generic over raw arrays and recorded nodes, so the same recursion
    serves plain evaluation and every differentiation depth.
    """
    z = ad.matmul(x, ad.transpose(ad.softplus(pos_raw[0]))) + biases[0]
    for k in range(1, len(pos_raw)):
        zx = ad.matmul(x, ad.transpose(free[k - 1]))
        za = ad.matmul(ad.softplus(z), ad.transpose(ad.softplus(pos_raw[k])))
        z = zx + za + biases[k]
    h = ad.softplus(z)
    if ad.ndim_of(x) == 1:
        head = ad.take_index(h, 0)
        quad = 0.5 * ad.reduce_sum(ad.mul(x, x))
    else:
        head = ad.reshape(h, (-1,))
        quad = 0.5 * ad.reduce_sum(ad.mul(x, x), axis=1)
    return ad.softplus(w0_raw) * head + ad.softplus(w1_raw) * quad


def _block_gradient(pos_raw, free, biases, w0_raw, w1_raw, x):
    if ad.ndim_of(x) == 1:
        return ad.grad_input(lambda t: _block_value(pos_raw, free, biases, w0_raw, w1_raw, t), x)
    # batch rows are independent, so the gradient of the row sum stacks per-row gradients
    return ad.grad_input(
        lambda t: ad.reduce_sum(_block_value(pos_raw, free, biases, w0_raw, w1_raw, t)), x)


def _chain_value(param_lists, x):
    for bp in reversed(param_lists):
        x = _block_gradient(*bp, x)
    return x


def _coerce(x):
    # recorded nodes pass through untouched so block maps stay composable
    return x if type(x) is ad.Node else np.asarray(x, dtype=np.float64)


def block_eval(block: ConvexBlock, x):
    """Evaluate g(x); x of shape (d,) gives a float, (n,d) a float vector."""
    _check_dim(x, block.input_dim)
    x = _coerce(x)
    out = _block_value(*block.param_lists(), x)
    if type(out) is not ad.Node and ad.ndim_of(x) == 1:
        return float(out)
    return out


def block_grad(block: ConvexBlock, x):
    """grad g at x via the reverse pass; contains the softplus(w1_raw) * x term."""
    _check_dim(x, block.input_dim)
    return _block_gradient(*block.param_lists(), _coerce(x))


def chain_apply(chain, x):
    """Apply the composed gradient map; the last block acts first.

    ``chain`` is a GradientChain or a sequence of blocks; an empty chain
    returns ``x`` unchanged.
    """
    blocks = chain.blocks if isinstance(chain, GradientChain) else tuple(chain)
    if not blocks:
        return x
    GradientChain(blocks)  # dimension agreement check
    _check_dim(x, blocks[0].input_dim)
    return _chain_value([b.param_lists() for b in blocks], _coerce(x))


def block_param_names(index: int, depth: int) -> list[str]:
    """Flat parameter names of block ``index`` in a chain, in storage order."""
    names = [f"g{index}.pos1", f"g{index}.bias1"]
    for k in range(2, depth + 2):
        names += [f"g{index}.free{k}", f"g{index}.pos{k}", f"g{index}.bias{k}"]
    names += [f"g{index}.w0", f"g{index}.w1"]
    return names
