"""Proper-loss machinery: partial losses, risks, and canonical-loss reconstruction.

A loss assigns each estimate q a vector of per-class partial losses; the
conditional risk is its expectation under the true class distribution, and
a loss is proper when reporting the truth minimizes that risk. Pairing a
proper loss with its canonical link makes every partial loss convex in
logit space and gives the closed expression

    loss_i(x) = F(x) - x_i  (i < C),      loss_C(x) = F(x)

where F is the convex potential whose gradient is the model's inverse
link. For a learned link F has no closed form, so it is reconstructed
numerically as the line integral of the link field from a base point;
the field is conservative (it is a gradient), which makes the integral
path-independent and the reconstruction well-defined up to the unknown
constant F(x0). Losses are comparable up to that shared constant, which
is all that ranking and gradients need.

Infinite partial losses (log loss at q = 0) are legitimate values and are
returned as explicit +inf, never raised. All functions are pure and
thread-safe.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import math

import numpy as np

from . import simplex

__all__ = [
    "BINARY_LOSS_KINDS",
    "binary_partial_loss",
    "binary_loss_vector",
    "log_loss_vector",
    "square_loss_vector",
    "conditional_risk",
    "nll",
    "potential",
    "canonical_loss",
    "CanonicalLossValues",
    "properness_check",
    "ProperLossReport",
    "kl_divergence",
]

BINARY_LOSS_KINDS = ("zero-one", "square", "log", "matsushita")


def binary_partial_loss(kind: str, q: float) -> float:
    """Partial loss for the positive class at estimate q = Pr(Y = 1).

    zero-one scores the induced prediction yhat(q) = 1 iff q >= 1/2;
    square is (1-q)^2; log is -log q; matsushita is sqrt((1-q)/q)/2.
    Log and matsushita diverge as q -> 0 and return +inf there.
    """
    if kind not in BINARY_LOSS_KINDS:
        raise ValueError(f"unknown binary loss kind {kind!r}")
    q = float(q)
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"estimate {q!r} outside [0, 1]")
    if kind == "zero-one":
        return 0.0 if q >= 0.5 else 1.0
    if kind == "square":
        return (1.0 - q) ** 2
    if kind == "log":
        return math.inf if q == 0.0 else -math.log(q)
    if q == 0.0:
        return math.inf
    return 0.5 * math.sqrt((1.0 - q) / q)


def binary_loss_vector(kind: str, q: float) -> np.ndarray:
    """Both partial losses (classes 1 and 2); the negative partial is the
    positive one evaluated at 1 - q, which is the symmetric completion of
    all four kinds."""
    return np.array([binary_partial_loss(kind, q),
                     binary_partial_loss(kind, 1.0 - q)])


def log_loss_vector(q) -> np.ndarray:
    """Multiclass log loss, -log q_i per class; +inf at zero entries."""
    arr = simplex.validate_simplex_point(q)
    with np.errstate(divide="ignore"):
        return -np.log(arr)


def square_loss_vector(q) -> np.ndarray:
    """Multiclass square (Brier) loss, ||e_i - q||^2 per class."""
    arr = simplex.validate_simplex_point(q)
    return 1.0 - 2.0 * arr + float(arr @ arr)


def conditional_risk(p, loss_values) -> float:
    """Expected partial loss sum_i p_i * loss_i.

    Uses the expectation convention 0 * inf = 0, so a one-hot p returns
    that class's partial even when other partials are infinite.
    """
    parr = simplex.validate_simplex_point(p)
    larr = np.asarray(loss_values, dtype=np.float64)
    if larr.shape != parr.shape:
        raise ValueError(f"loss vector shape {larr.shape} does not match p shape {parr.shape}")
    active = parr > 0.0
    if np.any(np.isinf(larr[active])):
        return math.inf
    return float(parr[active] @ larr[active])


def nll(x, y: int) -> float:
    """Negative log-probability of class y (1-based) for logits x; finite
    for any finite logits thanks to the shifted log-probability path."""
    arr = simplex.validate_logits(x)
    n_classes = arr.size + 1
    if not 1 <= y <= n_classes:
        raise ValueError(f"label {y} outside 1..{n_classes}")
    return float(-simplex.stable_log_probs(arr)[y - 1])


def _gauss_legendre_01(n_quad: int):
    nodes, weights = np.polynomial.legendre.leggauss(n_quad)
    return 0.5 * (nodes + 1.0), 0.5 * weights


def potential(link: Callable[[np.ndarray], np.ndarray], x, x0, n_quad: int = 64) -> float:
    """Line-integral reconstruction of the convex potential of ``link``.

    Integrates <link(x0 + t (x - x0)), x - x0> for t in [0, 1] with
    Gauss-Legendre quadrature. Because the link field is a gradient the
    value is path-independent up to quadrature error, and equals
    F(x) - F(x0) for the potential F.
    """
    if n_quad < 8:
        raise ValueError("n_quad must be at least 8")
    x = np.asarray(x, dtype=np.float64)
    x0 = np.asarray(x0, dtype=np.float64)
    if x.shape != x0.shape:
        raise ValueError("endpoint shapes differ")
    direction = x - x0
    ts, ws = _gauss_legendre_01(n_quad)
    total = 0.0
    for t, w in zip(ts, ws):
        total += w * float(np.dot(np.asarray(link(x0 + t * direction), dtype=np.float64),
                                  direction))
    return total


@dataclass(frozen=True)
class CanonicalLossValues:
    """Partial losses of the canonical loss at one logit vector.

    ``values[i] = F(x) - x_i`` for i < C and ``values[C-1] = F(x)`` with
    F the potential reconstructed relative to ``base_point``; every
    component carries the same unresolved additive constant F(base_point),
    which cancels in rankings and gradients.
    """

    values: np.ndarray
    base_point: np.ndarray

    def __len__(self) -> int:
        return len(self.values)


def canonical_loss(link, x, x0, n_quad: int = 64) -> CanonicalLossValues:
    """Canonical partial-loss vector [F(x) - x_1, ..., F(x) - x_{C-1}, F(x)]."""
    x = np.asarray(x, dtype=np.float64)
    x0 = np.asarray(x0, dtype=np.float64)
    f = potential(link, x, x0, n_quad=n_quad)
    return CanonicalLossValues(np.concatenate([f - x, [f]]), x0)


@dataclass(frozen=True)
class ProperLossReport:
    """Result of sampling-based properness probing."""

    trials: int
    n_classes: int
    seed: int
    max_violation: float
    n_violations: int
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_violation <= self.tol


def properness_check(loss_vector_fn: Callable[[np.ndarray], Sequence[float]],
                     n_classes: int, trials: int, seed: int = 0,
                     tol: float = 1e-9) -> ProperLossReport:
    """Sample (p, q) pairs from the interior and report the largest excess
    of the diagonal risk L(p,p) over L(p,q). A proper loss has none."""
    rng = np.random.default_rng(seed)
    max_violation = 0.0
    n_violations = 0
    alpha = np.ones(n_classes)
    for _ in range(trials):
        p = rng.dirichlet(alpha)
        q = rng.dirichlet(alpha)
        gap = conditional_risk(p, loss_vector_fn(p)) - conditional_risk(p, loss_vector_fn(q))
        if gap > tol:
            n_violations += 1
        if gap > max_violation:
            max_violation = gap
    return ProperLossReport(trials, n_classes, seed, max_violation, n_violations, tol)


def kl_divergence(p, q) -> float:
    """KL divergence D(p || q) on simplex points, 0 log 0 = 0 convention."""
    parr = simplex.validate_simplex_point(p)
    qarr = simplex.validate_simplex_point(q)
    active = parr > 0.0
    if np.any(qarr[active] == 0.0):
        return math.inf
    return float(parr[active] @ (np.log(parr[active]) - np.log(qarr[active])))
