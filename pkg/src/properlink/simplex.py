"""Maps between logit space, the projected simplex, and the full simplex.

The probability simplex over C classes is determined by its first C-1
coordinates; the projected simplex collects those coordinates (entries in
[0,1], sum at most 1). softmax_plus squashes C-1 unbounded logits onto the
open projected simplex by treating the C-th logit as an implicit zero, and
unlike softmax-over-C it is a bijection with the closed form inverse
log(p_i / p_C). All log-domain computations shift by max(0, max_i x_i) --
the max over all C logits including the implicit zero -- so results stay
finite for any finite input.

Construction tolerances are 1e-12; round-trip guarantees are 1e-9 (see the
validators). Everything here is pure float64 numpy and thread-safe.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "SimplexError",
    "SimplexPoint",
    "ProjectedSimplexPoint",
    "SUM_TOL",
    "validate_simplex_point",
    "validate_projected_point",
    "validate_logits",
    "project",
    "unproject",
    "log_sum_exp_plus",
    "softmax_plus",
    "softmax_plus_inverse",
    "stable_log_probs",
]

# Absolute tolerance on simplex sum constraints at construction time.
SUM_TOL = 1e-12


class SimplexError(ValueError):
    """Input violates a simplex domain constraint."""


def validate_simplex_point(p) -> np.ndarray:
    """Return ``p`` as a float64 array after checking simplex membership."""
    arr = np.asarray(p, dtype=np.float64)
    if arr.ndim != 1 or arr.size < 2:
        raise SimplexError(f"simplex point needs at least 2 components, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise SimplexError("simplex point has non-finite entries")
    if np.any(arr < 0.0) or np.any(arr > 1.0):
        raise SimplexError("simplex point entries must lie in [0, 1]")
    total = math.fsum(arr.tolist())
    if abs(total - 1.0) > SUM_TOL:
        raise SimplexError(f"simplex point sums to {total!r}, not 1 within {SUM_TOL}")
    return arr


def validate_projected_point(p_tilde) -> np.ndarray:
    """Return ``p_tilde`` as a float64 array after checking projected-simplex membership."""
    arr = np.asarray(p_tilde, dtype=np.float64)
    if arr.ndim != 1 or arr.size < 1:
        raise SimplexError(f"projected point needs at least 1 component, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise SimplexError("projected point has non-finite entries")
    if np.any(arr < 0.0) or np.any(arr > 1.0):
        raise SimplexError("projected point entries must lie in [0, 1]")
    total = math.fsum(arr.tolist())
    if total > 1.0 + SUM_TOL:
        raise SimplexError(f"projected point sums to {total!r} > 1 + {SUM_TOL}")
    return arr


def validate_logits(x) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1 or arr.size < 1:
        raise SimplexError(f"logit vector needs at least 1 component, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise SimplexError("logit vector has non-finite entries")
    return arr


@dataclass(frozen=True)
class SimplexPoint:
    """A validated point of the probability simplex over C classes."""

    p: tuple[float, ...]
    array: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "p", tuple(float(v) for v in self.p))
        object.__setattr__(self, "array", validate_simplex_point(self.p))

    @property
    def n_classes(self) -> int:
        return len(self.p)


@dataclass(frozen=True)
class ProjectedSimplexPoint:
    """A validated point of the projected simplex (first C-1 coordinates)."""

    p_tilde: tuple[float, ...]
    array: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "p_tilde", tuple(float(v) for v in self.p_tilde))
        object.__setattr__(self, "array", validate_projected_point(self.p_tilde))

    @property
    def n_classes(self) -> int:
        return len(self.p_tilde) + 1


def _as_array(x, validator):
    if isinstance(x, (SimplexPoint, ProjectedSimplexPoint)):
        return x.array
    return validator(x)


def project(p) -> np.ndarray:
    """Drop the last coordinate of a simplex point."""
    arr = _as_array(p, validate_simplex_point)
    return arr[:-1].copy()


def unproject(p_tilde) -> np.ndarray:
    """Append 1 - sum(p_tilde), the inverse of :func:`project`.

    The appended coordinate is the correctly rounded float value of
    1 - sum (exact accumulation via fsum). Tiny negative excursions within
    the construction tolerance are clamped to [0, 1]; anything larger is a
    domain error caught by validation.
    """
    arr = _as_array(p_tilde, validate_projected_point)
    last = 1.0 - math.fsum(arr.tolist())
    if -SUM_TOL <= last < 0.0:
        last = 0.0
    elif 1.0 < last <= 1.0 + SUM_TOL:
        last = 1.0
    return np.concatenate([arr, [last]])


def _shift(x: np.ndarray) -> np.ndarray:
    # max over all C logits, counting the implicit zero
    return np.maximum(np.max(x, axis=-1, keepdims=True), 0.0)


def log_sum_exp_plus(x) -> np.ndarray | float:
    """log(1 + sum_k exp(x_k)) over the last axis, shifted for stability.

    Finite for all finite inputs and bounded below by max(0, max_k x_k).
    A 1-D input yields a python float; higher-rank inputs reduce the last
    axis.
    """
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 0 or arr.shape[-1] == 0:
        raise SimplexError("log_sum_exp_plus needs at least one logit")
    m = _shift(arr)
    total = np.exp(-m)[..., 0] + np.sum(np.exp(arr - m), axis=-1)
    out = m[..., 0] + np.log(total)
    if arr.ndim == 1:
        return float(out)
    return out


def stable_log_probs(x) -> np.ndarray:
    """Log-probabilities of all C classes for C-1 logits, last axis.

    Returns ``(x_1 - m - log S, ..., x_{C-1} - m - log S, -m - log S)``
    with shift ``m = max(0, max_k x_k)`` and
    ``S = exp(-m) + sum_k exp(x_k - m)``. The exponentials of a row sum to
    one and the whole thing stays finite however large the logits are.
    """
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 0 or arr.shape[-1] == 0:
        raise SimplexError("stable_log_probs needs at least one logit")
    m = _shift(arr)
    log_s = np.log(np.exp(-m)[..., :1] + np.sum(np.exp(arr - m), axis=-1, keepdims=True))
    return np.concatenate([arr - m - log_s, -m - log_s], axis=-1)


def softmax_plus(x) -> np.ndarray:
    """exp(x_i) / (1 + sum_k exp(x_k)) over the last axis.

    Computed as exp of the stable log-probabilities so the same shifted
    code path serves probabilities and log-probabilities. The output lies
    strictly inside the projected simplex for any finite input (up to
    float64 underflow deep in the saturation region).
    """
    return np.exp(stable_log_probs(x))[..., :-1]


def softmax_plus_inverse(p_tilde) -> np.ndarray:
    """Closed-form inverse of softmax_plus: log(p_i / (1 - sum_k p_k)).

    Defined only on the open projected simplex; boundary points (a zero
    entry, or entries summing to one) have no finite preimage and raise.
    """
    arr = _as_array(p_tilde, validate_projected_point)
    p_last = 1.0 - math.fsum(arr.tolist())
    if np.any(arr <= 0.0) or p_last <= 0.0:
        raise SimplexError("softmax_plus_inverse needs a strictly interior point")
    return np.log(arr) - math.log(p_last)
