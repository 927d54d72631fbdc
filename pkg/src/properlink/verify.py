"""Numerical certification of convex-analytic properties of vector fields.

A differentiable field is the gradient of a convex function exactly when
its Jacobian is symmetric and positive semi-definite everywhere, which in
turn is equivalent to monotonicity; positive definiteness upgrades this
to a strictly convex (Legendre) potential. These checks are sampling
based, not proofs: they hold by construction for each block's gradient
map and for the squashing map, and the suite both guards those against
implementation bugs and measures whether the properties survive
composition (products of symmetric matrices need not be symmetric, so in
general they do not). Reports state the sample size and seed. Maximal
monotonicity needs no separate check for fields that are continuous and
monotone on all of R^{C-1}.

Definiteness is decided through eigenvalues of the symmetrized Jacobian
(J + J^T)/2: symmetry is guaranteed for genuine gradient fields, so
symmetrization only removes finite-difference noise. Sampling defaults to
the ball of radius 10 in logit space, which covers the squashing map's
saturation region where conditioning is worst.

Point evaluations are independent; callers may fan them out across
threads and aggregate by sample index.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "JacobianReport",
    "MonotoneReport",
    "CyclicReport",
    "numerical_jacobian",
    "check_monotone",
    "check_cyclic",
    "certify_link",
    "certification_passed",
    "find_monotonicity_violation",
    "reports_to_json",
]

# Thresholds: strict definiteness wants every eigenvalue positive;
# "semi-definite within noise" tolerates -1e-8 from the finite differences.
SEMIDEFINITE_TOL = -1e-8
ASYMMETRY_TOL = 1e-5


@dataclass(frozen=True)
class JacobianReport:
    """Symmetry and spectrum of a field's Jacobian at one point."""

    point: tuple[float, ...]
    max_asymmetry: float
    min_eigenvalue: float
    max_eigenvalue: float

    @property
    def symmetric(self) -> bool:
        return self.max_asymmetry < ASYMMETRY_TOL

    @property
    def positive_definite(self) -> bool:
        return self.min_eigenvalue > 0.0

    @property
    def positive_semidefinite(self) -> bool:
        return self.min_eigenvalue > SEMIDEFINITE_TOL


@dataclass(frozen=True)
class MonotoneReport:
    pairs: int
    seed: int
    radius: float
    min_inner_product: float
    n_violations: int

    @property
    def strictly_monotone(self) -> bool:
        return self.min_inner_product > 0.0


@dataclass(frozen=True)
class CyclicReport:
    cycle_len: int
    cycles: int
    seed: int
    radius: float
    max_cycle_sum: float
    n_violations: int
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_cycle_sum <= self.tol


def numerical_jacobian(field: Callable, x, step: float = 1e-5) -> np.ndarray:
    """Central-difference Jacobian; column j is (F(x+h e_j) - F(x-h e_j)) / 2h."""
    if step <= 0.0:
        raise ValueError("step must be positive")
    x = np.asarray(x, dtype=np.float64)
    d = x.size
    cols = []
    for j in range(d):
        e = np.zeros(d)
        e[j] = step
        x_hi = x + e
        x_lo = x - e
        hi = np.asarray(field(x_hi), dtype=np.float64)
        lo = np.asarray(field(x_lo), dtype=np.float64)
        if not (np.all(np.isfinite(hi)) and np.all(np.isfinite(lo))):
            raise FloatingPointError(f"field produced non-finite values near column {j}")
        # divide by the realized step so representation error in x +- h cancels
        cols.append((hi - lo) / (x_hi[j] - x_lo[j]))
    return np.stack(cols, axis=1)


def _ball_points(rng: np.random.Generator, count: int, dim: int, radius: float) -> np.ndarray:
    """Uniform draws from the ball of the given radius (spherical direction,
    radial cdf correction)."""
    direction = rng.normal(size=(count, dim))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    r = radius * rng.random(count) ** (1.0 / dim)
    return direction * r[:, None]


def check_monotone(field: Callable, dim: int, pairs: int = 1000, seed: int = 0,
                   radius: float = 10.0) -> MonotoneReport:
    """Sample point pairs and report the smallest <F(x)-F(z), x-z>.

    Strict monotonicity verdict when the minimum is positive over every
    sampled pair of distinct points.
    """
    if pairs < 1:
        raise ValueError("pairs must be at least 1")
    rng = np.random.default_rng(seed)
    xs = _ball_points(rng, pairs, dim, radius)
    zs = _ball_points(rng, pairs, dim, radius)
    worst = np.inf
    violations = 0
    for x, z in zip(xs, zs):
        if np.array_equal(x, z):
            continue
        inner = float(np.dot(np.asarray(field(x)) - np.asarray(field(z)), x - z))
        worst = min(worst, inner)
        if inner <= 0.0:
            violations += 1
    return MonotoneReport(pairs, seed, radius, worst, violations)


def check_cyclic(field: Callable, dim: int, cycle_len: int, cycles: int = 200,
                 seed: int = 0, radius: float = 10.0, tol: float = 1e-9) -> CyclicReport:
    """Sample n-point cycles and report the largest sum_i <y_i, x_{i+1} - x_i>
    (indices wrapping). Cyclically monotone fields keep every sum <= 0."""
    if cycle_len < 2:
        raise ValueError("cycle_len must be at least 2")
    rng = np.random.default_rng(seed)
    worst = -np.inf
    violations = 0
    for _ in range(cycles):
        pts = _ball_points(rng, cycle_len, dim, radius)
        ys = [np.asarray(field(p), dtype=np.float64) for p in pts]
        total = 0.0
        for i in range(cycle_len):
            total += float(np.dot(ys[i], pts[(i + 1) % cycle_len] - pts[i]))
        worst = max(worst, total)
        if total > tol:
            violations += 1
    return CyclicReport(cycle_len, cycles, seed, radius, worst, violations, tol)


def _resolve_field(field_or_model, dim):
    link_field = getattr(field_or_model, "link_field", None)
    if link_field is not None:
        field = link_field()
        dim = field_or_model.n_classes - 1
    else:
        field = field_or_model
        if dim is None:
            raise ValueError("dim is required when certifying a bare field")
    return field, dim


def certify_link(field_or_model, points: int = 100, seed: int = 0,
                 radius: float = 10.0, step: float = 1e-5,
                 dim: int | None = None) -> list[JacobianReport]:
    """Jacobian symmetry/definiteness reports at sampled points.

    Accepts a trained model (anything exposing ``link_field()`` and
    ``n_classes``) or a bare field plus ``dim``. Certification passes when
    every report is symmetric within tolerance with a strictly positive
    smallest symmetrized eigenvalue; see :func:`certification_passed`.
    """
    field, dim = _resolve_field(field_or_model, dim)
    rng = np.random.default_rng(seed)
    reports = []
    for x in _ball_points(rng, points, dim, radius):
        jac = numerical_jacobian(field, x, step=step)
        asym = float(np.max(np.abs(jac - jac.T))) if dim > 1 else 0.0
        eigs = np.linalg.eigvalsh(0.5 * (jac + jac.T))
        reports.append(JacobianReport(tuple(x), asym, float(eigs[0]), float(eigs[-1])))
    return reports


def certification_passed(reports: Sequence[JacobianReport]) -> bool:
    return all(r.symmetric and r.positive_definite for r in reports)


def find_monotonicity_violation(field: Callable, center, tries: int = 2000,
                                seed: int = 0, scale: float = 1.0):
    """Local search for a pair violating monotonicity near ``center``.

    Returns (x, z) with <F(x)-F(z), x-z> < 0, or None. Complements the
    Jacobian checks: a field failing definiteness somewhere should yield a
    witness pair here, and certified fields should not.
    """
    center = np.asarray(center, dtype=np.float64)
    rng = np.random.default_rng(seed)
    for _ in range(tries):
        x = center + scale * rng.normal(size=center.size)
        z = center + scale * rng.normal(size=center.size)
        if np.array_equal(x, z):
            continue
        inner = float(np.dot(np.asarray(field(x)) - np.asarray(field(z)), x - z))
        if inner < 0.0:
            return x, z
    return None


def reports_to_json(jacobian_reports: Sequence[JacobianReport],
                    monotone: MonotoneReport | None = None,
                    cyclic: Sequence[CyclicReport] = ()) -> str:
    """Serialize certification results for the CLI verify command."""
    payload = {
        "jacobian": [asdict(r) for r in jacobian_reports],
        "jacobian_pass": certification_passed(jacobian_reports),
        "monotone": asdict(monotone) if monotone is not None else None,
        "monotone_pass": monotone.strictly_monotone if monotone is not None else None,
        "cyclic": [asdict(r) for r in cyclic],
        "cyclic_pass": all(r.passed for r in cyclic) if cyclic else None,
    }
    return json.dumps(payload, indent=2)
