"""Exact multivariable polynomial maps and their derivatives.

A :class:`PolynomialMap` is an immutable sum of monomials
``coeff * prod(theta_i ** alpha_i)``. Terms are kept in canonical form:
duplicate exponents merged, zero coefficients dropped, and graded
lexicographic order. Differentiation is symbolic, so gradient, Hessian and
third-derivative tensors are exact up to floating-point evaluation.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidArgumentError

Exponents = tuple[int, ...]


def _grlex_key(exps: Exponents):
    return (sum(exps), exps)


@dataclass(frozen=True)
class PolynomialMap:
    """Polynomial ``h: R^p -> R`` in canonical form.

    Build instances with :meth:`from_terms`; the raw constructor assumes the
    terms are already canonical.
    """

    dimension: int
    terms: tuple[tuple[Exponents, float], ...] = ()

    @classmethod
    def from_terms(cls, dimension: int, terms: Iterable[tuple[Sequence[int], float]]) -> PolynomialMap:
        if dimension < 1:
            raise InvalidArgumentError(f"dimension must be positive, got {dimension}")
        merged: dict[Exponents, float] = {}
        for exps, coeff in terms:
            exps = tuple(int(e) for e in exps)
            if len(exps) != dimension:
                raise InvalidArgumentError(
                    f"multi-index {exps} has length {len(exps)}, expected {dimension}"
                )
            if any(e < 0 for e in exps):
                raise InvalidArgumentError(f"negative exponent in {exps}")
            merged[exps] = merged.get(exps, 0.0) + float(coeff)
        canon = tuple(
            (e, c) for e, c in sorted(merged.items(), key=lambda kv: _grlex_key(kv[0])) if c != 0.0
        )
        return cls(dimension, canon)

    @classmethod
    def zero(cls, dimension: int) -> PolynomialMap:
        return cls.from_terms(dimension, [])

    @classmethod
    def constant(cls, dimension: int, value: float) -> PolynomialMap:
        return cls.from_terms(dimension, [((0,) * dimension, value)])

    @classmethod
    def from_records(cls, records: Sequence[dict]) -> PolynomialMap:
        """Build from ``[{"exponents": [...], "coeff": x}, ...]``."""
        if not records:
            raise InvalidArgumentError("cannot infer dimension from an empty term list")
        dim = len(records[0]["exponents"])
        return cls.from_terms(dim, [(r["exponents"], r["coeff"]) for r in records])

    def to_records(self) -> list[dict]:
        return [{"exponents": list(e), "coeff": c} for e, c in self.terms]

    @property
    def degree(self) -> int:
        return max((sum(e) for e, _ in self.terms), default=0)

    def _arrays(self) -> tuple[np.ndarray, np.ndarray]:
        if not self.terms:
            return np.zeros((0, self.dimension), dtype=np.int64), np.zeros(0)
        exps = np.array([e for e, _ in self.terms], dtype=np.int64)
        coeffs = np.array([c for _, c in self.terms])
        return exps, coeffs

    def __call__(self, theta) -> float | np.ndarray:
        return evaluate(self, theta)

    def __add__(self, other: PolynomialMap) -> PolynomialMap:
        _check_same_dim(self, other)
        return PolynomialMap.from_terms(self.dimension, self.terms + other.terms)

    def __sub__(self, other: PolynomialMap) -> PolynomialMap:
        return self + other.scaled(-1.0)

    def scaled(self, factor: float) -> PolynomialMap:
        return PolynomialMap.from_terms(self.dimension, [(e, factor * c) for e, c in self.terms])

    def shifted(self, offset) -> PolynomialMap:
        """Return ``q`` with ``q(theta) = self(theta + offset)``."""
        offset = _as_point(offset, self.dimension)
        out: list[tuple[Exponents, float]] = []
        for exps, coeff in self.terms:
            per_axis = []
            for alpha, c in zip(exps, offset):
                per_axis.append(
                    [(k, math.comb(alpha, k) * c ** (alpha - k)) for k in range(alpha + 1)]
                )
            for combo in itertools.product(*per_axis):
                w = coeff
                for _, factor in combo:
                    w *= factor
                out.append((tuple(k for k, _ in combo), w))
        return PolynomialMap.from_terms(self.dimension, out)


def _check_same_dim(a: PolynomialMap, b: PolynomialMap) -> None:
    if a.dimension != b.dimension:
        raise InvalidArgumentError(f"dimension mismatch: {a.dimension} vs {b.dimension}")


def _as_point(theta, p: int) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (p,):
        raise InvalidArgumentError(f"expected a point of shape ({p},), got {theta.shape}")
    return theta


def evaluate(poly: PolynomialMap, theta) -> float | np.ndarray:
    """Evaluate ``poly`` at one point (shape ``(p,)``) or many (shape ``(n, p)``)."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape[-1:] != (poly.dimension,) or theta.ndim > 2:
        raise InvalidArgumentError(
            f"expected points with trailing dimension {poly.dimension}, got shape {theta.shape}"
        )
    exps, coeffs = poly._arrays()
    monomials = np.prod(theta[..., None, :] ** exps, axis=-1)
    value = monomials @ coeffs
    return float(value) if theta.ndim == 1 else value


def partial(poly: PolynomialMap, alpha: Sequence[int]) -> PolynomialMap:
    """Exact partial derivative ``d^|alpha| / d theta^alpha``."""
    alpha = tuple(int(a) for a in alpha)
    if len(alpha) != poly.dimension or any(a < 0 for a in alpha):
        raise InvalidArgumentError(f"invalid multi-index {alpha} for dimension {poly.dimension}")
    out = []
    for exps, coeff in poly.terms:
        if any(e < a for e, a in zip(exps, alpha)):
            continue
        factor = coeff
        for e, a in zip(exps, alpha):
            factor *= math.perm(e, a)
        out.append((tuple(e - a for e, a in zip(exps, alpha)), factor))
    return PolynomialMap.from_terms(poly.dimension, out)


def unit_index(p: int, *axes: int) -> Exponents:
    """Multi-index counting each 0-based axis in ``axes`` once."""
    alpha = [0] * p
    for ax in axes:
        alpha[ax] += 1
    return tuple(alpha)


@dataclass(frozen=True)
class DerivativeBundle:
    gradient: np.ndarray
    hessian: np.ndarray
    third: np.ndarray

    def hessian_column(self, m: int) -> np.ndarray:
        """Column ``m`` (0-based) of the Hessian, i.e. the gradient of ``G_m``."""
        return self.hessian[:, m]

    def third_slice(self, m: int) -> np.ndarray:
        """``T_m[i, j] = d^3 h / d theta_i d theta_j d theta_m``."""
        return self.third[:, :, m]


def derivative_bundle(poly: PolynomialMap, theta) -> DerivativeBundle:
    p = poly.dimension
    theta = _as_point(theta, p)
    grad = np.zeros(p)
    hess = np.zeros((p, p))
    third = np.zeros((p, p, p))
    for i in range(p):
        gi = partial(poly, unit_index(p, i))
        grad[i] = evaluate(gi, theta)
        for j in range(i, p):
            hij = partial(gi, unit_index(p, j))
            hess[i, j] = hess[j, i] = evaluate(hij, theta)
            for k in range(j, p):
                v = evaluate(partial(hij, unit_index(p, k)), theta)
                for perm in set(itertools.permutations((i, j, k))):
                    third[perm] = v
    return DerivativeBundle(grad, hess, third)


def fourth_derivative(poly: PolynomialMap, theta, axes: Sequence[int]) -> float:
    """``d^4 h`` along the four 0-based ``axes`` (repeats allowed), at ``theta``."""
    return evaluate(partial(poly, unit_index(poly.dimension, *axes)), _as_point(theta, poly.dimension))


# Central stencils (offset in units of h, weight) with O(h^2) truncation error.
_STENCILS = {
    0: ((0, 1.0),),
    1: ((-1, -0.5), (1, 0.5)),
    2: ((-1, 1.0), (0, -2.0), (1, 1.0)),
    3: ((-2, -0.5), (-1, 1.0), (1, -1.0), (2, 0.5)),
}


def fd_partial(h, theta, alpha: Sequence[int], step: float = 1e-3) -> float:
    """Central finite-difference estimate of a partial derivative of order <= 3.

    ``h`` may be any callable taking a point of shape ``(p,)``. The stencil is
    a tensor product of one-dimensional central differences, so the error is
    ``O(step**2)``.
    """
    theta = np.asarray(theta, dtype=float)
    alpha = tuple(int(a) for a in alpha)
    if len(alpha) != theta.size:
        raise InvalidArgumentError(f"multi-index {alpha} does not match point of size {theta.size}")
    if sum(alpha) > 3 or any(a < 0 for a in alpha):
        raise InvalidArgumentError(f"fd_partial supports orders 0..3, got {alpha}")
    if step <= 0:
        raise InvalidArgumentError("step must be positive")
    axes = [i for i, a in enumerate(alpha) if a]
    total = 0.0
    for combo in itertools.product(*(_STENCILS[alpha[i]] for i in axes)):
        point = theta.copy()
        weight = 1.0
        for i, (off, w) in zip(axes, combo):
            point[i] += off * step
            weight *= w
        total += weight * float(h(point))
    return total / step ** sum(alpha)


def paper_example_map(theta_star) -> PolynomialMap:
    """Cubic benchmark map with a directional inflection point along axis 1.

    ``h = 1 + x - y + 3/2 y^2 - (2x^3 + 3x^2 y + 12 x y^2 + y^3) / 6`` with
    ``x = theta_1 - theta_star_1`` and ``y = theta_2 - theta_star_2``.
    """
    theta_star = _as_point(theta_star, 2)
    centered = PolynomialMap.from_terms(
        2,
        [
            ((0, 0), 1.0),
            ((1, 0), 1.0),
            ((0, 1), -1.0),
            ((0, 2), 1.5),
            ((3, 0), -2.0 / 6.0),
            ((2, 1), -3.0 / 6.0),
            ((1, 2), -12.0 / 6.0),
            ((0, 3), -1.0 / 6.0),
        ],
    )
    return centered.shifted(-theta_star)


def centered_deviation(h: PolynomialMap, theta_star) -> PolynomialMap:
    """``nu(q) = h(theta_star + q) - h(theta_star)``."""
    theta_star = _as_point(theta_star, h.dimension)
    shifted = h.shifted(theta_star)
    return shifted - PolynomialMap.constant(h.dimension, evaluate(h, theta_star))


BUILTIN_MAPS = {"paper_example": paper_example_map}


def newton_root(fun, jac, x0, tol: float = 1e-12, max_iter: int = 50) -> np.ndarray:
    """Plain Newton iteration for small square systems; a test helper for critical points."""
    x = np.asarray(x0, dtype=float).copy()
    for _ in range(max_iter):
        step = np.linalg.solve(np.atleast_2d(jac(x)), np.atleast_1d(fun(x)))
        x -= step
        if np.max(np.abs(step)) < tol:
            return x
    return x
