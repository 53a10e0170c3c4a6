"""Open-loop, period-averaged demodulation estimators.

With the parameter estimate frozen at ``theta_hat``, the output
``y(t) = h(theta_hat + S(t))`` is multiplied by a demodulation signal and
averaged over one common period. For a polynomial map of degree <= 3 the
Hessian and third-derivative estimates are exact; higher-degree terms leave
remainders that shrink with the dither amplitude.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import probing
from .errors import InvalidArgumentError, QuadratureError
from .maps import PolynomialMap, evaluate
from .probing import ProbingConfig


@dataclass(frozen=True)
class QuadratureSpec:
    samples_per_cycle: int = 64
    tolerance: float = 1e-9
    max_refinements: int = 10

    def __post_init__(self):
        if self.samples_per_cycle < 50:
            raise InvalidArgumentError("samples_per_cycle must be at least 50")


DEFAULT_QUADRATURE = QuadratureSpec()


def _simpson_mean(f, period: float, n: int) -> np.ndarray:
    t = np.linspace(0.0, period, n + 1)
    vals = np.asarray(f(t), dtype=float)
    w = np.ones(n + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    total = np.tensordot(w, vals, axes=(0, 0))
    # Scale of the summed magnitudes, for the roundoff floor.
    scale = np.tensordot(w, np.abs(vals), axes=(0, 0))
    return total / (3.0 * n), scale / (3.0 * n)


def periodic_average(
    f: Callable[[np.ndarray], np.ndarray],
    period: float,
    spec: QuadratureSpec = DEFAULT_QUADRATURE,
    max_frequency: float | None = None,
):
    """Mean of ``f`` over ``[0, period]`` by refined composite Simpson.

    ``f`` maps a 1-D time array of length ``n`` to an array of shape
    ``(n, ...)``; the result has the trailing shape. ``max_frequency``
    (rad/s) sets the initial resolution to ``spec.samples_per_cycle`` samples
    per cycle of the fastest harmonic.
    """
    cycles = 1 if max_frequency is None else max(1, math.ceil(period * max_frequency / (2 * math.pi)))
    n = 2 * math.ceil(spec.samples_per_cycle * cycles / 2)
    prev, _ = _simpson_mean(f, period, n)
    for _ in range(spec.max_refinements):
        n *= 2
        cur, scale = _simpson_mean(f, period, n)
        diff = np.max(np.abs(cur - prev))
        floor = 1e-13 * float(np.max(scale))
        if diff <= max(spec.tolerance, floor):
            return cur + (cur - prev) / 15.0
        prev = cur
    raise QuadratureError(
        f"periodic average did not converge after {spec.max_refinements} refinements (last change {diff:.3g})"
    )


def evaluate_map(h, points: np.ndarray) -> np.ndarray:
    """Evaluate a polynomial or a generic callable map at each row of ``points``."""
    if isinstance(h, PolynomialMap):
        return evaluate(h, points)
    out = np.asarray(h(points), dtype=float)
    if out.shape == (points.shape[0],):
        return out
    return np.array([float(h(row)) for row in points])


def _output_samples(h, theta_hat, cfg: ProbingConfig):
    theta_hat = np.asarray(theta_hat, dtype=float)

    def y(t):
        return evaluate_map(h, theta_hat + probing.dither(cfg, t))

    return y


def _fastest(cfg: ProbingConfig) -> float:
    return 3.0 * float(np.max(cfg.omega))


def estimate_hessian(h, theta_hat, cfg: ProbingConfig, spec: QuadratureSpec = DEFAULT_QUADRATURE) -> np.ndarray:
    probing.require_valid(cfg.frequencies, probing.HESSIAN_ONLY)
    y = _output_samples(h, theta_hat, cfg)
    return periodic_average(
        lambda t: probing.demod_N_matrix(cfg, t) * y(t)[:, None, None],
        probing.averaging_period(cfg),
        spec,
        _fastest(cfg),
    )


def estimate_hessian_column(
    h, theta_hat, cfg: ProbingConfig, spec: QuadratureSpec = DEFAULT_QUADRATURE
) -> np.ndarray:
    probing.require_valid(cfg.frequencies, probing.HESSIAN_ONLY)
    y = _output_samples(h, theta_hat, cfg)
    return periodic_average(
        lambda t: probing.demod_N_vector(cfg, t) * y(t)[:, None],
        probing.averaging_period(cfg),
        spec,
        _fastest(cfg),
    )


def estimate_third_slice(
    h, theta_hat, cfg: ProbingConfig, spec: QuadratureSpec = DEFAULT_QUADRATURE
) -> np.ndarray:
    probing.require_valid(cfg.frequencies, probing.FULL)
    y = _output_samples(h, theta_hat, cfg)
    return periodic_average(
        lambda t: probing.demod_P_matrix(cfg, t) * y(t)[:, None, None],
        probing.averaging_period(cfg),
        spec,
        _fastest(cfg),
    )
