"""Averaged SONES dynamics and local stability analysis.

Works in error coordinates around a declared inflection point ``theta*``:
``theta_tilde = theta_hat - theta*``, ``Lambda_tilde = Lambda - T_m^{-1}``,
``T_tilde = T_hat - T_m``, ``eta_tilde = eta - h(theta*)``. Periodic terms
are replaced by their exact one-period means, evaluated by quadrature on
``nu(q) = h(theta* + q) - h(theta*)``.
"""

from __future__ import annotations

import numpy as np

from . import probing
from .dynamics import GainConfig, SonesState, Trajectory, integrate, sones_dim
from .errors import ConvergenceError, NumericalError, SingularityError
from .estimation import DEFAULT_QUADRATURE, QuadratureSpec, estimate_hessian_column, evaluate_map, periodic_average
from .maps import PolynomialMap, centered_deviation, derivative_bundle, fourth_derivative
from .probing import ProbingConfig


class AveragedSystem:
    """Right-hand side of the averaged loop; callable as ``rhs(t, x)`` on flat states."""

    def __init__(
        self,
        h: PolynomialMap,
        theta_star,
        cfg: ProbingConfig,
        gains: GainConfig,
        spec: QuadratureSpec = DEFAULT_QUADRATURE,
    ):
        probing.require_valid(cfg.frequencies, probing.FULL)
        self.h = h
        self.theta_star = np.asarray(theta_star, dtype=float)
        self.cfg = cfg
        self.gains = gains
        self.spec = spec
        self.nu = centered_deviation(h, self.theta_star)
        self.T = derivative_bundle(self.nu, np.zeros(cfg.p)).third_slice(cfg.axis)
        try:
            self.T_inv = np.linalg.inv(self.T)
        except np.linalg.LinAlgError as exc:
            raise SingularityError(f"third-derivative slice T_{cfg.axis + 1} is singular") from exc
        self.period = probing.averaging_period(cfg)
        self.p = cfg.p

    def averages(self, theta_tilde) -> tuple[np.ndarray, np.ndarray, float]:
        """One-period means of ``nu N_m``, ``nu P_m`` and ``nu`` at ``theta_tilde``."""
        p, cfg = self.p, self.cfg

        def integrand(t):
            v = evaluate_map(self.nu, theta_tilde + probing.dither(cfg, t))
            n = probing.demod_N_vector(cfg, t) * v[:, None]
            pm = (probing.demod_P_matrix(cfg, t) * v[:, None, None]).reshape(t.size, p * p)
            return np.concatenate([n, pm, v[:, None]], axis=1)

        avg = periodic_average(integrand, self.period, self.spec, 3.0 * float(np.max(cfg.omega)))
        return avg[:p], avg[p : p + p * p].reshape(p, p), float(avg[-1])

    def rhs_state(self, e: SonesState) -> SonesState:
        fg = self.gains.filters
        avg_n, avg_p, avg_0 = self.averages(e.theta)
        lam = e.Lam + self.T_inv
        return SonesState(
            theta=-self.gains.K_diag * (lam @ e.H),
            H=-fg.omega_l * e.H + fg.omega_l * avg_n,
            Lam=fg.omega_r * lam @ (np.eye(self.p) - (e.T + self.T) @ lam),
            T=-fg.omega_l * (e.T + self.T) + fg.omega_l * avg_p,
            eta=-fg.omega_h * e.eta + fg.omega_h * avg_0,
        )

    def __call__(self, t: float, x: np.ndarray) -> np.ndarray:
        return self.rhs_state(SonesState.unflatten(x, self.p)).flatten()

    def to_error(self, s: SonesState) -> SonesState:
        return SonesState(
            s.theta - self.theta_star,
            s.H.copy(),
            s.Lam - self.T_inv,
            s.T - self.T,
            s.eta - float(self.h(self.theta_star)),
        )

    def to_loop(self, e: SonesState) -> SonesState:
        return SonesState(
            e.theta + self.theta_star,
            e.H.copy(),
            e.Lam + self.T_inv,
            e.T + self.T,
            e.eta + float(self.h(self.theta_star)),
        )


def averaged_rhs(
    e: SonesState,
    h: PolynomialMap,
    theta_star,
    cfg: ProbingConfig,
    gains: GainConfig,
    spec: QuadratureSpec = DEFAULT_QUADRATURE,
) -> SonesState:
    return AveragedSystem(h, theta_star, cfg, gains, spec).rhs_state(e)


def averaged_equilibrium(
    h: PolynomialMap,
    theta_star,
    cfg: ProbingConfig,
    gains: GainConfig,
    spec: QuadratureSpec = DEFAULT_QUADRATURE,
    s0: SonesState | None = None,
    tol: float = 1e-9,
    dt: float = 0.5,
    t_max: float = 2e4,
) -> SonesState:
    """Integrate the averaged system until ``max|rhs| < tol``; returns the error-form state.

    ``s0`` is in error coordinates; the default starts at ``theta_tilde = 0``
    with the filter states ``T_hat = diag(-50)``, ``Lambda = T_hat^{-1}``,
    ``H_hat = 0`` and ``eta = 0``.
    """
    system = AveragedSystem(h, theta_star, cfg, gains, spec)
    if s0 is None:
        s0 = system.to_error(SonesState.initial(system.theta_star))
    x = s0.flatten()
    chunk = 50.0
    t = 0.0
    while t < t_max:
        if np.max(np.abs(system(t, x))) < tol:
            return SonesState.unflatten(x, system.p)
        _, xs = integrate(system, x, (t, t + chunk), dt, record_every=int(round(chunk / dt)))
        x = xs[-1]
        t += chunk
    raise ConvergenceError(f"averaged system not at rest after {t_max:g} s (|rhs| = {np.max(np.abs(system(t, x))):.3g})")


def simulate_averaged(
    h: PolynomialMap,
    theta_star,
    cfg: ProbingConfig,
    gains: GainConfig,
    s0: SonesState,
    duration: float,
    dt: float = 0.05,
    sample_interval: float | None = 0.1,
    spec: QuadratureSpec = DEFAULT_QUADRATURE,
) -> Trajectory:
    """Averaged trajectory from loop-coordinate ``s0``, reported in loop coordinates.

    The ``y`` column holds ``h(theta_hat)`` (no dither).
    """
    system = AveragedSystem(h, theta_star, cfg, gains, spec)
    every = 1 if sample_interval is None else max(1, int(round(sample_interval / dt)))
    ts, xs = integrate(system, system.to_error(s0).flatten(), (0.0, duration), dt, every)
    offset = system.to_loop(SonesState.unflatten(np.zeros(sones_dim(system.p)), system.p)).flatten()
    states = xs + offset
    return Trajectory(ts, states, evaluate_map(h, states[:, : system.p]), system.p)


def theorem_bias(h: PolynomialMap, theta_star, cfg: ProbingConfig) -> tuple[np.ndarray, float]:
    """Predicted equilibrium offsets of ``theta_tilde`` and ``eta_tilde``.

    ``theta_tilde_i ~ sum_j c_j^i a_j^2`` with
    ``c_j = -1/2 T_m^{-1} d^4 nu(0) / (dq dq_j^2 dq_m)``, and
    ``eta_tilde ~ grad nu(0) . theta_tilde + 1/4 sum_i d^2 nu(0)/dq_i^2 a_i^2``.
    """
    p, m = cfg.p, cfg.axis
    nu = centered_deviation(h, theta_star)
    zero = np.zeros(p)
    bundle = derivative_bundle(nu, zero)
    T = bundle.third_slice(m)
    if abs(np.linalg.det(T)) < 1e-14 * max(1.0, np.max(np.abs(T))) ** p:
        raise SingularityError(f"third-derivative slice T_{m + 1} is singular")
    T_inv = np.linalg.inv(T)
    a2 = cfg.a**2
    theta_bias = np.zeros(p)
    for j in range(p):
        d4 = np.array([fourth_derivative(nu, zero, (i, j, j, m)) for i in range(p)])
        theta_bias += (-0.5 * T_inv @ d4) * a2[j]
    eta_bias = float(bundle.gradient @ theta_bias + 0.25 * np.sum(np.diag(bundle.hessian) * a2))
    return theta_bias, eta_bias


def demodulated_bias(
    h: PolynomialMap, theta_star, cfg: ProbingConfig, spec: QuadratureSpec = DEFAULT_QUADRATURE
) -> np.ndarray:
    """Leading-order ``theta_tilde`` offset implied by the N demodulator.

    At equilibrium the averaged Hessian-column estimate vanishes. Linearizing
    it around ``theta_tilde = 0`` gives ``T_m theta_tilde + r = 0`` with ``r``
    the estimate at ``theta_tilde = 0``.
    """
    nu = centered_deviation(h, theta_star)
    zero = np.zeros(cfg.p)
    T = derivative_bundle(nu, zero).third_slice(cfg.axis)
    r = estimate_hessian_column(nu, zero, cfg, spec)
    return -np.linalg.solve(T, r)


def jacobian_at(fun, x, rel_step: float = 1e-6) -> np.ndarray:
    """Central finite-difference Jacobian of ``fun: R^n -> R^n`` at ``x``."""
    x = np.asarray(x, dtype=float)
    f0 = np.asarray(fun(x))
    J = np.empty((f0.size, x.size))
    for i in range(x.size):
        step = rel_step * max(1.0, abs(x[i]))
        xp, xm = x.copy(), x.copy()
        xp[i] += step
        xm[i] -= step
        J[:, i] = (np.asarray(fun(xp)) - np.asarray(fun(xm))) / (2.0 * step)
    return J


def is_hurwitz(J, margin: float = 1e-9) -> tuple[bool, np.ndarray]:
    try:
        eig = np.linalg.eigvals(np.asarray(J, dtype=float))
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigenvalue iteration failed: {exc}") from exc
    return bool(np.max(eig.real) < -margin), eig


def slow_eigenvalues(eig: np.ndarray, count: int) -> np.ndarray:
    """The ``count`` eigenvalues closest to the imaginary axis."""
    return eig[np.argsort(np.abs(eig.real))[:count]]
