"""Closed-loop extremum seeking systems and their integration.

Two loops are provided. The second-order Newton loop (SONES) drives
``theta_hat`` to a point where column ``m`` of the Hessian vanishes, using a
Riccati filter to invert the estimated third-derivative slice::

    theta_hat' = -K Lambda H_hat
    H_hat'     = omega_l ((y - eta) N_m(t) - H_hat)
    Lambda'    = omega_r Lambda (I - T_hat Lambda)
    T_hat'     = omega_l ((y - eta) P_m(t) - T_hat)
    eta'       = omega_h (y - eta)

with ``y = h(theta_hat + S(t))``. The gradient variant drops ``Lambda`` and
``T_hat`` and uses ``theta_hat' = +K H_hat``. Neither loop needs the
inflection point; it only enters the error-coordinate helpers used in
analysis.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import probing
from .errors import DivergenceError, InvalidArgumentError
from .estimation import evaluate_map
from .filters import FilterGains, lowpass_rhs, riccati_rhs, washout_rhs
from .maps import PolynomialMap, derivative_bundle
from .probing import ProbingConfig

SONES = "sones"
GRAD2 = "grad2"


@dataclass(frozen=True)
class GainConfig:
    K: tuple[float, ...]
    filters: FilterGains = field(default_factory=FilterGains)
    delta: float = 1.0  # analysis scale only; K and the corner frequencies already include it

    def __post_init__(self):
        k = tuple(float(x) for x in self.K)
        object.__setattr__(self, "K", k)
        if any(x < 0 for x in k):
            raise InvalidArgumentError(f"K entries must be non-negative, got {k}")

    @property
    def K_diag(self) -> np.ndarray:
        return np.array(self.K)


@dataclass
class SonesState:
    """Stacked SONES state. The same layout holds the error form
    ``(theta_tilde, H_hat, Lambda_tilde, T_tilde, eta_tilde)``."""

    theta: np.ndarray
    H: np.ndarray
    Lam: np.ndarray
    T: np.ndarray
    eta: float

    @property
    def p(self) -> int:
        return self.theta.size

    def flatten(self) -> np.ndarray:
        return np.concatenate([self.theta, self.H, self.Lam.ravel(), self.T.ravel(), [self.eta]])

    @classmethod
    def unflatten(cls, vec, p: int) -> SonesState:
        vec = np.asarray(vec, dtype=float)
        if vec.size != sones_dim(p):
            raise InvalidArgumentError(f"expected {sones_dim(p)} entries for p={p}, got {vec.size}")
        q = p * p
        return cls(
            vec[:p].copy(),
            vec[p : 2 * p].copy(),
            vec[2 * p : 2 * p + q].reshape(p, p).copy(),
            vec[2 * p + q : 2 * p + 2 * q].reshape(p, p).copy(),
            float(vec[-1]),
        )

    @classmethod
    def initial(cls, theta0, T0=None, H0=None, eta0: float = 0.0, Lam0=None) -> SonesState:
        """Default start: ``T_hat(0) = diag(-50)`` and ``Lambda(0) = T_hat(0)^{-1}``."""
        theta0 = np.asarray(theta0, dtype=float)
        p = theta0.size
        T0 = -50.0 * np.eye(p) if T0 is None else np.asarray(T0, dtype=float)
        Lam0 = np.linalg.inv(T0) if Lam0 is None else np.asarray(Lam0, dtype=float)
        H0 = np.zeros(p) if H0 is None else np.asarray(H0, dtype=float)
        return cls(theta0.copy(), H0, Lam0, T0, float(eta0))


@dataclass
class Grad2State:
    theta: np.ndarray
    H: np.ndarray
    eta: float

    def flatten(self) -> np.ndarray:
        return np.concatenate([self.theta, self.H, [self.eta]])

    @classmethod
    def unflatten(cls, vec, p: int) -> Grad2State:
        vec = np.asarray(vec, dtype=float)
        if vec.size != 2 * p + 1:
            raise InvalidArgumentError(f"expected {2 * p + 1} entries for p={p}, got {vec.size}")
        return cls(vec[:p].copy(), vec[p : 2 * p].copy(), float(vec[-1]))


def sones_dim(p: int) -> int:
    return 2 * p + 2 * p * p + 1


def _check(cfg: ProbingConfig, p: int) -> None:
    if cfg.p != p:
        raise InvalidArgumentError(f"probing config has p={cfg.p}, state has p={p}")


def sones_rhs(s: SonesState, t: float, h, cfg: ProbingConfig, gains: GainConfig) -> SonesState:
    _check(cfg, s.p)
    fg = gains.filters
    y = float(evaluate_map(h, (s.theta + probing.dither(cfg, t))[None, :])[0])
    hp = y - s.eta
    return SonesState(
        theta=-gains.K_diag * (s.Lam @ s.H),
        H=lowpass_rhs(s.H, hp * probing.demod_N_vector(cfg, t), fg.omega_l),
        Lam=riccati_rhs(s.Lam, s.T, fg.omega_r),
        T=lowpass_rhs(s.T, hp * probing.demod_P_matrix(cfg, t), fg.omega_l),
        eta=washout_rhs(s.eta, y, fg.omega_h),
    )


def grad2_rhs(s: Grad2State, t: float, h, cfg: ProbingConfig, gains: GainConfig) -> Grad2State:
    _check(cfg, s.theta.size)
    fg = gains.filters
    y = float(evaluate_map(h, (s.theta + probing.dither(cfg, t))[None, :])[0])
    return Grad2State(
        theta=gains.K_diag * s.H,
        H=lowpass_rhs(s.H, (y - s.eta) * probing.demod_N_vector(cfg, t), fg.omega_l),
        eta=washout_rhs(s.eta, y, fg.omega_h),
    )


def inflection_reference(h: PolynomialMap, theta_star, axis: int):
    """``(h(theta*), T_m, T_m^{-1})`` at a declared inflection point."""
    bundle = derivative_bundle(h, theta_star)
    T = bundle.third_slice(axis)
    return float(h(np.asarray(theta_star, dtype=float))), T, np.linalg.inv(T)


def to_error_form(s: SonesState, h: PolynomialMap, theta_star, axis: int) -> SonesState:
    h_star, T, T_inv = inflection_reference(h, theta_star, axis)
    return SonesState(s.theta - theta_star, s.H.copy(), s.Lam - T_inv, s.T - T, s.eta - h_star)


def from_error_form(e: SonesState, h: PolynomialMap, theta_star, axis: int) -> SonesState:
    h_star, T, T_inv = inflection_reference(h, theta_star, axis)
    return SonesState(e.theta + theta_star, e.H.copy(), e.Lam + T_inv, e.T + T, e.eta + h_star)


def error_form_rhs(
    e: SonesState, t: float, h: PolynomialMap, theta_star, cfg: ProbingConfig, gains: GainConfig
) -> SonesState:
    """Closed loop written in error coordinates around a known inflection point."""
    theta_star = np.asarray(theta_star, dtype=float)
    h_star, T, T_inv = inflection_reference(h, theta_star, cfg.axis)
    fg = gains.filters
    p = e.p
    y = float(evaluate_map(h, (theta_star + e.theta + probing.dither(cfg, t))[None, :])[0])
    lam = e.Lam + T_inv
    return SonesState(
        theta=-gains.K_diag * (lam @ e.H),
        H=-fg.omega_l * e.H + fg.omega_l * (y - h_star - e.eta) * probing.demod_N_vector(cfg, t),
        Lam=fg.omega_r * lam @ (np.eye(p) - (e.T + T) @ lam),
        T=-fg.omega_l * (e.T + T) + fg.omega_l * (y - h_star - e.eta) * probing.demod_P_matrix(cfg, t),
        eta=-fg.omega_h * e.eta + fg.omega_h * (y - h_star),
    )


# ---------------------------------------------------------------------------
# Integration
# ---------------------------------------------------------------------------


def default_dt(cfg: ProbingConfig) -> float:
    """At least 40 steps per cycle of the fastest demodulation harmonic ``3 max(omega)``."""
    return min(1e-4, 2.0 * math.pi / (120.0 * float(np.max(cfg.omega))))


def max_dt(cfg: ProbingConfig) -> float:
    return 2.0 * math.pi / (120.0 * float(np.max(cfg.omega)))


def integrate(
    rhs: Callable[[float, np.ndarray], np.ndarray],
    y0,
    t_span: tuple[float, float],
    dt: float,
    record_every: int = 1,
) -> tuple[np.ndarray, np.ndarray]:
    """Classical fixed-step RK4.

    Returns ``(t, Y)`` sampled every ``record_every`` steps, including the
    initial point. The number of steps is ``round((t1 - t0) / dt)``.
    """
    if dt <= 0:
        raise InvalidArgumentError("dt must be positive")
    t0, t1 = t_span
    n_steps = int(round((t1 - t0) / dt))
    x = np.array(y0, dtype=float)
    n_rec = n_steps // record_every + 1
    ts = t0 + dt * record_every * np.arange(n_rec)
    out = np.empty((n_rec,) + x.shape)
    out[0] = x
    for k in range(n_steps):
        t = t0 + k * dt
        k1 = rhs(t, x)
        k2 = rhs(t + 0.5 * dt, x + 0.5 * dt * k1)
        k3 = rhs(t + 0.5 * dt, x + 0.5 * dt * k2)
        k4 = rhs(t + dt, x + dt * k3)
        x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(x)):
            raise DivergenceError(t + dt)
        if (k + 1) % record_every == 0:
            out[(k + 1) // record_every] = x
    return ts, out


@dataclass
class Trajectory:
    """Uniformly sampled loop states (one flattened state per row)."""

    t: np.ndarray
    states: np.ndarray
    y: np.ndarray
    p: int
    loop: str = SONES

    @property
    def theta_hat(self) -> np.ndarray:
        return self.states[:, : self.p]

    @property
    def H_hat(self) -> np.ndarray:
        return self.states[:, self.p : 2 * self.p]

    @property
    def Lam(self) -> np.ndarray:
        self._need_sones()
        p, q = self.p, self.p * self.p
        return self.states[:, 2 * p : 2 * p + q].reshape(-1, p, p)

    @property
    def T_hat(self) -> np.ndarray:
        self._need_sones()
        p, q = self.p, self.p * self.p
        return self.states[:, 2 * p + q : 2 * p + 2 * q].reshape(-1, p, p)

    @property
    def eta(self) -> np.ndarray:
        return self.states[:, -1]

    def _need_sones(self):
        if self.loop != SONES:
            raise InvalidArgumentError(f"{self.loop} trajectories have no Lambda/T_hat states")

    def final_state(self):
        if self.loop == SONES:
            return SonesState.unflatten(self.states[-1], self.p)
        return Grad2State.unflatten(self.states[-1], self.p)

    def header(self) -> list[str]:
        p = self.p
        cols = ["t"] + [f"theta_hat_{i + 1}" for i in range(p)] + [f"Hhat_{i + 1}" for i in range(p)]
        if self.loop == SONES:
            pairs = [f"{i + 1}{j + 1}" for i in range(p) for j in range(p)]
            cols += [f"Lambda_{ij}" for ij in pairs] + [f"That_{ij}" for ij in pairs]
        return cols + ["eta", "y"]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(self.header())
            for t, row, y in zip(self.t, self.states, self.y):
                writer.writerow([repr(float(t))] + [repr(float(v)) for v in row] + [repr(float(y))])


def entry_time(t: np.ndarray, err: np.ndarray, band: float) -> float | None:
    """First time after which ``err`` stays within ``band`` to the end of the record."""
    outside = np.nonzero(err > band)[0]
    if outside.size == 0:
        return float(t[0])
    last = outside[-1]
    return None if last == t.size - 1 else float(t[last + 1])


def _record_every(dt: float, sample_interval: float | None) -> int:
    if sample_interval is None:
        return 1
    return max(1, int(round(sample_interval / dt)))


def simulate(
    h,
    cfg: ProbingConfig,
    gains: GainConfig,
    s0,
    duration: float,
    dt: float | None = None,
    sample_interval: float | None = 0.01,
    loop: str = SONES,
    engine: str = "auto",
) -> Trajectory:
    """Integrate a closed loop from ``s0`` for ``duration`` seconds.

    Polynomial maps run on a compiled RK4 kernel (``engine="auto"``);
    ``engine="python"`` forces the reference numpy right-hand side.
    """
    level = probing.FULL if loop == SONES else probing.HESSIAN_ONLY
    probing.require_valid(cfg.frequencies, level)
    if loop not in (SONES, GRAD2):
        raise InvalidArgumentError(f"unknown loop {loop!r}")
    dt = default_dt(cfg) if dt is None else float(dt)
    if dt <= 0 or dt > max_dt(cfg) * (1 + 1e-12):
        raise InvalidArgumentError(f"dt={dt:g} outside (0, {max_dt(cfg):g}] for these frequencies")
    p = cfg.p
    if len(gains.K) != p:
        raise InvalidArgumentError(f"gain K has {len(gains.K)} entries, expected {p}")
    x0 = s0.flatten()
    every = _record_every(dt, sample_interval)
    n_steps = int(round(duration / dt))

    use_kernel = engine == "numba" or (engine == "auto" and isinstance(h, PolynomialMap))
    if use_kernel:
        from . import _fastloop

        ts, states, ys = _fastloop.run(h, cfg, gains, x0, n_steps, dt, every, loop)
        return Trajectory(ts, states, ys, p, loop)

    if loop == SONES:
        def rhs(t, x):
            return sones_rhs(SonesState.unflatten(x, p), t, h, cfg, gains).flatten()
    else:
        def rhs(t, x):
            return grad2_rhs(Grad2State.unflatten(x, p), t, h, cfg, gains).flatten()

    ts, states = integrate(rhs, x0, (0.0, n_steps * dt), dt, every)
    points = states[:, :p] + probing.dither(cfg, ts)
    return Trajectory(ts, states, evaluate_map(h, points), p, loop)


def default_initial(p: int, theta0: Sequence[float], loop: str = SONES):
    if loop == SONES:
        return SonesState.initial(theta0)
    return Grad2State(np.asarray(theta0, dtype=float), np.zeros(p), 0.0)
