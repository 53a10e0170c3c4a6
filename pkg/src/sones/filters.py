"""Continuous-time filter right-hand sides composed by the closed loops."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError


@dataclass(frozen=True)
class FilterGains:
    """Low-pass, washout (high-pass) and Riccati corner frequencies in rad/s."""

    omega_l: float = 1.0
    omega_h: float = 1.0
    omega_r: float = 1.0

    def __post_init__(self):
        for name in ("omega_l", "omega_h", "omega_r"):
            if not getattr(self, name) > 0:
                raise InvalidArgumentError(f"{name} must be positive, got {getattr(self, name)}")


def lowpass_rhs(x, u, omega_l: float):
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if x.shape != u.shape:
        raise InvalidArgumentError(f"low-pass state {x.shape} and input {u.shape} differ in shape")
    return omega_l * (u - x)


def washout_rhs(eta: float, y: float, omega_h: float) -> float:
    return omega_h * (y - eta)


def washout_output(y: float, eta: float) -> float:
    return y - eta


def riccati_rhs(lam, t_hat, omega_r: float) -> np.ndarray:
    """``omega_r * Lambda (I - T_hat Lambda)``; equilibrium at ``Lambda = T_hat^{-1}``."""
    lam = np.asarray(lam, dtype=float)
    t_hat = np.asarray(t_hat, dtype=float)
    if lam.ndim != 2 or lam.shape[0] != lam.shape[1] or lam.shape != t_hat.shape:
        raise InvalidArgumentError(f"Riccati filter needs equal square matrices, got {lam.shape} and {t_hat.shape}")
    out = omega_r * (lam - lam @ t_hat @ lam)
    if np.array_equal(lam, lam.T) and np.array_equal(t_hat, t_hat.T):
        # Mathematically symmetric; remove matmul rounding asymmetry.
        out = 0.5 * (out + out.T)
    return out
