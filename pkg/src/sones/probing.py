"""Sinusoidal dither, demodulation signals and probing-frequency conditions.

Frequencies are exact rationals (:class:`fractions.Fraction`). All condition
checks and the common averaging period are computed without rounding.
Axis indices are 0-based in the API and 1-based in rendered text.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator, Sequence

import numpy as np

from .errors import FrequencyError, InvalidArgumentError, SearchExhaustedError

HESSIAN_ONLY = "hessian_only"
FULL = "full"
LEVELS = (HESSIAN_ONLY, FULL)


def as_fraction(value) -> Fraction:
    """Exact rational from an int, Fraction, string (``"7/2"``) or decimal float."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, float):
        # Round-trip through the shortest repr so 0.1 means 1/10.
        return Fraction(repr(value))
    return Fraction(value)


@dataclass(frozen=True)
class ProbingConfig:
    amplitudes: tuple[float, ...]
    frequencies: tuple[Fraction, ...]
    axis: int = 0

    def __post_init__(self):
        amps = tuple(float(a) for a in self.amplitudes)
        freqs = tuple(as_fraction(w) for w in self.frequencies)
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "frequencies", freqs)
        if len(amps) != len(freqs) or not amps:
            raise InvalidArgumentError("amplitudes and frequencies must be non-empty and of equal length")
        if any(a <= 0 for a in amps):
            raise InvalidArgumentError(f"amplitudes must be positive, got {amps}")
        if any(w <= 0 for w in freqs):
            raise InvalidArgumentError(f"frequencies must be positive, got {freqs}")
        if not 0 <= self.axis < len(amps):
            raise InvalidArgumentError(f"axis {self.axis} out of range for p={len(amps)}")

    @property
    def p(self) -> int:
        return len(self.amplitudes)

    @property
    def a(self) -> np.ndarray:
        return np.array(self.amplitudes)

    @property
    def omega(self) -> np.ndarray:
        return np.array([float(w) for w in self.frequencies])

    def with_amplitudes(self, amplitudes) -> ProbingConfig:
        return ProbingConfig(tuple(amplitudes), self.frequencies, self.axis)


def dither(cfg: ProbingConfig, t):
    """``S_i(t) = a_i sin(omega_i t)``; shape ``(p,)`` for scalar ``t``, ``(n, p)`` for arrays."""
    t = np.asarray(t, dtype=float)
    return cfg.a * np.sin(np.multiply.outer(t, cfg.omega))


def demod_N_entry(cfg: ProbingConfig, i: int, j: int, t):
    a, w = cfg.a, cfg.omega
    if i == j:
        return -8.0 / a[i] ** 2 * np.cos(2.0 * w[i] * t)
    return -4.0 / (a[i] * a[j]) * np.cos((w[i] + w[j]) * t)


def demod_N_matrix(cfg: ProbingConfig, t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    out = np.empty(t.shape + (cfg.p, cfg.p))
    for i in range(cfg.p):
        for j in range(i, cfg.p):
            out[..., i, j] = out[..., j, i] = demod_N_entry(cfg, i, j, t)
    return out


def demod_N_vector(cfg: ProbingConfig, t) -> np.ndarray:
    """Column ``cfg.axis`` of the N demodulation matrix."""
    t = np.asarray(t, dtype=float)
    m = cfg.axis
    return np.stack([demod_N_entry(cfg, i, m, t) for i in range(cfg.p)], axis=-1)


def demod_P_entry(cfg: ProbingConfig, i: int, j: int, k: int, t):
    """Third-order demodulator, fully symmetric in ``(i, j, k)``."""
    a, w = cfg.a, cfg.omega
    i, j, k = sorted((i, j, k))  # fixed evaluation order makes the symmetry exact
    if i == j == k:
        return -48.0 / a[i] ** 3 * np.sin(3.0 * w[i] * t)
    if i == j or j == k or i == k:
        # The repeated index carries the factor 2.
        rep = j if j in (i, k) else i
        other = ({i, j, k} - {rep}).pop()
        return -16.0 / (a[rep] ** 2 * a[other]) * np.sin((2.0 * w[rep] + w[other]) * t)
    return -8.0 / (a[i] * a[j] * a[k]) * np.sin((w[i] + w[j] + w[k]) * t)


def demod_P_matrix(cfg: ProbingConfig, t) -> np.ndarray:
    """``P_m(t)[i, j] = P_{m,i,j}(t)`` with ``m = cfg.axis``."""
    t = np.asarray(t, dtype=float)
    m = cfg.axis
    out = np.empty(t.shape + (cfg.p, cfg.p))
    for i in range(cfg.p):
        for j in range(i, cfg.p):
            out[..., i, j] = out[..., j, i] = demod_P_entry(cfg, m, i, j, t)
    return out


def averaging_period_over_2pi(frequencies: Sequence) -> Fraction:
    """``LCM{1/omega_i}`` as an exact rational (LCM of numerators over GCD of denominators)."""
    recips = [1 / as_fraction(w) for w in frequencies]
    num = math.lcm(*(r.numerator for r in recips))
    den = math.gcd(*(r.denominator for r in recips))
    return Fraction(num, den)


def averaging_period(cfg: ProbingConfig) -> float:
    """Common period of every dither and demodulation harmonic, in seconds."""
    return 2.0 * math.pi * float(averaging_period_over_2pi(cfg.frequencies))


# ---------------------------------------------------------------------------
# Probing-frequency conditions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Condition:
    """Forbidden equality ``sum(lhs) == sum(rhs)`` over distinct role indices.

    ``lhs`` and ``rhs`` hold ``(role, weight)`` pairs; roles are 0-based
    positions in the index tuple (i, j, k, l, m, n).
    """

    family: str
    lhs: tuple[tuple[int, int], ...]
    rhs: tuple[tuple[int, int], ...]

    @property
    def arity(self) -> int:
        return 1 + max(r for r, _ in self.lhs + self.rhs)


def _cond(family: str, lhs: str, rhs: str) -> Condition:
    def parse(side: str):
        out = []
        for tok in side.split("+"):
            tok = tok.strip()
            weight = int(tok[:-1]) if len(tok) > 1 else 1
            out.append(("ijklmn".index(tok[-1]), weight))
        return tuple(out)

    return Condition(family, parse(lhs), parse(rhs))


HESSIAN_CONDITIONS = (
    _cond("w_i!=w_j", "i", "j"),
    _cond("w_i!=(w_j+w_k)/2", "2i", "j+k"),
    _cond("w_i!=w_j+2w_k", "i", "j+2k"),
    _cond("w_i!=w_j+w_k+w_l", "i", "j+k+l"),
    _cond("w_i!=w_j+w_k-w_l", "i+l", "j+k"),
)

FULL_CONDITIONS = (
    _cond("w_i!=w_j", "i", "j"),
    _cond("w_i!=2w_j", "i", "2j"),
    _cond("w_i!=3w_j", "i", "3j"),
    _cond("w_i!=5w_j", "i", "5j"),
    _cond("w_i!=w_j+w_k", "i", "j+k"),
    _cond("w_i!=w_j+w_k+w_l", "i", "j+k+l"),
    _cond("w_i!=w_j+2w_k", "i", "j+2k"),
    _cond("w_i!=w_j+4w_k", "i", "j+4k"),
    _cond("w_i!=2w_j+3w_k", "i", "2j+3k"),
    _cond("w_i!=w_j+2w_k+2w_l", "i", "j+2k+2l"),
    _cond("w_i!=w_j+w_k+3w_l", "i", "j+k+3l"),
    _cond("w_i!=w_j+w_k+w_l+2w_m", "i", "j+k+l+2m"),
    _cond("w_i!=w_j+w_k+w_l+w_m+w_n", "i", "j+k+l+m+n"),
    _cond("w_i!=(w_j+w_k)/2", "2i", "j+k"),
    _cond("w_i!=(w_j+3w_k)/2", "2i", "j+3k"),
    _cond("w_i!=(w_j+2w_k)/3", "3i", "j+2k"),
    _cond("w_i!=(w_j+w_k+w_l)/3", "3i", "j+k+l"),
    _cond("w_i!=(w_j+w_k)/4", "4i", "j+k"),
    _cond("w_i!=(w_j+w_k+2w_l)/2", "2i", "j+k+2l"),
    _cond("w_i!=(w_j+w_k+w_l+w_m)/2", "2i", "j+k+l+m"),
    _cond("w_i+w_j!=w_k+w_l", "i+j", "k+l"),
    _cond("w_i+w_j!=w_k+3w_l", "i+j", "k+3l"),
    _cond("w_i+w_j!=2w_k+2w_l", "i+j", "2k+2l"),
    _cond("w_i+w_j!=w_k+w_l+2w_m", "i+j", "k+l+2m"),
    _cond("w_i+w_j!=w_k+w_l+w_m+w_n", "i+j", "k+l+m+n"),
    _cond("w_i+2w_j!=w_k+2w_l", "i+2j", "k+2l"),
    _cond("w_i+2w_j!=w_k+w_l+w_m", "i+2j", "k+l+m"),
    _cond("w_i+w_j+w_k!=w_l+w_m+w_n", "i+j+k", "l+m+n"),
)


def conditions_for(level: str) -> tuple[Condition, ...]:
    if level == HESSIAN_ONLY:
        return HESSIAN_CONDITIONS
    if level == FULL:
        return FULL_CONDITIONS
    raise InvalidArgumentError(f"unknown validation level {level!r}; expected one of {LEVELS}")


@dataclass(frozen=True)
class FrequencyViolation:
    family: str
    indices: tuple[int, ...]  # 1-based, one per role
    condition: Condition

    def __str__(self) -> str:
        def side(terms):
            parts = []
            for role, weight in terms:
                idx = self.indices[role]
                parts.append(f"omega[{idx}]" if weight == 1 else f"{weight}*omega[{idx}]")
            return " + ".join(parts)

        return f"condition {self.family}: {side(self.condition.lhs)} == {side(self.condition.rhs)}"


def _integerize(frequencies: Sequence) -> list[int]:
    fr = [as_fraction(w) for w in frequencies]
    scale = math.lcm(*(f.denominator for f in fr))
    return [int(f * scale) for f in fr]


def _relation_key(cond: Condition, idx: tuple[int, ...]):
    lhs = tuple(sorted((idx[r], w) for r, w in cond.lhs))
    rhs = tuple(sorted((idx[r], w) for r, w in cond.rhs))
    return cond.family, frozenset((lhs, rhs))


def _iter_violations(
    values: Sequence[int], conditions, newest: int | None = None
) -> Iterator[tuple[Condition, tuple[int, ...]]]:
    p = len(values)
    for cond in conditions:
        if cond.arity > p:
            continue
        for idx in itertools.permutations(range(p), cond.arity):
            if newest is not None and newest not in idx:
                continue
            lhs = sum(w * values[idx[r]] for r, w in cond.lhs)
            rhs = sum(w * values[idx[r]] for r, w in cond.rhs)
            if lhs == rhs:
                yield cond, idx


def validate_frequencies(frequencies: Sequence, level: str = FULL) -> list[FrequencyViolation]:
    """Every violated condition, each distinct relation reported once.

    An empty list means the frequencies are valid at ``level``.
    """
    conditions = conditions_for(level)
    if any(as_fraction(w) <= 0 for w in frequencies):
        raise InvalidArgumentError("frequencies must be positive")
    values = _integerize(frequencies)
    seen = set()
    out = []
    for cond, idx in _iter_violations(values, conditions):
        key = _relation_key(cond, idx)
        if key in seen:
            continue
        seen.add(key)
        out.append(FrequencyViolation(cond.family, tuple(i + 1 for i in idx), cond))
    return out


def require_valid(frequencies: Sequence, level: str) -> None:
    violations = validate_frequencies(frequencies, level)
    if violations:
        raise FrequencyError(violations, level)


def search_frequencies(p: int, low: int, high: int, level: str = FULL) -> tuple[Fraction, ...]:
    """Lexicographically smallest integer tuple in ``[low, high]^p`` passing validation.

    Depth-first over prefixes; a prefix is extended only if no condition
    confined to its indices is violated, which never prunes a valid tuple.
    """
    if p < 1 or low < 1 or high < low:
        raise InvalidArgumentError(f"empty search: p={p}, range=[{low}, {high}]")
    conditions = conditions_for(level)
    prefix: list[int] = []

    def extend() -> bool:
        if len(prefix) == p:
            return True
        for w in range(low, high + 1):
            prefix.append(w)
            if next(_iter_violations(prefix, conditions, newest=len(prefix) - 1), None) is None:
                if extend():
                    return True
            prefix.pop()
        return False

    if not extend():
        raise SearchExhaustedError(f"no valid {level} frequency tuple of size {p} in [{low}, {high}]")
    return tuple(Fraction(w) for w in prefix)
