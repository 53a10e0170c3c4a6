import itertools
import math

import numpy as np

from sones.maps import PolynomialMap, derivative_bundle
from sones import probing
from sones.estimation import QuadratureSpec, estimate_hessian, estimate_third_slice, periodic_average

import trig_oracle as tr


def random_polynomial(p, degree, seed, scale=1.0):
    rng = np.random.default_rng(seed)
    terms = [(e, scale * rng.normal()) for e in itertools.product(range(degree + 1), repeat=p) if sum(e) <= degree]
    return PolynomialMap.from_terms(p, terms)


def estimation_errors(h, theta, cfg, amplitudes):
    """Max-abs errors of the Hessian and third-slice estimates at each amplitude level."""
    exact = derivative_bundle(h, theta)
    out = []
    for amp in amplitudes:
        c = cfg.with_amplitudes([amp] * cfg.p)
        eh = np.max(np.abs(estimate_hessian(h, theta, c) - exact.hessian))
        et = np.max(np.abs(estimate_third_slice(h, theta, c) - exact.third_slice(cfg.axis)))
        out.append((eh, et))
    return np.array(out)


def loglog_slope(x, y):
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def _monomials(p):
    return [k for k in itertools.product(range(4), repeat=p) if sum(k) <= 3]


def calibration_sweep(cfg, spec=QuadratureSpec(tolerance=1e-12)):
    """Largest deviation of demodulated dither monomials from their Taylor calibration values."""
    p = cfg.p
    a, w_int = cfg.a, [int(x) for x in probing._integerize(cfg.frequencies)]
    period = probing.averaging_period(cfg)
    fastest = 3 * float(np.max(cfg.omega))
    worst = 0.0
    for k in _monomials(p):
        fact = math.prod(math.factorial(x) for x in k)

        def monomial(t, k=k):
            s = probing.dither(cfg, t)
            return np.prod(s ** np.array(k), axis=1) / fact

        osc = tr.const(1.0)
        for i, ki in enumerate(k):
            osc = tr.mul(osc, tr.power(tr.sin_(w_int[i], a[i]), ki))
        osc = {f: c / fact for f, c in osc.items()}
        for i, j in itertools.combinations_with_replacement(range(p), 2):
            target = 1.0 if list(k) == _alpha(p, (i, j)) else 0.0
            got = periodic_average(lambda t: probing.demod_N_entry(cfg, i, j, t) * monomial(t), period, spec, fastest)
            exact = tr.mean(tr.mul(tr.N_entry(a, w_int, i, j), osc))
            assert abs(exact - target) <= 1e-12, (k, exact, target)
            worst = max(worst, abs(got - target))
        for i, j, l in itertools.combinations_with_replacement(range(p), 3):
            target = 1.0 if list(k) == _alpha(p, (i, j, l)) else 0.0
            got = periodic_average(lambda t: probing.demod_P_entry(cfg, i, j, l, t) * monomial(t), period, spec, fastest)
            exact = tr.mean(tr.mul(tr.P_entry(a, w_int, i, j, l), osc))
            assert abs(exact - target) <= 1e-12, (k, exact, target)
            worst = max(worst, abs(got - target))
    return worst


def _alpha(p, idx):
    out = [0] * p
    for i in idx:
        out[i] += 1
    return out
