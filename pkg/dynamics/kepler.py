#!/usr/bin/env python3
"""
SplitFlow Kepler Propagator
Universal-variable two-body flow with Stumpff functions and Gauss f-g functions
"""

import math
from dataclasses import dataclass
from typing import Sequence, Tuple

import mpmath
import numpy as np
import structlog

from utils.validation import SplitFlowError

logger = structlog.get_logger('SplitFlow.Kepler')

SERIES_LIMIT = 0.1
REDUCTION_LIMIT = 4.0
TOLERANCE = 1e-15
MAX_ITERATIONS = 50
SERIES_TERMS = 12


class KeplerError(SplitFlowError):
    """Raised for invalid two-body states"""
    pass


class KeplerConvergenceError(KeplerError):
    """Universal Kepler equation did not converge"""
    pass


@dataclass(frozen=True)
class KeplerOrbitParams:
    """Gravitational parameter and dimension of a Keplerian part"""
    mu: float
    dim: int = 3

    def __post_init__(self):
        if not self.mu > 0:
            raise KeplerError(f"Gravitational parameter must be positive, got {self.mu}")
        if self.dim not in (2, 3):
            raise KeplerError(f"Dimension must be 2 or 3, got {self.dim}")


def scalar_lib(x):
    """math for native floats, mpmath for mpmath values"""
    return mpmath if isinstance(x, (mpmath.mpf, mpmath.mpc)) else math


def _tolerance(x):
    if isinstance(x, mpmath.mpf):
        return mpmath.mpf(10) ** (3 - mpmath.mp.dps)
    return TOLERANCE


def _stumpff_series(z) -> Tuple:
    # |z| < 0.1: twelve terms exhaust double precision, extended precision needs more
    terms = SERIES_TERMS if scalar_lib(z) is math else 12 + mpmath.mp.dps // 2
    values = []
    for k in range(4):
        term = z * 0 + 1
        for j in range(1, k + 1):
            term = term / j
        total = term
        for n in range(1, terms):
            term = -term * z / ((k + 2 * n - 1) * (k + 2 * n))
            total = total + term
        values.append(total)
    return tuple(values)


def _stumpff_closed(z) -> Tuple:
    lib = scalar_lib(z)
    if z > 0:
        s = lib.sqrt(z)
        half = lib.sin(s / 2)
        c0 = lib.cos(s)
        c1 = lib.sin(s) / s
        c2 = 2 * half * half / z
        c3 = (s - lib.sin(s)) / (z * s)
    else:
        s = lib.sqrt(-z)
        half = lib.sinh(s / 2)
        c0 = lib.cosh(s)
        c1 = lib.sinh(s) / s
        c2 = 2 * half * half / (-z)
        c3 = (lib.sinh(s) - s) / (-z * s)
    return c0, c1, c2, c3


def stumpff(z) -> Tuple:
    """Stumpff functions c0..c3 at z"""
    if abs(z) < SERIES_LIMIT:
        return _stumpff_series(z)
    if abs(z) <= REDUCTION_LIMIT:
        return _stumpff_closed(z)

    c0, c1, c2, c3 = stumpff(z / 4)
    return (2 * c0 * c0 - 1,
            c0 * c1,
            c1 * c1 / 2,
            (c2 + c0 * c3) / 4)


def _solve_universal(r0, sigma0, alpha, sqrt_mu, dt):
    """Root chi of the universal Kepler equation, bracketed Newton"""
    target = sqrt_mu * dt
    beta = 1 - alpha * r0
    tolerance = _tolerance(r0)

    if dt > 0:
        lo, hi = r0 * 0, math.inf
    else:
        lo, hi = -math.inf, r0 * 0
    chi = target / r0

    for _ in range(MAX_ITERATIONS):
        z = alpha * chi * chi
        c0, c1, c2, c3 = stumpff(z)
        chi2 = chi * chi
        value = sigma0 * chi2 * c2 + beta * chi * chi2 * c3 + r0 * chi - target
        radius = sigma0 * chi * c1 + beta * chi2 * c2 + r0

        if value < 0:
            lo = max(lo, chi)
        elif value > 0:
            hi = min(hi, chi)
        else:
            return chi

        new = chi - value / radius
        if not lo < new < hi:
            if lo != -math.inf and hi != math.inf:
                new = (lo + hi) / 2
            else:
                new = 2 * chi

        if abs(new - chi) <= tolerance * abs(new):
            return new
        chi = new

    raise KeplerConvergenceError(
        f"Universal Kepler equation did not converge in {MAX_ITERATIONS} iterations "
        f"(r0={float(r0):.6e}, alpha={float(alpha):.6e}, dt={float(dt):.6e})")


def kepler_increment(r: Sequence, v: Sequence, mu, dt) -> Tuple[list, list]:
    """Position and velocity increments of the two-body flow over dt"""
    r = list(r)
    v = list(v)
    if scalar_lib(r[0]) is math:
        r = [float(x) for x in r]
        v = [float(x) for x in v]
        mu, dt = float(mu), float(dt)
    zero = r[0] * 0

    if dt == 0:
        return [zero] * len(r), [zero] * len(v)

    lib = scalar_lib(r[0])
    r0 = lib.sqrt(sum(x * x for x in r))
    if r0 == 0:
        raise KeplerError("Kepler flow undefined at zero radius")

    sqrt_mu = lib.sqrt(mu)
    v2 = sum(x * x for x in v)
    rv = sum(x * y for x, y in zip(r, v))
    alpha = 2 / r0 - v2 / mu
    sigma0 = rv / sqrt_mu

    chi = _solve_universal(r0, sigma0, alpha, sqrt_mu, dt)
    chi2 = chi * chi
    c0, c1, c2, c3 = stumpff(alpha * chi2)
    radius = sigma0 * chi * c1 + (1 - alpha * r0) * chi2 * c2 + r0

    f_minus_1 = -chi2 * c2 / r0
    g = dt - chi * chi2 * c3 / sqrt_mu
    fdot = -sqrt_mu * chi * c1 / (radius * r0)
    gdot_minus_1 = -chi2 * c2 / radius

    dr = [f_minus_1 * x + g * y for x, y in zip(r, v)]
    dv = [fdot * x + gdot_minus_1 * y for x, y in zip(r, v)]
    return dr, dv


def kepler_step(r: Sequence, v: Sequence, mu, dt) -> Tuple[np.ndarray, np.ndarray]:
    """Propagated (r, v) after dt"""
    dr, dv = kepler_increment(r, v, mu, dt)
    return (np.asarray(r) + np.asarray(dr, dtype=np.asarray(r).dtype),
            np.asarray(v) + np.asarray(dv, dtype=np.asarray(v).dtype))


def two_body_energy(r: Sequence, v: Sequence, mu):
    lib = scalar_lib(r[0])
    return sum(x * x for x in v) / 2 - mu / lib.sqrt(sum(x * x for x in r))


def angular_momentum(r: Sequence, v: Sequence) -> np.ndarray:
    if len(r) == 2:
        return np.array([r[0] * v[1] - r[1] * v[0]])
    return np.cross(np.asarray(r), np.asarray(v))
