#!/usr/bin/env python3
"""
SplitFlow Elementary Flows
Phase-space states, Kepler flows, position-only kicks and momentum-only drifts
"""

from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

import numpy as np
import structlog

from dynamics.kepler import kepler_increment
from engine.compensated import compensated_add, zero_carry
from utils.validation import SplitFlowError

logger = structlog.get_logger('SplitFlow.Flows')


class FlowError(SplitFlowError):
    """Raised when an elementary flow cannot be evaluated"""
    pass


def _as_array(values) -> np.ndarray:
    array = np.asarray(values)
    if array.dtype == object:
        return array.copy()
    return np.array(array, dtype=float)


def _all_finite(array: np.ndarray) -> bool:
    if array.dtype == object:
        return all(np.isfinite(float(x)) for x in array.ravel())
    return bool(np.all(np.isfinite(array)))


@dataclass(frozen=True, eq=False)
class PhaseState:
    """Positions q and conjugate momenta p at time t

    When q_carry / p_carry are present every update is accumulated with
    compensated summation.
    """
    q: np.ndarray
    p: np.ndarray
    t: float = 0.0
    q_carry: Optional[np.ndarray] = None
    p_carry: Optional[np.ndarray] = None
    t_carry: float = 0.0

    def __post_init__(self):
        q = _as_array(self.q)
        p = _as_array(self.p)
        if q.shape != p.shape:
            raise FlowError(f"Position shape {q.shape} differs from momentum shape {p.shape}")
        if not (_all_finite(q) and _all_finite(p)):
            raise FlowError("Non-finite phase-space state")
        object.__setattr__(self, 'q', q)
        object.__setattr__(self, 'p', p)

    @property
    def compensated(self) -> bool:
        return self.q_carry is not None

    @property
    def dim(self) -> int:
        return self.q.size

    def with_compensation(self) -> 'PhaseState':
        if self.compensated:
            return self
        return replace(self, q_carry=zero_carry(self.q), p_carry=zero_carry(self.p), t_carry=0.0)

    def without_compensation(self) -> 'PhaseState':
        return PhaseState(self.q, self.p, self.t)

    def advance(self, dq=None, dp=None, dt=None) -> 'PhaseState':
        """State shifted by the given increments"""
        q, p, t = self.q, self.p, self.t
        q_carry, p_carry, t_carry = self.q_carry, self.p_carry, self.t_carry

        if self.compensated:
            if dq is not None:
                q, q_carry = compensated_add(q, q_carry, np.asarray(dq))
            if dp is not None:
                p, p_carry = compensated_add(p, p_carry, np.asarray(dp))
            if dt is not None:
                t, t_carry = compensated_add(t, t_carry, dt)
        else:
            if dq is not None:
                q = q + np.asarray(dq)
            if dp is not None:
                p = p + np.asarray(dp)
            if dt is not None:
                t = t + dt

        return PhaseState(q, p, t, q_carry, p_carry, t_carry)

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.q.ravel(), self.p.ravel()])

    @classmethod
    def from_vector(cls, vector: Sequence, shape, t: float = 0.0) -> 'PhaseState':
        vector = np.asarray(vector)
        half = vector.size // 2
        return cls(vector[:half].reshape(shape), vector[half:].reshape(shape), t)


def kepler_flow(state: PhaseState, mu, tau) -> PhaseState:
    """Exact two-body flow of a single body with unit mass"""
    if tau == 0:
        return state
    dq, dp = kepler_increment(state.q, state.p, mu, tau)
    return state.advance(dq=np.asarray(dq, dtype=state.q.dtype),
                         dp=np.asarray(dp, dtype=state.p.dtype))


def kick(state: PhaseState, grad_potential: Callable, tau) -> PhaseState:
    """p <- p - tau grad U(q)"""
    if tau == 0:
        return state
    try:
        gradient = np.asarray(grad_potential(state.q))
    except (ArithmeticError, ValueError) as e:
        raise FlowError(f"Potential gradient evaluation failed: {e}") from e

    if gradient.shape != state.p.shape or not _all_finite(gradient):
        raise FlowError("Potential gradient is not finite or has the wrong shape")
    return state.advance(dp=-tau * gradient)


def drift_momentum_coupling(state: PhaseState, masses: Sequence, tau) -> PhaseState:
    """r_i <- r_i + (tau/m0) sum_{j != i} p_j for heliocentric (n, 3) states"""
    if tau == 0:
        return state
    m0 = masses[0]
    total = state.p.sum(axis=0)
    return state.advance(dq=(tau / m0) * (total - state.p))


def pairwise_gradient(q: np.ndarray, masses: Sequence, G) -> np.ndarray:
    """Gradient of -sum_{i<j} G m_i m_j / |r_i - r_j| with respect to r_i"""
    planet_masses = np.asarray(masses[1:], dtype=q.dtype if q.dtype == object else float)
    n = q.shape[0]
    gradient = np.zeros_like(q)
    for i in range(n - 1):
        diff = q[i] - q[i + 1:]
        dist2 = np.sum(diff * diff, axis=1)
        if np.any(dist2 == 0):
            raise FlowError(f"Coincident planet positions involving body {i + 1}")
        dist3 = dist2 * np.sqrt(dist2) if q.dtype != object else np.array(
            [d * d ** 0.5 for d in dist2], dtype=object)
        weights = (G * planet_masses[i] * planet_masses[i + 1:] / dist3)[:, None]
        force = weights * diff
        gradient[i] += force.sum(axis=0)
        gradient[i + 1:] -= force
    return gradient


def inner_leapfrog_b(state: PhaseState, tau_b, masses: Sequence, G) -> PhaseState:
    """Symmetric second order approximation of the heliocentric B-flow"""
    if tau_b == 0:
        return state
    half = tau_b / 2
    state = drift_momentum_coupling(state, masses, half)
    state = kick(state, lambda q: pairwise_gradient(q, masses, G), tau_b)
    return drift_momentum_coupling(state, masses, half)
