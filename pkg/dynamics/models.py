#!/usr/bin/env python3
"""
SplitFlow Models
Split Hamiltonian systems: perturbed Kepler problem and heliocentric N-body
"""

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import List, Optional, Sequence

import mpmath
import numpy as np
import structlog

from dynamics.elements import Body, elements_to_state
from dynamics.flows import (FlowError, PhaseState, inner_leapfrog_b, kepler_flow,
                            kick)
from dynamics.kepler import scalar_lib, kepler_increment
from utils.validation import SplitFlowError

logger = structlog.get_logger('SplitFlow.Models')

# AU^3 / (yr^2 M_sun)
GAUSS_G = 4.0 * math.pi ** 2


class ModelError(SplitFlowError):
    """Raised for invalid model parameters"""
    pass


class SplitSystem(ABC):
    """Two-part vector field with exact A-flow and exact or approximate B-flow"""

    name = "system"
    # Perturbation scale; None when it only lives in mass ratios
    epsilon: Optional[float] = None
    approximate_symmetric2 = False

    @property
    @abstractmethod
    def dim(self) -> int:
        """Number of position coordinates"""

    @abstractmethod
    def flow_a(self, state: PhaseState, tau) -> PhaseState:
        ...

    @abstractmethod
    def flow_b(self, state: PhaseState, tau) -> PhaseState:
        ...

    @abstractmethod
    def energy_a(self, state: PhaseState):
        ...

    @abstractmethod
    def energy_b(self, state: PhaseState):
        ...

    def energy(self, state: PhaseState):
        return self.energy_a(state) + self.energy_b(state)

    @abstractmethod
    def initial_state(self) -> PhaseState:
        ...


class PerturbedKepler(SplitSystem):
    """H = |p|^2/2 - 1/r - (eps / 2 r^3)(1 - 3 q1^2 / r^2) in the plane"""

    name = "kepler"

    def __init__(self, epsilon: float = 1e-2, eccentricity: float = 0.25):
        if epsilon < 0:
            raise ModelError(f"epsilon must be non-negative, got {epsilon}")
        if not 0 <= eccentricity < 1:
            raise ModelError(f"eccentricity must lie in [0, 1), got {eccentricity}")
        self.epsilon = epsilon
        self.eccentricity = eccentricity

    @property
    def dim(self) -> int:
        return 2

    def initial_state(self, eccentricity: Optional[float] = None) -> PhaseState:
        """Pericenter of the unperturbed ellipse with a = 1"""
        e = self.eccentricity if eccentricity is None else eccentricity
        return PhaseState(q=np.array([1 - e, 0.0]),
                          p=np.array([0.0, math.sqrt((1 + e) / (1 - e))]))

    def potential_gradient(self, q) -> np.ndarray:
        eps = self.epsilon
        q1, q2 = q[0], q[1]
        r2 = q1 * q1 + q2 * q2
        r = scalar_lib(q1).sqrt(r2)
        r5 = r2 * r2 * r
        r7 = r5 * r2
        q1_sq = q1 * q1
        g1 = eps * (9 * q1 / (2 * r5) - 15 * q1 * q1_sq / (2 * r7))
        g2 = eps * (3 * q2 / (2 * r5) - 15 * q1_sq * q2 / (2 * r7))
        return np.array([g1, g2], dtype=np.asarray(q).dtype)

    def flow_a(self, state: PhaseState, tau) -> PhaseState:
        return kepler_flow(state, 1, tau)

    def flow_b(self, state: PhaseState, tau) -> PhaseState:
        if self.epsilon == 0:
            return state
        return kick(state, self.potential_gradient, tau)

    def energy_a(self, state: PhaseState):
        q, p = state.q, state.p
        r = scalar_lib(q[0]).sqrt(q[0] * q[0] + q[1] * q[1])
        return (p[0] * p[0] + p[1] * p[1]) / 2 - 1 / r

    def energy_b(self, state: PhaseState):
        q = state.q
        r2 = q[0] * q[0] + q[1] * q[1]
        r = scalar_lib(q[0]).sqrt(r2)
        return -self.epsilon / (2 * r2 * r) * (1 - 3 * q[0] * q[0] / r2)


class HelioSystem(SplitSystem):
    """Heliocentric positions with barycentric momenta

    A: independent Kepler problems with mu_i = G (m0 + m_i).
    B: momentum coupling sum_{i<j} p_i.p_j / m0 plus the mutual potential,
    integrated by the inner leapfrog.
    """

    name = "helio"
    approximate_symmetric2 = True

    def __init__(self, masses: Sequence[float], positions, momenta, G: float = GAUSS_G,
                 names: Optional[List[str]] = None):
        masses = tuple(float(m) for m in masses)
        if len(masses) < 2:
            raise ModelError("Need a central mass and at least one planet")
        if any(not m > 0 for m in masses):
            raise ModelError("Masses must be positive")

        self.masses = masses
        self.G = G
        self.names = list(names) if names else [f"body{i}" for i in range(1, len(masses))]
        self._initial = PhaseState(np.asarray(positions, dtype=float),
                                   np.asarray(momenta, dtype=float))
        if self._initial.q.shape != (len(masses) - 1, 3):
            raise ModelError(f"Expected ({len(masses) - 1}, 3) positions, got {self._initial.q.shape}")
        self._check_distinct(self._initial.q)

        m0 = masses[0]
        planets = np.asarray(masses[1:])
        self.reduced_masses = m0 * planets / (m0 + planets)
        self.mus = G * (m0 + planets)

    @staticmethod
    def _check_distinct(q: np.ndarray):
        for i in range(len(q)):
            if not np.any(q[i]):
                raise ModelError(f"Planet {i + 1} sits on the central body")
            for j in range(i + 1, len(q)):
                if np.array_equal(q[i], q[j]):
                    raise ModelError(f"Planets {i + 1} and {j + 1} are coincident")

    @property
    def n_planets(self) -> int:
        return len(self.masses) - 1

    @property
    def dim(self) -> int:
        return 3 * self.n_planets

    def initial_state(self) -> PhaseState:
        return self._initial

    def flow_a(self, state: PhaseState, tau) -> PhaseState:
        if tau == 0:
            return state
        dq = np.zeros_like(state.q)
        dp = np.zeros_like(state.p)
        for i in range(self.n_planets):
            beta = self.reduced_masses[i]
            dr, dv = kepler_increment(state.q[i], state.p[i] / beta, self.mus[i], tau)
            dq[i] = dr
            dp[i] = beta * np.asarray(dv, dtype=float)
        return state.advance(dq=dq, dp=dp)

    def flow_b(self, state: PhaseState, tau) -> PhaseState:
        return inner_leapfrog_b(state, tau, self.masses, self.G)

    def planet_energies(self, state: PhaseState) -> np.ndarray:
        """Two-body energies |v_i|^2/2 - mu_i/|r_i| per planet"""
        v = state.p / self.reduced_masses[:, None]
        return np.sum(v * v, axis=1) / 2 - self.mus / np.linalg.norm(state.q, axis=1)

    def energy_a(self, state: PhaseState) -> float:
        beta = self.reduced_masses
        p2 = np.sum(state.p * state.p, axis=1)
        r = np.linalg.norm(state.q, axis=1)
        m0 = self.masses[0]
        planets = np.asarray(self.masses[1:])
        return float(np.sum(p2 / (2 * beta) - self.G * m0 * planets / r))

    def energy_b(self, state: PhaseState) -> float:
        q, p = state.q, state.p
        m0 = self.masses[0]
        planets = self.masses[1:]
        total = 0.0
        for i in range(self.n_planets - 1):
            coupling = p[i + 1:] @ p[i]
            distances = np.linalg.norm(q[i] - q[i + 1:], axis=1)
            if np.any(distances == 0):
                raise FlowError(f"Coincident planet positions involving body {i + 1}")
            total += float(np.sum(coupling / m0
                                  - self.G * planets[i] * np.asarray(planets[i + 1:]) / distances))
        return total

    def total_momentum(self, state: PhaseState) -> np.ndarray:
        return state.p.sum(axis=0)


def perturbed_kepler(epsilon: float = 1e-2, eccentricity: float = 0.25) -> PerturbedKepler:
    return PerturbedKepler(epsilon=epsilon, eccentricity=eccentricity)


def helio_system(masses: Sequence[float], elements, G: float = GAUSS_G,
                 names: Optional[List[str]] = None) -> HelioSystem:
    """Heliocentric system from planetary elements (masses[0] is the central mass)"""
    masses = tuple(float(m) for m in masses)
    elements = list(elements)
    if len(elements) != len(masses) - 1:
        raise ModelError(f"{len(masses) - 1} planets but {len(elements)} element sets")

    m0 = masses[0]
    positions, momenta = [], []
    for mass, element in zip(masses[1:], elements):
        r, v = elements_to_state(element, G * (m0 + mass))
        positions.append(r)
        momenta.append(v * (m0 * mass / (m0 + mass)))

    return HelioSystem(masses, np.array(positions), np.array(momenta), G=G, names=names)


def helio_from_bodies(bodies: Sequence[Body], G: float = GAUSS_G) -> HelioSystem:
    """Heliocentric system from an element file's bodies"""
    masses = [body.mass for body in bodies]
    return helio_system(masses, [body.elements for body in bodies[1:]], G=G,
                        names=[body.name for body in bodies[1:]])


@dataclass
class EnergyErrorSeries:
    """Relative energy deviation per sample"""
    deviations: np.ndarray
    reference: float

    @property
    def max_deviation(self) -> float:
        return float(np.max(self.deviations)) if self.deviations.size else 0.0


def energy_error_series(energies: Sequence) -> EnergyErrorSeries:
    """|H(t) - H(0)| / |H(0)| for a sequence of energies"""
    values = np.asarray([float(e) for e in energies])
    if values.size < 2:
        raise ModelError("Need at least two samples")
    if values[0] == 0:
        raise ModelError("Relative energy error undefined for H(0) = 0")
    return EnergyErrorSeries(deviations=np.abs(values - values[0]) / abs(values[0]),
                             reference=float(values[0]))


def trajectory_energy_errors(system: SplitSystem, states: Sequence[PhaseState]) -> EnergyErrorSeries:
    return energy_error_series([system.energy(state) for state in states])


def phase_error_series(states: Sequence[PhaseState], reference: Sequence[PhaseState]):
    """Max-norm position and momentum errors against a reference trajectory"""
    if len(states) != len(reference):
        raise ModelError("Trajectories have different sample counts")
    q_err = np.array([float(np.max(np.abs(s.q - r.q))) for s, r in zip(states, reference)])
    p_err = np.array([float(np.max(np.abs(s.p - r.p))) for s, r in zip(states, reference)])
    return q_err, p_err


def mp_state(state: PhaseState, dps: int) -> PhaseState:
    """Copy of a state with mpmath entries (extended-precision references)"""
    with mpmath.workdps(dps):
        q = np.array([mpmath.mpf(float(x)) for x in state.q.ravel()], dtype=object).reshape(state.q.shape)
        p = np.array([mpmath.mpf(float(x)) for x in state.p.ravel()], dtype=object).reshape(state.p.shape)
    return PhaseState(q, p, state.t)
