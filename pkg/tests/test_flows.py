#!/usr/bin/env python3
"""
SplitFlow Flow Tests
Phase-space states, compensated accumulation, kicks and drifts
"""

import sys
import unittest
from pathlib import Path
from unittest.mock import Mock

import numpy as np

# Add project path to Python path
sys.path.insert(0, str(Path(__file__).parent.parent))

from dynamics.flows import (FlowError, PhaseState, drift_momentum_coupling,  # noqa: E402
                            inner_leapfrog_b, kepler_flow, kick, pairwise_gradient)
from engine.compensated import compensated_sum  # noqa: E402


def mutual_potential(q, masses, G):
    total = 0.0
    for i in range(len(q)):
        for j in range(i + 1, len(q)):
            total -= G * masses[i + 1] * masses[j + 1] / np.linalg.norm(q[i] - q[j])
    return total


class TestPhaseState(unittest.TestCase):
    """Test PhaseState class"""

    def test_shapes_must_match(self):
        """q and p need equal shapes"""
        with self.assertRaises(FlowError):
            PhaseState(q=[1.0, 0.0], p=[0.0, 1.0, 0.0])

    def test_non_finite(self):
        """NaN entries are rejected"""
        with self.assertRaises(FlowError):
            PhaseState(q=[float('nan'), 0.0], p=[0.0, 1.0])

    def test_advance_is_pure(self):
        """advance returns a new state"""
        state = PhaseState(q=[1.0, 0.0], p=[0.0, 1.0])
        moved = state.advance(dq=[0.5, 0.0], dt=0.1)
        self.assertEqual(state.q[0], 1.0)
        self.assertEqual(moved.q[0], 1.5)
        self.assertEqual(moved.t, 0.1)

    def test_vector_round_trip(self):
        """as_vector and from_vector are inverse"""
        state = PhaseState(q=[[1.0, 2.0, 3.0]], p=[[4.0, 5.0, 6.0]])
        again = PhaseState.from_vector(state.as_vector(), state.q.shape)
        np.testing.assert_array_equal(again.q, state.q)
        np.testing.assert_array_equal(again.p, state.p)
        self.assertEqual(state.dim, 3)

    def test_compensated_accumulation(self):
        """Kahan carries keep increments below half an ulp"""
        plain = PhaseState(q=[1.0], p=[0.0])
        kept = plain.with_compensation()
        self.assertTrue(kept.compensated)
        for _ in range(10000):
            plain = plain.advance(dq=[1e-16])
            kept = kept.advance(dq=[1e-16])
        self.assertEqual(plain.q[0], 1.0)
        self.assertAlmostEqual(kept.q[0], 1.0 + 1e-12, delta=1e-15)
        self.assertFalse(kept.without_compensation().compensated)

    def test_compensated_sum(self):
        """compensated_sum recovers what plain summation drops"""
        values = [1.0] + [1e-16] * 10000
        self.assertEqual(sum(values), 1.0)
        self.assertAlmostEqual(compensated_sum(values), 1.0 + 1e-12, delta=1e-15)


class TestElementaryFlows(unittest.TestCase):
    """Test kicks, drifts and the inner leapfrog"""

    def setUp(self):
        self.masses = [1.0, 1e-3, 2e-3, 5e-4]
        self.G = 4.0
        self.state = PhaseState(
            q=np.array([[1.0, 0.0, 0.0], [0.0, 2.0, 0.1], [-3.0, 0.5, 0.0]]),
            p=np.array([[0.0, 1e-3, 0.0], [-2e-3, 0.0, 0.0], [0.0, -5e-4, 1e-5]]))

    def test_kick(self):
        """Kick moves momenta by -tau grad U"""
        state = PhaseState(q=[1.0, 2.0], p=[0.0, 0.0])
        kicked = kick(state, lambda q: 2 * q, 0.5)
        np.testing.assert_allclose(kicked.p, [-1.0, -2.0])
        np.testing.assert_array_equal(kicked.q, state.q)

    def test_zero_step_is_identity(self):
        """Zero-length flows return the input"""
        gradient = Mock()
        self.assertIs(kick(self.state, gradient, 0), self.state)
        gradient.assert_not_called()
        self.assertIs(kepler_flow(self.state, 1.0, 0), self.state)
        self.assertIs(drift_momentum_coupling(self.state, self.masses, 0), self.state)

    def test_kick_errors(self):
        """Bad gradients become FlowError"""
        state = PhaseState(q=[1.0, 2.0], p=[0.0, 0.0])
        with self.assertRaises(FlowError):
            kick(state, lambda q: np.array([1.0]), 0.1)

        def failing(q):
            raise ValueError("math domain error")

        with self.assertRaises(FlowError):
            kick(state, failing, 0.1)

    def test_drift(self):
        """Drift moves r_i by tau/m0 times the other momenta"""
        drifted = drift_momentum_coupling(self.state, self.masses, 2.0)
        total = self.state.p.sum(axis=0)
        expected = self.state.q + 2.0 * (total - self.state.p)
        np.testing.assert_allclose(drifted.q, expected)
        np.testing.assert_array_equal(drifted.p, self.state.p)

    def test_pairwise_gradient(self):
        """Analytic gradient matches central differences"""
        gradient = pairwise_gradient(self.state.q, self.masses, self.G)
        h = 1e-6
        for i in range(3):
            for k in range(3):
                plus = self.state.q.copy()
                minus = self.state.q.copy()
                plus[i, k] += h
                minus[i, k] -= h
                numeric = (mutual_potential(plus, self.masses, self.G)
                           - mutual_potential(minus, self.masses, self.G)) / (2 * h)
                self.assertAlmostEqual(gradient[i, k], numeric, places=9)

    def test_pairwise_gradient_coincident(self):
        """Coincident planets raise FlowError"""
        q = np.array([[1.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
        with self.assertRaises(FlowError):
            pairwise_gradient(q, [1.0, 1e-3, 1e-3], self.G)

    def test_inner_leapfrog(self):
        """Inner leapfrog keeps total momentum and is time reversible"""
        forward = inner_leapfrog_b(self.state, 0.3, self.masses, self.G)
        np.testing.assert_allclose(forward.p.sum(axis=0), self.state.p.sum(axis=0), atol=1e-15)
        back = inner_leapfrog_b(forward, -0.3, self.masses, self.G)
        np.testing.assert_allclose(back.q, self.state.q, atol=1e-14)
        np.testing.assert_allclose(back.p, self.state.p, atol=1e-14)


def symplecticity_defect(flow, state, h=1e-5):
    """max |M^T J M - J| for the finite-difference Jacobian M of flow at state"""
    x = state.as_vector()
    shape = state.q.shape
    n = x.size

    def phi(vector):
        return flow(PhaseState.from_vector(vector, shape)).as_vector()

    M = np.zeros((n, n))
    for k in range(n):
        e = np.zeros(n)
        e[k] = h
        M[:, k] = (-phi(x + 2 * e) + 8 * phi(x + e) - 8 * phi(x - e) + phi(x - 2 * e)) / (12 * h)

    half = n // 2
    J = np.block([[np.zeros((half, half)), np.eye(half)], [-np.eye(half), np.zeros((half, half))]])
    return np.max(np.abs(M.T @ J @ M - J))


class TestSymplecticFlows(unittest.TestCase):
    """Every elementary flow preserves the canonical form"""

    def setUp(self):
        rng = np.random.default_rng(11)
        self.masses = [1.0, 1e-3, 2e-3, 5e-4]
        self.G = 4.0
        self.planar = [PhaseState(q=rng.uniform(0.6, 1.4, 2) * rng.choice([-1, 1], 2),
                                  p=rng.uniform(-0.8, 0.8, 2)) for _ in range(3)]
        base = np.array([[1.0, 0.0, 0.0], [0.0, 2.0, 0.1], [-3.0, 0.5, 0.0]])
        self.bodies = [PhaseState(q=base + rng.uniform(-0.2, 0.2, base.shape),
                                  p=rng.uniform(-2e-3, 2e-3, base.shape)) for _ in range(3)]

    def check(self, flow, states):
        for tau in (1e-2, 1e-1):
            for state in states:
                with self.subTest(tau=tau):
                    self.assertLessEqual(symplecticity_defect(lambda s: flow(s, tau), state), 1e-9)

    def test_kick(self):
        """Kicks by a nonlinear potential"""
        self.check(lambda s, tau: kick(s, lambda q: q * np.dot(q, q), tau), self.planar)

    def test_drift(self):
        """Momentum-coupling drift"""
        self.check(lambda s, tau: drift_momentum_coupling(s, self.masses, tau), self.bodies)

    def test_kepler(self):
        """Exact two-body flow"""
        self.check(lambda s, tau: kepler_flow(s, 1.0, tau), self.planar)

    def test_inner_leapfrog(self):
        """Inner leapfrog on the mutual interaction"""
        self.check(lambda s, tau: inner_leapfrog_b(s, tau, self.masses, self.G), self.bodies)


if __name__ == "__main__":
    unittest.main()
