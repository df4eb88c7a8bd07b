#!/usr/bin/env python3
"""
SplitFlow Kepler Tests
Universal-variable propagation and Stumpff functions
"""

import math
import sys
import unittest
from pathlib import Path

import mpmath
import numpy as np
from hypothesis import given, settings, strategies as st
from scipy.integrate import solve_ivp

# Add project path to Python path
sys.path.insert(0, str(Path(__file__).parent.parent))

from dynamics.kepler import (KeplerError, KeplerOrbitParams, angular_momentum,  # noqa: E402
                             kepler_increment, kepler_step, stumpff, two_body_energy)
from dynamics.kepler import _stumpff_closed  # noqa: E402


def pericenter(e):
    return np.array([1 - e, 0.0]), np.array([0.0, math.sqrt((1 + e) / (1 - e))])


class TestStumpff(unittest.TestCase):
    """Test Stumpff functions"""

    def test_zero(self):
        """c_k(0) = 1/k!"""
        c0, c1, c2, c3 = stumpff(0.0)
        self.assertEqual((c0, c1), (1.0, 1.0))
        self.assertAlmostEqual(c2, 0.5)
        self.assertAlmostEqual(c3, 1 / 6)

    def test_continuity_at_series_limit(self):
        """Series and closed forms agree where they meet"""
        for z in (0.1, -0.1):
            below = stumpff(z * (1 - 1e-12))
            above = stumpff(z * (1 + 1e-12))
            for lo, hi in zip(below, above):
                self.assertAlmostEqual(lo, hi, places=10)

    def test_reduction(self):
        """Quartering reduction matches the closed form"""
        for z in (10.0, 60.0, -10.0, -60.0):
            reduced = stumpff(z)
            closed = _stumpff_closed(z)
            for value, exact in zip(reduced, closed):
                self.assertTrue(math.isclose(value, exact, rel_tol=1e-10, abs_tol=1e-12),
                                f"z={z}: {value} vs {exact}")

    @given(st.floats(min_value=-50, max_value=50))
    def test_identities(self, z):
        """c0 + z c2 = 1 and c1 + z c3 = 1"""
        c0, c1, c2, c3 = stumpff(z)
        scale = max(1.0, abs(c0))
        self.assertLess(abs(c0 + z * c2 - 1), 1e-12 * scale)
        self.assertLess(abs(c1 + z * c3 - 1), 1e-12 * scale)


class TestKeplerFlow(unittest.TestCase):
    """Test the two-body flow"""

    def test_circular_period(self):
        """A circular orbit closes after 2 pi"""
        r, v = kepler_step([1.0, 0.0], [0.0, 1.0], 1.0, 2 * math.pi)
        np.testing.assert_allclose(r, [1.0, 0.0], atol=1e-12)
        np.testing.assert_allclose(v, [0.0, 1.0], atol=1e-12)

    def test_zero_step(self):
        """dt = 0 gives zero increments"""
        dr, dv = kepler_increment([1.0, 0.0], [0.0, 1.0], 1.0, 0.0)
        self.assertEqual(dr, [0.0, 0.0])
        self.assertEqual(dv, [0.0, 0.0])

    @settings(max_examples=40, deadline=None)
    @given(st.floats(min_value=-3, max_value=3), st.floats(min_value=-3, max_value=3),
           st.floats(min_value=0, max_value=0.8))
    def test_group_property(self, dt1, dt2, e):
        """Two steps equal one step of the summed time"""
        r, v = pericenter(e)
        r1, v1 = kepler_step(r, v, 1.0, dt1)
        r2, v2 = kepler_step(r1, v1, 1.0, dt2)
        r3, v3 = kepler_step(r, v, 1.0, dt1 + dt2)
        np.testing.assert_allclose(r2, r3, atol=1e-9)
        np.testing.assert_allclose(v2, v3, atol=1e-9)

    def test_backward_step(self):
        """Negative steps invert positive ones"""
        r, v = pericenter(0.5)
        r1, v1 = kepler_step(r, v, 1.0, 2.3)
        r0, v0 = kepler_step(r1, v1, 1.0, -2.3)
        np.testing.assert_allclose(r0, r, atol=1e-12)
        np.testing.assert_allclose(v0, v, atol=1e-12)

    def test_eccentric_orbit_against_ode(self):
        """e = 0.9 agrees with a tight DOP853 integration"""
        r, v = pericenter(0.9)

        def rhs(_, y):
            radius = math.hypot(y[0], y[1])
            return [y[2], y[3], -y[0] / radius ** 3, -y[1] / radius ** 3]

        solution = solve_ivp(rhs, (0.0, 2.0), list(r) + list(v), method='DOP853',
                             rtol=1e-13, atol=1e-14)
        r1, v1 = kepler_step(r, v, 1.0, 2.0)
        np.testing.assert_allclose(r1, solution.y[:2, -1], rtol=1e-9, atol=1e-10)
        np.testing.assert_allclose(v1, solution.y[2:, -1], rtol=1e-9, atol=1e-10)

    def test_eccentric_orbit_closes(self):
        """e = 0.9 returns to pericenter after one period to 1e-10 relative"""
        for e in (0.5, 0.9):
            with self.subTest(e=e):
                r, v = pericenter(e)
                r1, v1 = kepler_step(r, v, 1.0, 2 * math.pi)
                self.assertLess(np.max(np.abs(r1 - r)) / np.linalg.norm(r), 1e-10)
                self.assertLess(np.max(np.abs(v1 - v)) / np.linalg.norm(v), 1e-10)

    def test_invariants(self):
        """Energy and angular momentum are conserved in 3D"""
        r = np.array([0.8, 0.1, 0.3])
        v = np.array([-0.2, 1.1, 0.25])
        r1, v1 = kepler_step(r, v, 2.0, 7.5)
        self.assertAlmostEqual(two_body_energy(r1, v1, 2.0), two_body_energy(r, v, 2.0), places=11)
        np.testing.assert_allclose(angular_momentum(r1, v1), angular_momentum(r, v), atol=1e-11)

    def test_hyperbolic_orbit(self):
        """Unbound orbits conserve energy too"""
        r, v = np.array([1.0, 0.0]), np.array([0.0, 2.0])
        r1, v1 = kepler_step(r, v, 1.0, 3.0)
        self.assertAlmostEqual(two_body_energy(r1, v1, 1.0), 1.0, places=10)

    def test_extended_precision(self):
        """mpmath states close a circular orbit to 30 digits"""
        with mpmath.workdps(40):
            r = [mpmath.mpf(1), mpmath.mpf(0)]
            v = [mpmath.mpf(0), mpmath.mpf(1)]
            r1, v1 = kepler_step(r, v, 1, 2 * mpmath.pi)
            self.assertIsInstance(r1[0], mpmath.mpf)
            self.assertLess(abs(r1[0] - 1), mpmath.mpf("1e-30"))
            self.assertLess(abs(r1[1]), mpmath.mpf("1e-30"))
            self.assertLess(abs(v1[1] - 1), mpmath.mpf("1e-30"))

    def test_zero_radius(self):
        """The flow is undefined at the origin"""
        with self.assertRaises(KeplerError):
            kepler_increment([0.0, 0.0], [0.0, 1.0], 1.0, 1.0)

    def test_orbit_params(self):
        """Non-positive mu and odd dimensions are rejected"""
        self.assertEqual(KeplerOrbitParams(mu=1.0).dim, 3)
        with self.assertRaises(KeplerError):
            KeplerOrbitParams(mu=0.0)
        with self.assertRaises(KeplerError):
            KeplerOrbitParams(mu=1.0, dim=4)


if __name__ == "__main__":
    unittest.main()
