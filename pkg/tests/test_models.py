#!/usr/bin/env python3
"""
SplitFlow Model Tests
Perturbed Kepler problem, heliocentric N-body and element files
"""

import math
import os
import sys
import tempfile
import unittest
from pathlib import Path

import mpmath
import numpy as np
from hypothesis import given, settings, strategies as st

# Add project path to Python path
sys.path.insert(0, str(Path(__file__).parent.parent))

from dynamics.elements import (ElementsError, KeplerianElements, elements_to_state,  # noqa: E402
                               load_elements_file, state_to_elements)
from dynamics.flows import PhaseState  # noqa: E402
from dynamics.models import (GAUSS_G, HelioSystem, ModelError, energy_error_series,  # noqa: E402
                             helio_from_bodies, helio_system, mp_state, perturbed_kepler,
                             phase_error_series, trajectory_energy_errors)

DATA_DIR = Path(__file__).parent.parent / "data"


class TestPerturbedKepler(unittest.TestCase):
    """Test PerturbedKepler class"""

    def setUp(self):
        self.system = perturbed_kepler(epsilon=1e-2, eccentricity=0.25)
        self.state = self.system.initial_state()

    def test_initial_state(self):
        """Pericenter of the a = 1 ellipse"""
        np.testing.assert_allclose(self.state.q, [0.75, 0.0])
        self.assertAlmostEqual(self.state.p[1], math.sqrt(1.25 / 0.75))
        self.assertEqual(self.system.dim, 2)

    def test_energies(self):
        """H_A = -1/2 at a = 1 and H_B = eps / r^3 on the axis"""
        self.assertAlmostEqual(self.system.energy_a(self.state), -0.5, places=14)
        self.assertAlmostEqual(self.system.energy_b(self.state), 1e-2 / 0.75 ** 3, places=14)
        self.assertAlmostEqual(self.system.energy(self.state), -0.5 + 1e-2 / 0.75 ** 3, places=14)

    def test_gradient_matches_potential(self):
        """potential_gradient is the gradient of H_B"""
        q = np.array([0.6, -0.7])
        gradient = self.system.potential_gradient(q)
        h = 1e-6
        for k in range(2):
            plus, minus = q.copy(), q.copy()
            plus[k] += h
            minus[k] -= h
            numeric = (self.system.energy_b(PhaseState(plus, np.zeros(2)))
                       - self.system.energy_b(PhaseState(minus, np.zeros(2)))) / (2 * h)
            self.assertAlmostEqual(gradient[k], numeric, places=8)

    def test_unperturbed_b_flow(self):
        """epsilon = 0 leaves the B-flow trivial"""
        system = perturbed_kepler(epsilon=0.0)
        state = system.initial_state()
        self.assertIs(system.flow_b(state, 0.3), state)

    def test_a_flow_keeps_h_a(self):
        """The Kepler flow conserves the Kepler energy"""
        moved = self.system.flow_a(self.state, 1.7)
        self.assertAlmostEqual(self.system.energy_a(moved), -0.5, places=13)

    def test_invalid_parameters(self):
        """Negative epsilon and unbound eccentricities are rejected"""
        with self.assertRaises(ModelError):
            perturbed_kepler(epsilon=-1.0)
        with self.assertRaises(ModelError):
            perturbed_kepler(eccentricity=1.0)

    def test_extended_precision_state(self):
        """mp_state converts entries to mpmath values"""
        state = mp_state(self.state, 40)
        self.assertEqual(state.q.dtype, object)
        self.assertIsInstance(state.q[0], mpmath.mpf)
        with mpmath.workdps(40):
            self.assertAlmostEqual(float(self.system.energy(state)),
                                   float(self.system.energy(self.state)), places=14)


class TestElements(unittest.TestCase):
    """Test orbital elements"""

    def test_round_trip(self):
        """Elements survive conversion to Cartesian and back"""
        elements = KeplerianElements(a=1.5, e=0.1, i=0.3, Omega=1.0, omega=2.0, M=0.5)
        r, v = elements_to_state(elements, GAUSS_G)
        again = state_to_elements(r, v, GAUSS_G)
        for name in ("a", "e", "i", "Omega", "omega", "M"):
            self.assertAlmostEqual(getattr(again, name), getattr(elements, name), places=9, msg=name)

    @settings(max_examples=60, deadline=None)
    @given(a=st.floats(min_value=0.3, max_value=40.0), e=st.floats(min_value=0.01, max_value=0.9),
           i=st.floats(min_value=0.05, max_value=3.0), Omega=st.floats(min_value=0.0, max_value=6.2),
           omega=st.floats(min_value=0.0, max_value=6.2), M=st.floats(min_value=0.0, max_value=6.2))
    def test_round_trip_property(self, a, e, i, Omega, omega, M):
        """Cartesian conversion preserves the state for any bound orbit"""
        r, v = elements_to_state(KeplerianElements(a=a, e=e, i=i, Omega=Omega, omega=omega, M=M), 1.0)
        again = state_to_elements(r, v, 1.0)
        r2, v2 = elements_to_state(again, 1.0)
        np.testing.assert_allclose(r2, r, rtol=1e-8, atol=1e-10 * a)
        np.testing.assert_allclose(v2, v, rtol=1e-8, atol=1e-10)
        self.assertAlmostEqual(again.a / a, 1.0, places=9)
        self.assertAlmostEqual(again.e, e, places=9)

    def test_pericenter_radius(self):
        """M = 0 puts the body at a (1 - e)"""
        r, _ = elements_to_state(KeplerianElements(a=2.0, e=0.5), 1.0)
        self.assertAlmostEqual(float(np.linalg.norm(r)), 1.0)

    def test_invalid_elements(self):
        """Hyperbolic or negative-axis elements are rejected"""
        with self.assertRaises(ElementsError):
            KeplerianElements(a=1.0, e=1.2)
        with self.assertRaises(ElementsError):
            KeplerianElements(a=-1.0, e=0.1)
        with self.assertRaises(ElementsError):
            state_to_elements([1.0, 0.0, 0.0], [0.0, 3.0, 0.0], 1.0)

    def test_bundled_files(self):
        """Every bundled element file loads with the Sun first"""
        for name, planets in (("inner_planets.txt", 4), ("outer_planets.txt", 4),
                              ("solar_system.txt", 8)):
            with self.subTest(file=name):
                bodies = load_elements_file(str(DATA_DIR / name))
                self.assertEqual(bodies[0].name, "Sun")
                self.assertEqual(len(bodies) - 1, planets)
                system = helio_from_bodies(bodies)
                self.assertEqual(system.n_planets, planets)
                self.assertEqual(system.dim, 3 * planets)

    def test_malformed_file(self):
        """Wrong field counts and missing files raise ElementsError"""
        with tempfile.TemporaryDirectory() as temp_dir:
            path = os.path.join(temp_dir, "bad.txt")
            with open(path, 'w') as f:
                f.write("Sun 1.0 0 0 0 0 0 0\nEarth 3e-6 1.0 0.0 0.0 0.0\n")
            with self.assertRaises(ElementsError):
                load_elements_file(path)
        with self.assertRaises(ElementsError):
            load_elements_file("/nonexistent/elements.txt")


class TestHelioSystem(unittest.TestCase):
    """Test HelioSystem class"""

    def setUp(self):
        self.system = helio_from_bodies(load_elements_file(str(DATA_DIR / "outer_planets.txt")))
        self.state = self.system.initial_state()

    def test_approximate_b_flow(self):
        """Heliocentric B-flow is the inner leapfrog approximation"""
        self.assertTrue(self.system.approximate_symmetric2)

    def test_b_flow_keeps_total_momentum(self):
        """Inner leapfrog preserves sum p"""
        moved = self.system.flow_b(self.state, 0.5)
        np.testing.assert_allclose(self.system.total_momentum(moved),
                                   self.system.total_momentum(self.state), atol=1e-15)

    def test_a_flow_keeps_planet_energies(self):
        """The Kepler part conserves every planet's two-body energy"""
        moved = self.system.flow_a(self.state, 3.0)
        np.testing.assert_allclose(self.system.planet_energies(moved),
                                   self.system.planet_energies(self.state), rtol=1e-12)

    def test_energy_split(self):
        """Interaction energy is small against the Kepler energy"""
        self.assertLess(abs(self.system.energy_b(self.state)), 1e-2 * abs(self.system.energy_a(self.state)))

    def test_invalid_systems(self):
        """Bad masses and positions raise ModelError"""
        with self.assertRaises(ModelError):
            HelioSystem([1.0], np.zeros((0, 3)), np.zeros((0, 3)))
        with self.assertRaises(ModelError):
            HelioSystem([1.0, -1e-3], [[1.0, 0.0, 0.0]], [[0.0, 1.0, 0.0]])
        with self.assertRaises(ModelError):
            HelioSystem([1.0, 1e-3], [[0.0, 0.0, 0.0]], [[0.0, 1.0, 0.0]])
        with self.assertRaises(ModelError):
            HelioSystem([1.0, 1e-3, 1e-3], [[1.0, 0.0, 0.0], [1.0, 0.0, 0.0]],
                        [[0.0, 1.0, 0.0], [0.0, 1.0, 0.0]])
        with self.assertRaises(ModelError):
            helio_system([1.0, 1e-3], [])


def kepler_total_energy(q, p, epsilon):
    r = math.hypot(q[0], q[1])
    return (p[0] ** 2 + p[1] ** 2) / 2 - 1 / r - epsilon / (2 * r ** 3) * (1 - 3 * q[0] ** 2 / r ** 2)


def helio_total_energy(system, q, p):
    """Heliocentric Hamiltonian written out term by term"""
    m0, planets, G = system.masses[0], system.masses[1:], system.G
    total = float(np.sum(p.sum(axis=0) ** 2)) / (2 * m0)
    for i, mi in enumerate(planets):
        total += float(np.dot(p[i], p[i])) / (2 * mi) - G * m0 * mi / float(np.linalg.norm(q[i]))
        for j in range(i + 1, len(planets)):
            total -= G * mi * planets[j] / float(np.linalg.norm(q[i] - q[j]))
    return total


class TestEnergySplit(unittest.TestCase):
    """H_A + H_B is the full Hamiltonian at random states"""

    SAMPLES = 10000

    def setUp(self):
        self.rng = np.random.default_rng(2024)

    def test_perturbed_kepler(self):
        """Split energies add up to the perturbed Kepler Hamiltonian"""
        system = perturbed_kepler(epsilon=1e-2)
        radii = self.rng.uniform(0.3, 3.0, self.SAMPLES)
        angles = self.rng.uniform(0.0, 2 * math.pi, self.SAMPLES)
        momenta = self.rng.uniform(-1.5, 1.5, (self.SAMPLES, 2))
        for r, angle, p in zip(radii, angles, momenta):
            state = PhaseState([r * math.cos(angle), r * math.sin(angle)], p)
            total = system.energy(state)
            self.assertEqual(system.energy_a(state) + system.energy_b(state), total)
            reference = kepler_total_energy(state.q, state.p, 1e-2)
            self.assertLessEqual(abs(total - reference), 1e-14 * max(1.0, abs(reference)))

    def test_helio(self):
        """Split energies add up to the heliocentric Hamiltonian"""
        system = helio_from_bodies(load_elements_file(str(DATA_DIR / "outer_planets.txt")))
        start = system.initial_state()
        scale_p = np.abs(start.p).max()
        for _ in range(self.SAMPLES):
            q = start.q * self.rng.uniform(0.8, 1.2, start.q.shape)
            p = start.p + scale_p * self.rng.uniform(-0.1, 0.1, start.p.shape)
            state = PhaseState(q, p)
            total = system.energy(state)
            self.assertEqual(system.energy_a(state) + system.energy_b(state), total)
            reference = helio_total_energy(system, q, p)
            self.assertLessEqual(abs(total - reference), 1e-12 * abs(reference))


class TestErrorSeries(unittest.TestCase):
    """Test energy and phase error series"""

    def test_energy_error_series(self):
        """Relative deviations from the first sample"""
        series = energy_error_series([-1.0, -1.5, -0.5])
        np.testing.assert_allclose(series.deviations, [0.0, 0.5, 0.5])
        self.assertEqual(series.max_deviation, 0.5)
        self.assertEqual(series.reference, -1.0)

    def test_energy_error_series_errors(self):
        """One sample or H(0) = 0 is rejected"""
        with self.assertRaises(ModelError):
            energy_error_series([1.0])
        with self.assertRaises(ModelError):
            energy_error_series([0.0, 1.0])

    def test_trajectory_energy_errors(self):
        """Exact flows of the unperturbed problem keep the energy"""
        system = perturbed_kepler(epsilon=0.0)
        states = [system.initial_state()]
        for _ in range(5):
            states.append(system.flow_a(states[-1], 0.9))
        self.assertLess(trajectory_energy_errors(system, states).max_deviation, 1e-13)

    def test_phase_error_series(self):
        """Max-norm errors per sample"""
        states = [PhaseState([1.0, 0.0], [0.0, 1.0]), PhaseState([1.0, 0.5], [0.0, 1.25])]
        reference = [PhaseState([1.0, 0.0], [0.0, 1.0]), PhaseState([1.0, 0.25], [0.0, 1.0])]
        q_err, p_err = phase_error_series(states, reference)
        np.testing.assert_allclose(q_err, [0.0, 0.25])
        np.testing.assert_allclose(p_err, [0.0, 0.25])
        with self.assertRaises(ModelError):
            phase_error_series(states, reference[:1])


if __name__ == "__main__":
    unittest.main()
