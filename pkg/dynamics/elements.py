#!/usr/bin/env python3
"""
SplitFlow Orbital Elements
Keplerian elements, Cartesian conversion and element files
"""

import math
from dataclasses import dataclass
from pathlib import Path
from typing import List, Tuple

import numpy as np
import structlog

from utils.validation import SplitFlowError, sanitize_log_message

logger = structlog.get_logger('SplitFlow.Elements')

TWO_PI = 2.0 * math.pi


class ElementsError(SplitFlowError):
    """Raised for invalid elements or element files"""
    pass


@dataclass(frozen=True)
class KeplerianElements:
    """Osculating elements; angles in radians"""
    a: float
    e: float
    i: float = 0.0
    Omega: float = 0.0
    omega: float = 0.0
    M: float = 0.0

    def __post_init__(self):
        if not self.a > 0:
            raise ElementsError(f"Semi-major axis must be positive, got {self.a}")
        if not 0 <= self.e < 1:
            raise ElementsError(f"Only elliptic orbits are supported, got e={self.e}")


@dataclass(frozen=True)
class Body:
    """One line of an element file"""
    name: str
    mass: float
    elements: KeplerianElements


def _eccentric_anomaly(M: float, e: float) -> float:
    M = math.fmod(M, TWO_PI)
    E = M + e * math.sin(M) if e < 0.8 else math.pi
    for _ in range(50):
        delta = (E - e * math.sin(E) - M) / (1 - e * math.cos(E))
        E -= delta
        if abs(delta) <= 1e-15 * max(1.0, abs(E)):
            return E
    raise ElementsError(f"Kepler equation did not converge for M={M}, e={e}")


def _orientation(i: float, Omega: float, omega: float) -> Tuple[np.ndarray, np.ndarray]:
    """Unit vectors towards pericenter (P) and 90 degrees ahead (Q)"""
    cO, sO = math.cos(Omega), math.sin(Omega)
    co, so = math.cos(omega), math.sin(omega)
    ci, si = math.cos(i), math.sin(i)
    P = np.array([cO * co - sO * so * ci, sO * co + cO * so * ci, so * si])
    Q = np.array([-cO * so - sO * co * ci, -sO * so + cO * co * ci, co * si])
    return P, Q


def elements_to_state(elements: KeplerianElements, mu: float) -> Tuple[np.ndarray, np.ndarray]:
    """Cartesian position and velocity"""
    a, e = elements.a, elements.e
    E = _eccentric_anomaly(elements.M, e)
    cE, sE = math.cos(E), math.sin(E)
    root = math.sqrt(1 - e * e)
    radius = a * (1 - e * cE)

    x, y = a * (cE - e), a * root * sE
    speed = math.sqrt(mu * a) / radius
    vx, vy = -speed * sE, speed * root * cE

    P, Q = _orientation(elements.i, elements.Omega, elements.omega)
    return x * P + y * Q, vx * P + vy * Q


def _angle(value: float) -> float:
    return value % TWO_PI


def state_to_elements(r, v, mu: float) -> KeplerianElements:
    """Elements of an elliptic Cartesian state"""
    r = np.asarray(r, dtype=float)
    v = np.asarray(v, dtype=float)
    radius = float(np.linalg.norm(r))
    h = np.cross(r, v)
    h_norm = float(np.linalg.norm(h))
    if radius == 0 or h_norm == 0:
        raise ElementsError("Degenerate state (zero radius or rectilinear orbit)")

    energy = float(v @ v) / 2 - mu / radius
    if energy >= 0:
        raise ElementsError("Parabolic or hyperbolic state")
    a = -mu / (2 * energy)

    e_vec = np.cross(v, h) / mu - r / radius
    e = float(np.linalg.norm(e_vec))

    i = math.acos(max(-1.0, min(1.0, h[2] / h_norm)))
    h_unit = h / h_norm
    node = np.array([-h[1], h[0], 0.0])
    node_norm = float(np.linalg.norm(node))
    if node_norm == 0:
        # Equatorial orbit: node direction taken along x
        node = np.array([1.0, 0.0, 0.0])
    else:
        node = node / node_norm
    Omega = math.atan2(node[1], node[0])

    if e == 0:
        periapsis = node
    else:
        periapsis = e_vec / e
    omega = math.atan2(float(np.cross(node, periapsis) @ h_unit), float(node @ periapsis))
    nu = math.atan2(float(np.cross(periapsis, r) @ h_unit), float(periapsis @ r))

    E = math.atan2(math.sqrt(1 - e * e) * math.sin(nu), e + math.cos(nu))
    M = E - e * math.sin(E)

    return KeplerianElements(a=a, e=e, i=i, Omega=_angle(Omega), omega=_angle(omega), M=_angle(M))


def load_elements_file(path: str) -> List[Body]:
    """Read `name m a e i Omega omega M` lines (angles in degrees)

    The first body is the central mass; its elements are ignored.
    """
    source = Path(path)
    if not source.is_file():
        raise ElementsError(f"Elements file not found: {sanitize_log_message(str(path))}")

    bodies = []
    with open(source, 'r', encoding='utf-8') as f:
        for line_number, line in enumerate(f, start=1):
            line = line.split('#', 1)[0].strip()
            if not line:
                continue
            fields = line.split()
            if len(fields) != 8:
                raise ElementsError(f"{source.name}:{line_number}: expected 8 fields, got {len(fields)}")
            name = fields[0]
            try:
                mass, a, e, inc, node, peri, anomaly = (float(x) for x in fields[1:])
            except ValueError:
                raise ElementsError(f"{source.name}:{line_number}: non-numeric field")
            if not mass > 0:
                raise ElementsError(f"{source.name}:{line_number}: mass must be positive")

            if not bodies:
                # Central body
                elements = KeplerianElements(a=1.0, e=0.0)
            else:
                elements = KeplerianElements(a=a, e=e, i=math.radians(inc), Omega=math.radians(node),
                                             omega=math.radians(peri), M=math.radians(anomaly))
            bodies.append(Body(name=name, mass=mass, elements=elements))

    if len(bodies) < 2:
        raise ElementsError(f"{source.name}: need a central body and at least one planet")

    logger.info("elements loaded", path=str(source), bodies=len(bodies))
    return bodies
