#!/usr/bin/env python3
"""
SplitFlow Homotopy Continuation
Tracks H(x, t) = [f1(x); t f2(x) + (1 - t) gamma M (x - x0)] from t = 0 to 1
"""

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple

import mpmath
import numpy as np
import structlog
import yaml

from methods.coefficients import DEFAULT_DPS, MethodKind
from solver.newton import (GUARD_DIGITS, SolutionCandidate, default_zeroed, newton_polish,
                           solve_x0)
from solver.polysystem import PolySystem, SolverError

logger = structlog.get_logger('SplitFlow.Homotopy')

# Arcs around +1 and -1 excluded from gamma
GAMMA_EXCLUSION = 0.1


class PathFailure(SolverError):
    """A path could not be followed to t = 1"""

    def __init__(self, message: str, path: Optional['HomotopyPath'] = None):
        super().__init__(message)
        self.path = path


@dataclass(frozen=True)
class TrackingOptions:
    """Step control of the predictor-corrector"""
    initial_step: float = 1e-2
    min_step: float = 1e-8
    max_step: float = 0.1
    corrector_iterations: int = 5
    corrector_tolerance: float = 1e-12
    blowup_factor: float = 10.0
    real_tolerance: float = 1e-20
    max_steps: int = 20000
    dps: int = DEFAULT_DPS


@dataclass
class HomotopyPath:
    """State and history of one tracked path"""
    gamma: complex
    M: np.ndarray = field(repr=False)
    seed: Optional[int] = None
    t: float = 0.0
    point: Optional[np.ndarray] = field(default=None, repr=False)
    step: float = 1e-2
    log: List[dict] = field(default_factory=list, repr=False)
    rejected: int = 0
    status: str = "pending"

    def as_log(self) -> dict:
        return {
            "seed": self.seed,
            "gamma": [float(self.gamma.real), float(self.gamma.imag)],
            "status": self.status,
            "final_t": float(self.t),
            "accepted_steps": len(self.log),
            "rejected_steps": self.rejected,
            "steps": self.log,
        }


@dataclass
class NonRealOutcome:
    """Path reached t = 1 at a complex solution"""
    endpoint: SolutionCandidate
    imaginary_norm: float
    path: HomotopyPath


def sample_gamma(rng: np.random.Generator) -> complex:
    """Unit complex number at least GAMMA_EXCLUSION radians away from the real axis"""
    width = math.pi - 2 * GAMMA_EXCLUSION
    u = rng.uniform(0.0, 2 * width)
    theta = GAMMA_EXCLUSION + u if u < width else math.pi + GAMMA_EXCLUSION + (u - width)
    return complex(math.cos(theta), math.sin(theta))


def random_projection(rng: np.random.Generator, rows: int, n: int) -> np.ndarray:
    """rows x n matrix with orthonormal rows from a Gaussian draw"""
    if rows > n:
        raise SolverError(f"Cannot draw {rows} orthonormal rows in dimension {n}")
    q, _ = np.linalg.qr(rng.standard_normal((n, rows)))
    return q.T


def homotopy_parameters(seed: int, system: PolySystem) -> Tuple[complex, np.ndarray]:
    rng = np.random.default_rng(seed)
    gamma = sample_gamma(rng)
    return gamma, random_projection(rng, len(system.f2_rows), system.n_unknowns)


class _Deformation:
    """H, dH/dx and dH/dt in complex double precision"""

    def __init__(self, system: PolySystem, x0: np.ndarray, gamma: complex, M: np.ndarray):
        self.system = system
        self.x0 = x0
        self.gamma = gamma
        self.M = M
        self.f1 = system.f1_rows
        self.f2 = system.f2_rows

    def evaluate(self, x: np.ndarray, t: float):
        F, J = self.system.evaluate([complex(v) for v in x])
        F = np.array(F, dtype=complex)
        J = np.array(J, dtype=complex)
        projected = self.gamma * (self.M @ (x - self.x0))

        H = np.concatenate([F[self.f1], t * F[self.f2] + (1 - t) * projected])
        Hx = np.vstack([J[self.f1], t * J[self.f2] + (1 - t) * self.gamma * self.M])
        Ht = np.concatenate([np.zeros(len(self.f1), dtype=complex), F[self.f2] - projected])
        return H, Hx, Ht


def _correct(deformation: _Deformation, x: np.ndarray, t: float, options: TrackingOptions):
    """Newton at fixed t; (converged, x, iterations, residual)"""
    previous = math.inf
    for iteration in range(options.corrector_iterations + 1):
        H, Hx, _ = deformation.evaluate(x, t)
        residual = float(np.max(np.abs(H)))
        if residual <= options.corrector_tolerance:
            return True, x, iteration, residual
        if not math.isfinite(residual) or residual > options.blowup_factor * previous:
            return False, x, iteration, residual
        if iteration == options.corrector_iterations:
            break
        previous = residual
        try:
            x = x + np.linalg.solve(Hx, -H)
        except np.linalg.LinAlgError:
            return False, x, iteration, residual
    return False, x, options.corrector_iterations, residual


def track_homotopy(system: PolySystem, x0: Sequence, gamma: complex, M: np.ndarray,
                   seed: Optional[int] = None, options: Optional[TrackingOptions] = None):
    """Follow the path from x0 at t = 0 to t = 1

    Returns a real SolutionCandidate when the polished endpoint has
    |Im| <= options.real_tolerance, otherwise a NonRealOutcome.
    """
    options = options or TrackingOptions()
    start = np.array([complex(float(mpmath.re(v))) for v in x0])
    deformation = _Deformation(system, start, gamma, np.asarray(M, dtype=float))
    path = HomotopyPath(gamma=gamma, M=deformation.M, seed=seed, point=start.copy(),
                        step=options.initial_step)

    t, x, dt = 0.0, start, options.initial_step
    while t < 1.0:
        if len(path.log) + path.rejected >= options.max_steps:
            path.status = "failed"
            raise PathFailure(f"Step budget exhausted at t={t:.6f}", path)
        dt = min(dt, 1.0 - t)

        _, Hx, Ht = deformation.evaluate(x, t)
        try:
            tangent = np.linalg.solve(Hx, -Ht)
            converged, corrected, iterations, residual = _correct(
                deformation, x + dt * tangent, t + dt, options)
        except np.linalg.LinAlgError:
            converged, iterations, residual = False, 0, math.inf

        if not converged:
            path.rejected += 1
            dt /= 2
            if dt < options.min_step:
                path.status = "failed"
                path.t, path.point, path.step = t, x, dt
                raise PathFailure(f"Step size fell below {options.min_step:.1e} at t={t:.6f}", path)
            continue

        t = 1.0 if t + dt >= 1.0 else t + dt
        x = corrected
        path.log.append({"t": float(t), "dt": float(dt), "iterations": int(iterations),
                         "residual": float(residual)})
        if iterations <= 2:
            dt = min(2 * dt, options.max_step)

    path.t, path.point, path.step = t, x, dt
    try:
        endpoint = newton_polish(system, list(x), options.dps)
    except SolverError as e:
        path.status = "failed"
        raise PathFailure(f"Endpoint polish failed: {e}", path)

    imaginary = max(float(abs(mpmath.im(v))) for v in endpoint.x)
    if imaginary > options.real_tolerance:
        path.status = "non-real"
        logger.debug("path ended off the real axis", seed=seed, imaginary=imaginary)
        return NonRealOutcome(endpoint=endpoint, imaginary_norm=imaginary, path=path)

    try:
        candidate = newton_polish(system, [mpmath.re(v) for v in endpoint.x], options.dps)
    except SolverError as e:
        path.status = "failed"
        raise PathFailure(f"Real polish failed: {e}", path)
    path.status = "real"
    candidate.path_log = path.as_log()
    logger.debug("path reached a real solution", seed=seed, steps=len(path.log))
    return candidate


@dataclass
class SeedOutcome:
    """Result of one seed, in plain data so it crosses process boundaries"""
    seed: int
    status: str
    x: Optional[List[str]] = None
    imaginary_norm: float = 0.0
    error: str = ""
    log: dict = field(default_factory=dict, repr=False)


def _track_seed(payload) -> SeedOutcome:
    order, stages, kind, cubic, fixed, x0_strings, seed, options = payload
    system = PolySystem(order, stages, MethodKind(kind), cubic, fixed)
    with mpmath.workdps(options.dps + GUARD_DIGITS):
        x0 = [mpmath.mpf(v) for v in x0_strings]
    gamma, M = homotopy_parameters(seed, system)

    try:
        result = track_homotopy(system, x0, gamma, M, seed=seed, options=options)
    except PathFailure as e:
        return SeedOutcome(seed, "failed", error=str(e), log=e.path.as_log() if e.path else {})

    if isinstance(result, NonRealOutcome):
        return SeedOutcome(seed, "non-real", imaginary_norm=result.imaginary_norm,
                           log=result.path.as_log())

    digits = options.dps + GUARD_DIGITS
    with mpmath.workdps(digits):
        x = [mpmath.nstr(v, digits) for v in result.x]
    return SeedOutcome(seed, "real", x=x, log=result.path_log)


@dataclass
class PipelineReport:
    """x0, per-seed outcomes and the certified real solutions"""
    system: PolySystem = field(repr=False)
    x0: SolutionCandidate = field(repr=False)
    zeroed: List[str]
    outcomes: List[SeedOutcome]
    solutions: List[SolutionCandidate] = field(default_factory=list, repr=False)
    selected: Optional[SolutionCandidate] = field(default=None, repr=False)

    @property
    def success_rate(self) -> float:
        if not self.outcomes:
            return 0.0
        return sum(1 for o in self.outcomes if o.status == "real") / len(self.outcomes)

    def path_logs(self) -> dict:
        with mpmath.workdps(self.x0.dps):
            x0 = {name: mpmath.nstr(value, 20) for name, value in zip(self.x0.names, self.x0.x)}
        return {
            "system": self.system.describe(),
            "zeroed": list(self.zeroed),
            "x0": x0,
            "success_rate": float(self.success_rate),
            "paths": [dict(outcome.log, status=outcome.status, error=outcome.error)
                      for outcome in self.outcomes],
        }


def run_pipeline(system: PolySystem, zeroed: Optional[Sequence[str]] = None,
                 seeds: Iterable[int] = range(16), dps: int = DEFAULT_DPS, jobs: int = 1,
                 options: Optional[TrackingOptions] = None, x0_seed: int = 0,
                 tol: float = 1e-30) -> PipelineReport:
    """x0, then one homotopy per seed, then polish, certification and selection

    Selection: smallest norm, then smallest leading error terms.
    """
    zeroed = default_zeroed(system) if zeroed is None else list(zeroed)
    options = options or TrackingOptions(dps=dps)
    x0 = solve_x0(system, zeroed, dps=dps, seed=x0_seed)

    with mpmath.workdps(dps + GUARD_DIGITS):
        x0_strings = [mpmath.nstr(v, dps + GUARD_DIGITS) for v in x0.x]
    payloads = [(system.order, system.stages, system.kind.value, system.cubic, dict(system.fixed),
                 x0_strings, int(seed), options) for seed in seeds]

    logger.info("pipeline started", system=system.describe(), zeroed=zeroed, seeds=len(payloads),
                jobs=jobs)
    if jobs > 1 and len(payloads) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as executor:
            outcomes = list(executor.map(_track_seed, payloads))
    else:
        outcomes = [_track_seed(payload) for payload in payloads]

    solutions: List[SolutionCandidate] = []
    for outcome in outcomes:
        if outcome.status != "real":
            continue
        try:
            candidate = newton_polish(system, outcome.x, dps)
        except SolverError as e:
            outcome.status, outcome.error = "failed", str(e)
            continue
        candidate.path_log = outcome.log
        if not candidate.certify(tol=tol).certified:
            outcome.status = "uncertified"
            continue
        separation = mpmath.mpf(10) ** (-(dps // 2))
        if any(max(abs(u - v) for u, v in zip(candidate.x, other.x)) < separation
               for other in solutions):
            continue
        solutions.append(candidate)

    selected = min(solutions, key=lambda c: (c.norm, c.error_terms())) if solutions else None
    report = PipelineReport(system=system, x0=x0, zeroed=zeroed, outcomes=outcomes,
                            solutions=solutions, selected=selected)
    logger.info("pipeline finished", success_rate=report.success_rate,
                distinct_solutions=len(solutions))
    return report


def write_path_logs(report: PipelineReport, path: Path) -> Path:
    path = Path(path)
    path.write_text(yaml.safe_dump(report.path_logs(), sort_keys=False))
    return path
