#!/usr/bin/env python3
"""
SplitFlow Newton Solvers
Extended-precision Newton polishing, the minimum-norm starting point,
coarse-grid solves for small systems and solution files
"""

import itertools
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import mpmath
import numpy as np
import structlog
from scipy import optimize

from methods.coefficients import DEFAULT_DPS, MethodKind, SplittingMethod
from methods.order_conditions import ConditionReport, certify, leading_error_terms
from solver.polysystem import PolySystem, SolverError, build_system
from utils.validation import InputValidator, parse_order, sanitize_log_message

logger = structlog.get_logger('SplitFlow.Solver')

GUARD_DIGITS = 10
MAX_NEWTON_ITERATIONS = 60
DIVERGENCE_FACTOR = 1e8

KKT_GUARD_DIGITS = 20
KKT_TOLERANCE = 1e-25
KKT_MAX_ITERATIONS = 40
X0_STARTS = 16
FEASIBILITY_TOLERANCE = 1e-9
PROBE_SAMPLES = 1000
PROBE_RADIUS = 1e-2

GRID_A = (-0.1, 0.15, 0.4)
GRID_B = (-0.5, 0.2, 0.8)
GRID_MAX_UNKNOWNS = 6

DERIVED_TARGETS: Dict[str, dict] = {
    "ABA82": {
        "order": (8, 2),
        "stages": 4,
        "prefer_positive": True,
        "description": "Positive-coefficient ABA composition of generalized order (8,2)",
    },
    "ABA84": {
        "order": (8, 4),
        "stages": 5,
        "prefer_positive": False,
        "description": "Minimum-norm ABA composition of generalized order (8,4)",
    },
}


@dataclass
class SolutionCandidate:
    """Polished solution of a PolySystem"""
    system: PolySystem = field(repr=False)
    x: List
    residual: object
    dps: int = DEFAULT_DPS
    residual_history: List[float] = field(default_factory=list)
    steps: List[float] = field(default_factory=list)
    report: Optional[ConditionReport] = None
    path_log: Optional[dict] = field(default=None, repr=False)

    @property
    def names(self) -> List[str]:
        return list(self.system.unknown_names)

    @property
    def kernel(self) -> Dict[str, object]:
        return self.system.kernel(self.x)

    @property
    def is_real(self) -> bool:
        return not any(isinstance(v, mpmath.mpc) and v.imag != 0 for v in self.x)

    @property
    def norm(self):
        with mpmath.workdps(self.dps):
            return mpmath.sqrt(mpmath.fsum(abs(v) ** 2 for v in self.x))

    @property
    def negative_magnitudes(self) -> Dict[str, float]:
        """|value| of every negative kernel entry"""
        return {name: float(-mpmath.re(value)) for name, value in self.kernel.items()
                if mpmath.re(value) < 0}

    @property
    def all_positive(self) -> bool:
        """Every solved-for entry is positive (fixed zeros excluded)"""
        return all(mpmath.re(v) > 0 for v in self.x)

    @property
    def first_step(self) -> float:
        return self.steps[0] if self.steps else 0.0

    def error_terms(self):
        """Leading local-error proxy of the solution"""
        with mpmath.workdps(self.dps):
            _, b, c = self.system.sequences([mpmath.re(v) for v in self.x])
            return leading_error_terms(b, c, self.system.order)

    def to_method(self, method_id: str, digits: int = 40, source: str = "solver") -> SplittingMethod:
        with mpmath.workdps(self.dps + GUARD_DIGITS):
            return self.system.to_method(self.x, method_id, digits=digits, source=source)

    def certify(self, method_id: str = "SOLVED", tol=1e-30) -> ConditionReport:
        self.report = certify(self.to_method(method_id), tol=tol, dps=self.dps)
        return self.report


def _is_complex(value) -> bool:
    return isinstance(value, (complex, np.complexfloating, mpmath.mpc))


def _mp_value(value, complex_mode: bool):
    if isinstance(value, str):
        value = mpmath.mpf(value)
    elif isinstance(value, (complex, np.complexfloating)):
        value = mpmath.mpc(complex(value))
    elif not isinstance(value, (mpmath.mpf, mpmath.mpc)):
        value = mpmath.mpf(float(value))
    return mpmath.mpc(value) if complex_mode else value


def _select(values: list, rows: Optional[Sequence[int]]) -> list:
    return values if rows is None else [values[i] for i in rows]


def _newton_direction(F: list, J: list, n: int) -> list:
    """Solve J dx = -F; minimum-norm step for wide systems, least squares for tall"""
    m = len(F)
    jacobian = mpmath.matrix(J)
    rhs = mpmath.matrix([-f for f in F])
    try:
        if m == n:
            dx = mpmath.lu_solve(jacobian, rhs)
        elif m < n:
            adjoint = jacobian.H
            dx = adjoint * mpmath.lu_solve(jacobian * adjoint, rhs)
        else:
            adjoint = jacobian.H
            dx = mpmath.lu_solve(adjoint * jacobian, adjoint * rhs)
    except ZeroDivisionError:
        raise SolverError("Jacobian is singular at the current iterate")
    return [dx[i] for i in range(n)]


def newton_polish(system: PolySystem, x: Sequence, precision_digits: int = DEFAULT_DPS,
                  rows: Optional[Sequence[int]] = None,
                  max_iterations: int = MAX_NEWTON_ITERATIONS) -> SolutionCandidate:
    """Newton iteration at precision_digits (plus guard digits)

    Complex input is iterated in complex arithmetic. rows restricts the
    residual to a subset of the equations.
    """
    dps = int(precision_digits)
    with mpmath.workdps(dps + GUARD_DIGITS):
        complex_mode = any(_is_complex(v) for v in x)
        xs = [_mp_value(v, complex_mode) for v in x]
        step_floor = mpmath.mpf(10) ** (-dps)

        history, steps = [], []
        for _ in range(max_iterations):
            F, J = system.evaluate(xs)
            F, J = _select(F, rows), _select(J, rows)
            residual = max(abs(f) for f in F)
            history.append(residual)

            if not mpmath.isfinite(residual) or residual > DIVERGENCE_FACTOR * max(history[0], 1):
                raise SolverError(f"Newton iteration diverged (residual {float(residual):.3e})")

            dx = _newton_direction(F, J, len(xs))
            xs = [xi + di for xi, di in zip(xs, dx)]
            step = max(abs(d) for d in dx)
            steps.append(float(step))

            scale = max(1, max(abs(v) for v in xs))
            if step <= step_floor * scale:
                break
        else:
            raise SolverError(f"Newton did not converge in {max_iterations} iterations "
                              f"(residual {float(history[-1]):.3e})")

        residual = max(abs(f) for f in _select(system.residual(xs), rows))
        history.append(residual)

    logger.debug("newton converged", iterations=len(steps), residual=float(residual),
                 complex=complex_mode)
    return SolutionCandidate(system=system, x=xs, residual=residual, dps=dps,
                             residual_history=[float(r) for r in history], steps=steps)


def uniform_start(system: PolySystem) -> np.ndarray:
    """Equal a's (1/(s+1)) and equal b's (1/s) on the unknowns"""
    s = system.layout_stages
    return np.array([1.0 / (s + 1) if name.startswith("a") else 1.0 / s
                     for name in system.unknown_names])


def quadrature_start(system: PolySystem) -> Optional[np.ndarray]:
    """Gauss-Legendre nodes and weights, an exact solution of (2s, 2) layouts"""
    if system.kind != MethodKind.ABA or len(system.order) != 2 or system.order[1] != 2:
        return None
    s = system.layout_stages
    points, weights = np.polynomial.legendre.leggauss(s)
    nodes = (points + 1) / 2
    a = np.diff(np.concatenate([[0.0], nodes, [1.0]]))
    values = {f"a{i + 1}": a[i] for i in range(len(system.a_names))}
    values.update({f"b{i + 1}": weights[i] / 2 for i in range(len(system.b_names))})
    return np.array([values[name] for name in system.unknown_names])


def _node_block_score(system: PolySystem, x: Sequence[float]) -> float:
    """Asymmetry of consecutive b's sitting on a shared node

    b_i and b_{i+1} share a node when the a between them is zero; a block
    (u, v, u) scores 0.
    """
    a, b, _ = system.sequences([float(v) for v in x])
    score, block = 0.0, [b[0]]
    for i in range(1, len(b)):
        if a[i] == 0:
            block.append(b[i])
            continue
        score += sum(abs(u - v) for u, v in zip(block, reversed(block)))
        block = [b[i]]
    score += sum(abs(u - v) for u, v in zip(block, reversed(block)))
    return score


def _minimize_norm_double(system: PolySystem, rows: Sequence[int], seed: int,
                          starts: int) -> np.ndarray:
    """SLSQP minimum of |x|^2 on f1 = 0 from several starts"""
    def constraint(x):
        return np.array(_select(system.evaluate([float(v) for v in x], jacobian=False)[0], rows))

    def constraint_jacobian(x):
        return np.array(_select(system.evaluate([float(v) for v in x])[1], rows), dtype=float)

    rng = np.random.default_rng(seed)
    base = uniform_start(system)
    initial = [base] + [base + rng.normal(0.0, 0.2, size=base.size) for _ in range(max(0, starts - 1))]

    found = []
    for x0 in initial:
        result = optimize.minimize(lambda x: float(x @ x), x0, jac=lambda x: 2 * x,
                                   method='SLSQP',
                                   constraints=[{'type': 'eq', 'fun': constraint,
                                                 'jac': constraint_jacobian}],
                                   options={'maxiter': 500, 'ftol': 1e-15})
        if not np.all(np.isfinite(result.x)):
            continue
        if np.max(np.abs(constraint(result.x))) > FEASIBILITY_TOLERANCE:
            continue
        found.append((float(result.x @ result.x), _node_block_score(system, result.x), result.x))

    if not found:
        raise SolverError("No feasible starting point found for the x0 problem")

    best_objective = min(objective for objective, _, _ in found)
    ties = [entry for entry in found if entry[0] <= best_objective * (1 + 1e-7)]
    objective, score, x = min(ties, key=lambda entry: entry[1])
    logger.info("x0 double-precision minimum", objective=objective, symmetry=score,
                feasible_starts=len(found))
    return x


def _lagrange_newton(system: PolySystem, rows: Sequence[int], x: np.ndarray, dps: int,
                     tol: float) -> list:
    """Newton on the KKT conditions 2x + J^T lam = 0, f1(x) = 0"""
    with mpmath.workdps(dps + KKT_GUARD_DIGITS):
        xs = [mpmath.mpf(float(v)) for v in x]
        n, m = len(xs), len(rows)
        h = mpmath.mpf(10) ** (-((dps + KKT_GUARD_DIGITS) // 3))
        floor = mpmath.mpf(10) ** (-(dps - GUARD_DIGITS))

        def jacobian_at(point):
            F, J = system.evaluate(point)
            return _select(F, rows), _select(J, rows)

        def multiplier_gradient(J, lam):
            return [mpmath.fsum(J[k][u] * lam[k] for k in range(m)) for u in range(n)]

        F, J = jacobian_at(xs)
        Jm = mpmath.matrix(J)
        try:
            lam_vec = mpmath.lu_solve(Jm * Jm.T, mpmath.matrix([-2 * mpmath.fsum(J[k][u] * xs[u] for u in range(n))
                                                                for k in range(m)]))
        except ZeroDivisionError:
            raise SolverError("Constraint Jacobian is rank deficient at the x0 start")
        lam = [lam_vec[k] for k in range(m)]

        for _ in range(KKT_MAX_ITERATIONS):
            F, J = jacobian_at(xs)
            grad = multiplier_gradient(J, lam)
            G = [2 * xs[u] + grad[u] for u in range(n)] + F
            norm = max(abs(g) for g in G)
            if norm <= floor:
                break

            K = mpmath.zeros(n + m, n + m)
            for u in range(n):
                plus = list(xs)
                minus = list(xs)
                plus[u] += h
                minus[u] -= h
                g_plus = multiplier_gradient(jacobian_at(plus)[1], lam)
                g_minus = multiplier_gradient(jacobian_at(minus)[1], lam)
                for w in range(n):
                    K[w, u] = (g_plus[w] - g_minus[w]) / (2 * h)
                K[u, u] += 2
            for k in range(m):
                for u in range(n):
                    K[n + k, u] = J[k][u]
                    K[u, n + k] = J[k][u]

            try:
                dz = mpmath.lu_solve(K, mpmath.matrix([-g for g in G]))
            except ZeroDivisionError:
                raise SolverError("KKT matrix is singular")
            xs = [xs[u] + dz[u] for u in range(n)]
            lam = [lam[k] + dz[n + k] for k in range(m)]
        else:
            raise SolverError(f"Lagrange-Newton did not converge (KKT residual {float(norm):.3e})")

        if norm > tol:
            raise SolverError(f"KKT residual {float(norm):.3e} above {tol:.1e}")
        logger.info("x0 KKT converged", kkt_residual=float(norm))
        return xs


def default_zeroed(system: PolySystem) -> List[str]:
    """a-entries just before the central one, leaving one free direction"""
    count = system.n_unknowns - len(system.f1_rows) - 1
    if count <= 0:
        return []
    movable = [name for name in system.a_names[:-1] if name not in system.fixed]
    return movable[-count:] if count <= len(movable) else movable


def solve_x0(system: PolySystem, zeroed_indices: Sequence[str] = (), dps: int = DEFAULT_DPS,
             seed: int = 0, starts: int = X0_STARTS, tol: float = KKT_TOLERANCE) -> SolutionCandidate:
    """Minimum-norm point of f1 = 0 with the named entries held at zero

    Returned in the unknowns of the full system.
    """
    zeroed = list(zeroed_indices)
    for name in zeroed:
        if name not in system.unknown_names:
            raise SolverError(f"Cannot zero {sanitize_log_message(name)}: not an unknown")

    restricted = system.with_fixed({name: "0" for name in zeroed}, allow_overdetermined=True)
    rows = restricted.f1_rows
    n, m = restricted.n_unknowns, len(rows)
    if m > n:
        raise SolverError(f"x0 problem over-determined: {m} constraints, {n} unknowns")

    if m == n:
        # Minimization is degenerate; f1 alone fixes the point
        start = quadrature_start(restricted)
        start = uniform_start(restricted) if start is None else start
        x = newton_polish(restricted, start, dps, rows=rows).x
    else:
        x_double = _minimize_norm_double(restricted, rows, seed, starts)
        x = _lagrange_newton(restricted, rows, x_double, dps, tol)

    with mpmath.workdps(dps + GUARD_DIGITS):
        values = restricted.kernel(x)
        x_full = [values[name] for name in system.unknown_names]
        residual = max(abs(f) for f in _select(system.residual(x_full), system.f1_rows))

    logger.info("x0 found", zeroed=zeroed, f1_residual=float(residual))
    return SolutionCandidate(system=system, x=x_full, residual=residual, dps=dps)


def probe_x0_optimality(x0: SolutionCandidate, zeroed_indices: Sequence[str] = (),
                        samples: int = PROBE_SAMPLES, radius: float = PROBE_RADIUS,
                        seed: int = 0, dps: int = 30) -> float:
    """Smallest |x|^2 - |x0|^2 over random neighbours projected back onto f1 = 0

    A negative result is a feasible point of smaller norm near x0.
    """
    system = x0.system
    restricted = system.with_fixed({name: "0" for name in zeroed_indices}, allow_overdetermined=True)
    rows = restricted.f1_rows
    kernel = x0.kernel
    base = np.array([float(mpmath.re(kernel[name])) for name in restricted.unknown_names])
    rng = np.random.default_rng(seed)

    with mpmath.workdps(dps):
        reference = mpmath.fsum(mpmath.re(kernel[name]) ** 2 for name in restricted.unknown_names)

    margins = []
    for _ in range(samples):
        start = base + rng.normal(0.0, radius, size=base.size)
        try:
            projected = newton_polish(restricted, start, dps, rows=rows)
        except SolverError:
            continue
        with mpmath.workdps(dps):
            margins.append(float(mpmath.fsum(v ** 2 for v in projected.x) - reference))

    if not margins:
        raise SolverError("No probe point could be projected onto f1 = 0")
    worst = min(margins)
    logger.info("x0 optimality probe", samples=samples, projected=len(margins), worst_margin=worst)
    return worst


def _double_residual(system: PolySystem):
    def fun(x):
        F, J = system.evaluate([float(v) for v in x])
        return np.array(F, dtype=float), np.array(J, dtype=float)
    return fun


def grid_solutions(system: PolySystem, dps: int = DEFAULT_DPS,
                   max_unknowns: int = GRID_MAX_UNKNOWNS) -> List[SolutionCandidate]:
    """Distinct real solutions reached from a coarse grid of starts"""
    if not system.square:
        raise SolverError(f"Grid solve needs a square system: {system.describe()}")
    if system.n_unknowns > max_unknowns:
        raise SolverError(f"Grid solve limited to {max_unknowns} unknowns: {system.describe()}")

    axes = [GRID_A if name.startswith("a") else GRID_B for name in system.unknown_names]
    starts = [uniform_start(system)]
    quadrature = quadrature_start(system)
    if quadrature is not None:
        starts.insert(0, quadrature)
    starts.extend(np.array(point) for point in itertools.product(*axes))

    fun = _double_residual(system)
    roots: List[np.ndarray] = []
    for start in starts:
        result = optimize.root(fun, start, jac=True, method='hybr')
        if not result.success or not np.all(np.isfinite(result.x)):
            continue
        if np.max(np.abs(fun(result.x)[0])) > 1e-10:
            continue
        if any(np.max(np.abs(result.x - root)) < 1e-8 for root in roots):
            continue
        roots.append(result.x)

    candidates: List[SolutionCandidate] = []
    for root in roots:
        try:
            candidate = newton_polish(system, root, dps)
        except SolverError as e:
            logger.debug("grid root rejected", error=str(e))
            continue
        if any(max(abs(u - v) for u, v in zip(candidate.x, other.x)) < mpmath.mpf(10) ** (-dps // 2)
               for other in candidates):
            continue
        candidates.append(candidate)

    logger.info("grid solve", system=system.describe(), starts=len(starts), solutions=len(candidates))
    return candidates


def grid_solve(system: PolySystem, dps: int = DEFAULT_DPS, prefer_positive: bool = True,
               max_unknowns: int = GRID_MAX_UNKNOWNS) -> SolutionCandidate:
    """All-positive solution when one exists (and wanted), else minimum norm"""
    candidates = grid_solutions(system, dps, max_unknowns)
    if not candidates:
        raise SolverError(f"No real solution found on the grid for {system.describe()}")

    positive = [c for c in candidates if c.all_positive]
    pool = positive if prefer_positive and positive else candidates
    return min(pool, key=lambda c: (c.norm, c.error_terms()))


def derive_registry_method(method_id: str, dps: int = DEFAULT_DPS) -> SplittingMethod:
    """Coefficients of a registry method that ships without a table"""
    target = DERIVED_TARGETS.get(method_id)
    if target is None:
        raise SolverError(f"No derivation known for {sanitize_log_message(method_id)}")

    system = build_system(target["order"], target["stages"], MethodKind.ABA)
    candidate = grid_solve(system, dps=dps, prefer_positive=target["prefer_positive"])
    method = replace(candidate.to_method(method_id, source="derived"),
                     description=target["description"])

    report = certify(method, dps=dps)
    if not report.certified:
        raise SolverError(f"Derived {method_id} failed certification "
                          f"(max residual {float(report.max_residual):.3e})")
    logger.info("method derived", method=method_id, norm=float(candidate.norm))
    return method


def format_solution(method: SplittingMethod, report: Optional[ConditionReport] = None) -> str:
    """Plain-text solution: header comments, one coefficient per line, residuals"""
    lines = [
        "# SplitFlow solution",
        f"# id = {method.id}",
        f"# kind = {method.kind.value}",
        f"# order = {','.join(str(r) for r in method.order)}",
        f"# stages = {method.stages}",
        f"# cubic = {'true' if method.cubic_condition else 'false'}",
    ]
    lines += [f"a{i + 1} = {value.decimal}" for i, value in enumerate(method.a_kernel)]
    lines += [f"b{i + 1} = {value.decimal}" for i, value in enumerate(method.b_kernel)]
    if report is not None:
        lines.append(f"# residuals at {report.dps} digits")
        lines += ["# " + line for line in report.format().splitlines()]
    return "\n".join(lines) + "\n"


def write_solution_file(path: Path, method: SplittingMethod,
                        report: Optional[ConditionReport] = None) -> Path:
    path = Path(path)
    path.write_text(format_solution(method, report))
    logger.info("solution written", method=method.id, path=str(path))
    return path


def read_solution_file(path: Path, method_id: Optional[str] = None) -> SplittingMethod:
    """Method from a solution file written by write_solution_file"""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise SolverError(f"Cannot read solution file {path}: {e}")

    header: Dict[str, str] = {}
    coefficients: Dict[str, str] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, sep, value = line[1:].partition("=")
            if sep and key.strip() in ("id", "kind", "order", "stages", "cubic"):
                header.setdefault(key.strip(), value.strip())
            continue
        name, sep, value = line.partition("=")
        name = name.strip()
        if not sep or not InputValidator.validate_kernel_name(name):
            raise SolverError(f"{path.name}:{number}: expected 'name = value'")
        coefficients[name] = value.strip()

    missing = [key for key in ("kind", "order", "stages") if key not in header]
    if missing:
        raise SolverError(f"{path.name}: missing header fields {missing}")

    def kernel(prefix: str) -> List[str]:
        values = []
        while f"{prefix}{len(values) + 1}" in coefficients:
            values.append(coefficients[f"{prefix}{len(values) + 1}"])
        return values

    a_kernel, b_kernel = kernel("a"), kernel("b")
    if len(a_kernel) + len(b_kernel) != len(coefficients):
        raise SolverError(f"{path.name}: coefficient names are not consecutive")

    method_id = method_id or header.get("id") or path.stem.upper()
    if not InputValidator.validate_method_id(method_id):
        raise SolverError(f"Invalid method id {sanitize_log_message(method_id)}")

    try:
        return SplittingMethod(
            id=method_id,
            kind=MethodKind(header["kind"]),
            order=parse_order(header["order"]),
            stages=int(header["stages"]),
            a_kernel=a_kernel,
            b_kernel=b_kernel,
            cubic_condition=header.get("cubic", "false").lower() == "true",
            source=str(path),
        )
    except ValueError as e:
        raise SolverError(f"{path.name}: {e}")
