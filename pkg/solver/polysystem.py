#!/usr/bin/env python3
"""
SplitFlow Polynomial Systems
Order-condition residual maps over the kernel coefficients
"""

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import mpmath
import structlog

from methods.coefficients import (CoefficientValue, MethodKind, SplittingMethod,
                                  _palindrome, prefix_sums)
from methods.order_conditions import (MultiIndex, condition_lhs_and_gradient,
                                      condition_rhs, condition_set_for, rational_like)
from utils.validation import SplitFlowError

logger = structlog.get_logger('SplitFlow.Solver')


class SolverError(SplitFlowError):
    """Raised when a solve cannot produce an acceptable solution"""
    pass


@dataclass(frozen=True)
class Equation:
    """One residual of the system"""
    label: str
    kind: str
    group: int
    index: Optional[MultiIndex] = None


def _scalar(value, like):
    """A fixed kernel value converted to the scalar type of like"""
    if isinstance(like, (mpmath.mpf, mpmath.mpc)):
        return like * 0 + mpmath.mpf(value)
    return like * 0 + float(value)


class PolySystem:
    """f(x) = 0 for the kernel unknowns of a palindromic method

    Group 1 (f1) holds the consistency equations, the cubic equation and the
    single-part conditions; group 2 (f2) the multi-part conditions.
    """

    def __init__(self, order: Sequence[int], stages: int, kind: MethodKind = MethodKind.ABA,
                 cubic: bool = False, fixed: Optional[Dict[str, str]] = None,
                 allow_overdetermined: bool = False):
        self.order = tuple(int(r) for r in order)
        self.stages = int(stages)
        self.kind = kind if isinstance(kind, MethodKind) else MethodKind(kind)
        self.cubic = bool(cubic)
        self.layout_stages = self.stages + 1 if self.kind == MethodKind.BAB else self.stages

        n_a, n_b = SplittingMethod.kernel_lengths(self.layout_stages)
        self.a_names = [f"a{i + 1}" for i in range(n_a)]
        self.b_names = [f"b{i + 1}" for i in range(n_b)]

        self.fixed: Dict[str, str] = dict(fixed or {})
        if self.kind == MethodKind.BAB:
            self.fixed.setdefault("a1", "0")
        unknown_kernel = set(self.fixed) - set(self.a_names) - set(self.b_names)
        if unknown_kernel:
            raise SolverError(f"Fixed names not in the kernel: {sorted(unknown_kernel)}")

        self.unknown_names = [name for name in self.a_names + self.b_names if name not in self.fixed]
        position = {name: u for u, name in enumerate(self.unknown_names)}

        self.conditions = condition_set_for(self.order, symmetric=True, cubic=self.cubic)
        self.equations: List[Equation] = [
            Equation("consistency_a", "consistency_a", 1),
            Equation("consistency_b", "consistency_b", 1),
        ]
        if self.cubic:
            self.equations.append(Equation("cubic", "cubic", 1))
        for m in self.conditions.indices:
            self.equations.append(Equation(str(m), "condition", 1 if m.k == 1 else 2, m))

        # Expanded sequences as kernel positions
        s = self.layout_stages
        self.a_map = _palindrome(list(range(n_a)), s + 1)
        self.b_map = _palindrome(list(range(n_b)), s)

        self._a_unknown = [position.get(self.a_names[k]) for k in self.a_map]
        self._b_unknown = [position.get(self.b_names[k]) for k in self.b_map]

        self._db = [[(u, 1)] if u is not None else [] for u in self._b_unknown]
        self._dc = []
        counts: Dict[int, int] = {}
        for u in self._a_unknown[:-1]:
            if u is not None:
                counts[u] = counts.get(u, 0) + 1
            self._dc.append(sorted(counts.items()))

        self._a_counts = self._count(self._a_unknown)
        self._b_counts = self._count(self._b_unknown)

        if self.n_equations > self.n_unknowns and not allow_overdetermined:
            raise SolverError(
                f"Over-determined configuration: {self.n_equations} equations, "
                f"{self.n_unknowns} unknowns for order {self.order} with {self.stages} stages")

    @staticmethod
    def _count(unknowns: Sequence[Optional[int]]) -> List[Tuple[int, int]]:
        counts: Dict[int, int] = {}
        for u in unknowns:
            if u is not None:
                counts[u] = counts.get(u, 0) + 1
        return sorted(counts.items())

    @property
    def n_unknowns(self) -> int:
        return len(self.unknown_names)

    @property
    def n_equations(self) -> int:
        return len(self.equations)

    @property
    def square(self) -> bool:
        return self.n_equations == self.n_unknowns

    @property
    def f1_rows(self) -> List[int]:
        return [i for i, eq in enumerate(self.equations) if eq.group == 1]

    @property
    def f2_rows(self) -> List[int]:
        return [i for i, eq in enumerate(self.equations) if eq.group == 2]

    def with_fixed(self, values: Dict[str, str], allow_overdetermined: bool = False) -> 'PolySystem':
        """Same system with further kernel entries held at given values"""
        fixed = dict(self.fixed)
        fixed.update({name: str(value) for name, value in values.items()})
        return PolySystem(self.order, self.stages, self.kind, self.cubic, fixed,
                          allow_overdetermined=allow_overdetermined)

    def kernel(self, x: Sequence) -> Dict[str, object]:
        """Full kernel (fixed entries included) as name -> value"""
        like = x[0]
        values = dict(zip(self.unknown_names, x))
        for name, value in self.fixed.items():
            values[name] = _scalar(value, like)
        return values

    def sequences(self, x: Sequence) -> Tuple[list, list, list]:
        """Expanded a, b and the nodes c_1..c_s"""
        kernel = self.kernel(x)
        a = [kernel[self.a_names[k]] for k in self.a_map]
        b = [kernel[self.b_names[k]] for k in self.b_map]
        return a, b, prefix_sums(a)[:-1]

    def evaluate(self, x: Sequence, jacobian: bool = True) -> Tuple[list, list]:
        """Residuals and (optionally) the analytic Jacobian"""
        x = list(x)
        n = len(x) if jacobian else 0
        zero = x[0] * 0
        a, b, c = self.sequences(x)

        residuals, rows = [], []
        for equation in self.equations:
            row = [zero] * n
            if equation.kind == "consistency_a":
                value = sum(a, zero) - 1
                for u, count in (self._a_counts if n else ()):
                    row[u] = zero + count
            elif equation.kind == "consistency_b":
                value = sum(b, zero) - 1
                for u, count in (self._b_counts if n else ()):
                    row[u] = zero + count
            elif equation.kind == "cubic":
                value = sum((bi ** 3 for bi in b), zero)
                if n:
                    for bi, u in zip(b, self._b_unknown):
                        if u is not None:
                            row[u] += 3 * bi * bi
            else:
                lhs, gradient = condition_lhs_and_gradient(b, c, equation.index,
                                                           self._db, self._dc, n)
                value = lhs - rational_like(lhs, condition_rhs(equation.index))
                row = gradient
            residuals.append(value)
            rows.append(row)

        return residuals, rows

    def residual(self, x: Sequence) -> list:
        return self.evaluate(x, jacobian=False)[0]

    def from_method(self, method: SplittingMethod, dps: int = 50) -> list:
        """Unknown vector of a method with a matching layout"""
        names = {f"a{i + 1}": v for i, v in enumerate(method.a_kernel)}
        names.update({f"b{i + 1}": v for i, v in enumerate(method.b_kernel)})
        missing = [name for name in self.unknown_names if name not in names]
        if missing or method.layout_stages != self.layout_stages:
            raise SolverError(f"{method.id} does not match the system layout")
        with mpmath.workdps(dps):
            return [names[name].exact(dps) for name in self.unknown_names]

    def to_method(self, x: Sequence, method_id: str, digits: int = 40,
                  source: str = "solver") -> SplittingMethod:
        kernel = self.kernel(x)
        return SplittingMethod(
            id=method_id,
            kind=self.kind,
            order=self.order,
            stages=self.stages,
            a_kernel=[CoefficientValue.from_value(mpmath.re(kernel[name]), digits) for name in self.a_names],
            b_kernel=[CoefficientValue.from_value(mpmath.re(kernel[name]), digits) for name in self.b_names],
            cubic_condition=self.cubic,
            source=source,
        )

    def describe(self) -> str:
        order = ",".join(str(r) for r in self.order)
        return (f"order ({order}) {self.kind.value} s={self.stages} cubic={self.cubic}: "
                f"{self.n_equations} equations, {self.n_unknowns} unknowns")


def build_system(order: Sequence[int], stages: int, kind: MethodKind = MethodKind.ABA,
                 cubic: bool = False) -> PolySystem:
    """Order conditions of a palindromic layout with the kernel as unknowns"""
    system = PolySystem(order, stages, kind, cubic)
    logger.info("system built", description=system.describe())
    return system
