#!/usr/bin/env python3
"""
SplitFlow Order Conditions
Lyndon multi-indices, generalized order conditions and certification
"""

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from math import factorial
from typing import Iterator, List, Optional, Sequence, Tuple

import mpmath
import structlog

from methods.coefficients import (DEFAULT_DPS, SplittingMethod, exact_sequences,
                                  prefix_sums)
from utils.validation import SplitFlowError

logger = structlog.get_logger('SplitFlow.Conditions')

DEFAULT_TOLERANCE = mpmath.mpf('1e-30')


class ConditionError(SplitFlowError):
    """Raised for malformed multi-indices or condition requests"""
    pass


@dataclass(frozen=True, order=True)
class MultiIndex:
    """Tuple (j1, ..., jk) of positive integers"""
    parts: Tuple[int, ...]

    def __post_init__(self):
        parts = tuple(int(j) for j in self.parts)
        if not parts:
            raise ConditionError("Empty multi-index")
        if any(j < 1 for j in parts):
            raise ConditionError(f"Multi-index parts must be positive: {parts}")
        object.__setattr__(self, 'parts', parts)

    @classmethod
    def parse(cls, text: str) -> 'MultiIndex':
        """Parse '1,2' or '(1,2)'"""
        cleaned = text.strip().strip('()')
        try:
            return cls(tuple(int(p) for p in cleaned.split(',') if p.strip()))
        except ValueError:
            raise ConditionError(f"Invalid multi-index: {text!r}")

    @property
    def weight(self) -> int:
        return sum(self.parts)

    @property
    def k(self) -> int:
        return len(self.parts)

    def __str__(self) -> str:
        return "(" + ",".join(str(j) for j in self.parts) + ")"


def is_lyndon(m: MultiIndex) -> bool:
    """Every proper prefix is lexicographically smaller than its suffix"""
    parts = m.parts
    return all(parts[:i] < parts[i:] for i in range(1, len(parts)))


def _duval(alphabet_size: int, max_length: int) -> Iterator[List[int]]:
    """Lyndon words over 0..alphabet_size-1 of length <= max_length"""
    word = [-1]
    while word:
        word[-1] += 1
        yield word
        m = len(word)
        while len(word) < max_length:
            word.append(word[-m])
        while word and word[-1] == alphabet_size - 1:
            word.pop()


def _sort_key(m: MultiIndex):
    return m.weight, m.parts


def lyndon_upto(max_weight: int, max_parts: int, odd_only: bool = False) -> List[MultiIndex]:
    """Lyndon multi-indices with at most max_parts parts and weight <= max_weight"""
    if max_weight < 1 or max_parts < 1:
        raise ConditionError("max_weight and max_parts must be >= 1")

    found = []
    # Parts j map to letters j - 1; a word of weight w uses letters below w
    for word in _duval(max_weight, max_parts):
        parts = tuple(letter + 1 for letter in word)
        weight = sum(parts)
        if weight > max_weight:
            continue
        if odd_only and weight % 2 == 0:
            continue
        found.append(MultiIndex(parts))

    found.sort(key=_sort_key)
    return found


def condition_rhs(m: MultiIndex) -> Fraction:
    """1 / prod_l (j1 + ... + jl)"""
    denominator = 1
    for partial in itertools.accumulate(m.parts):
        denominator *= partial
    return Fraction(1, denominator)


def condition_lhs_and_gradient(b: Sequence, c: Sequence, m: MultiIndex,
                               db: Optional[Sequence] = None,
                               dc: Optional[Sequence] = None,
                               n: int = 0):
    """Order-condition LHS and its gradient in one pass over the stages

    db[i], dc[i] list (unknown, multiplicity) pairs for the derivatives of
    b_i and c_i. v[p] holds the partial sum over non-decreasing index
    prefixes of length p; runs of equal indices pick up 1/l!.
    """
    if len(b) != len(c):
        raise ConditionError("b and c must have equal length")
    if not b:
        raise ConditionError("Empty coefficient sequence")

    parts = m.parts
    k = len(parts)
    zero = b[0] * 0
    one = zero + 1

    v = [one] + [zero] * k
    g = [[zero] * n for _ in range(k + 1)]

    for i, (bi, ci) in enumerate(zip(b, c)):
        new_v = list(v)
        new_g = [list(row) for row in g] if n else g
        for p in range(k, 0, -1):
            exponent = 0
            for q in range(p - 1, -1, -1):
                d = p - q
                exponent += parts[q] - 1
                b_term = bi ** d / factorial(d)
                c_term = ci ** exponent
                factor = b_term * c_term
                new_v[p] += v[q] * factor

                if not n:
                    continue
                row, source = new_g[p], g[q]
                for u in range(n):
                    row[u] += source[u] * factor
                d_b = bi ** (d - 1) / factorial(d - 1) * c_term
                for u, count in db[i]:
                    row[u] += v[q] * d_b * count
                if exponent:
                    d_c = b_term * exponent * ci ** (exponent - 1)
                    for u, count in dc[i]:
                        row[u] += v[q] * d_c * count
        v, g = new_v, new_g

    return v[k], g[k]


def condition_lhs(b: Sequence, c: Sequence, m: MultiIndex):
    """LHS sum over 1 <= i1 <= ... <= ik <= s with the repeated-index weights"""
    value, _ = condition_lhs_and_gradient(b, c, m)
    return value


def condition_lhs_direct(b: Sequence, c: Sequence, m: MultiIndex):
    """Same sum by explicit enumeration of non-decreasing index tuples"""
    if not b or len(b) != len(c):
        raise ConditionError("b and c must be non-empty and of equal length")

    total = b[0] * 0
    for combo in itertools.combinations_with_replacement(range(len(b)), m.k):
        term = total * 0 + 1
        for index, j in zip(combo, m.parts):
            term = term * b[index] * c[index] ** (j - 1)
        for _, run in itertools.groupby(combo):
            term = term / factorial(len(list(run)))
        total = total + term
    return total


def cubic_residual(b: Sequence):
    """Sum of cubes of the expanded b-sequence"""
    total = b[0] * 0
    for value in b:
        total = total + value ** 3
    return total


@dataclass(frozen=True)
class ConditionSet:
    """Conditions implied by a generalized order"""
    order: Tuple[int, ...]
    symmetric: bool
    indices: Tuple[MultiIndex, ...]
    include_cubic: bool = False

    @property
    def equation_count(self) -> int:
        """Non-consistency equations"""
        return len(self.indices) + (1 if self.include_cubic else 0)


def condition_set_for(order: Sequence[int], symmetric: bool = True,
                      cubic: bool = False) -> ConditionSet:
    """Lyndon indices with k parts and weight <= r_k, for each k"""
    order = tuple(int(r) for r in order)
    if not order or any(r < 1 for r in order):
        raise ConditionError(f"Invalid order {order}")
    if symmetric:
        if any(r % 2 for r in order):
            raise ConditionError(f"Symmetric orders must be even: {order}")
        if any(later > earlier for earlier, later in zip(order, order[1:])):
            raise ConditionError(f"Order entries must be non-increasing: {order}")

    indices = []
    max_weight = max(order)
    candidates = lyndon_upto(max_weight, len(order), odd_only=symmetric)
    for k, r in enumerate(order, start=1):
        for m in candidates:
            # (1) is the b-consistency equation, carried separately
            if m.k == k and m.weight <= r and m.parts != (1,):
                indices.append(m)

    indices.sort(key=lambda m: (m.k, m.weight, m.parts))
    return ConditionSet(order=order, symmetric=symmetric, indices=tuple(indices),
                        include_cubic=cubic)


def leading_error_terms(b: Sequence, c: Sequence, order: Sequence[int],
                        symmetric: bool = True):
    """Sum of |LHS - RHS| over the Lyndon indices of weight r_k + 1"""
    total = abs(b[0] * 0)
    for k, r in enumerate(order, start=1):
        weight = r + 1
        for m in lyndon_upto(weight, k, odd_only=symmetric):
            if m.k == k and m.weight == weight:
                total = total + abs(condition_lhs(b, c, m) - rational_like(b[0], condition_rhs(m)))
    return total


def rational_like(like, value: Fraction):
    """A rational converted to the scalar type of like"""
    return (like * 0 + value.numerator) / value.denominator


@dataclass
class ConditionReport:
    """Residuals of one method against a condition set"""
    method_id: str
    order: Tuple[int, ...]
    residuals: List[Tuple[MultiIndex, object]]
    consistency: Tuple[object, object]
    cubic: Optional[object]
    tolerance: object
    certified: bool
    dps: int = DEFAULT_DPS
    notes: List[str] = field(default_factory=list)

    @property
    def max_residual(self):
        values = [abs(r) for _, r in self.residuals] + [abs(r) for r in self.consistency]
        if self.cubic is not None:
            values.append(abs(self.cubic))
        return max(values)

    def format(self) -> str:
        """One line per condition with a 3-digit scientific residual"""
        order = ",".join(str(r) for r in self.order)
        status = "certified" if self.certified else "NOT certified"
        lines = [f"{self.method_id} order ({order}) tol {float(self.tolerance):.3e}: {status}"]
        lines.append(f"  consistency a  {float(self.consistency[0]):.3e}")
        lines.append(f"  consistency b  {float(self.consistency[1]):.3e}")
        for m, residual in self.residuals:
            lines.append(f"  {str(m):<14} {float(residual):.3e}")
        if self.cubic is not None:
            lines.append(f"  {'cubic':<14} {float(self.cubic):.3e}")
        return "\n".join(lines)


def certify(method: SplittingMethod, tol=DEFAULT_TOLERANCE, dps: int = DEFAULT_DPS,
            order: Optional[Sequence[int]] = None, cubic: Optional[bool] = None,
            symmetric: bool = True) -> ConditionReport:
    """Check a method against the conditions of its (or a given) order"""
    if tol <= 0:
        raise ConditionError("Tolerance must be positive")

    target = tuple(order) if order is not None else method.order
    with_cubic = method.cubic_condition if cubic is None else cubic
    conditions = condition_set_for(target, symmetric=symmetric, cubic=with_cubic)

    with mpmath.workdps(dps):
        tolerance = mpmath.mpf(tol)
        a_values, b_values = exact_sequences(method, dps)
        c_values = prefix_sums(a_values)

        consistency = (c_values[-1] - 1, mpmath.fsum(b_values) - 1)
        residuals = []
        for m in conditions.indices:
            lhs = condition_lhs(b_values, c_values[:-1], m)
            residuals.append((m, lhs - rational_like(lhs, condition_rhs(m))))

        cubic_value = cubic_residual(b_values) if with_cubic else None

        report = ConditionReport(
            method_id=method.id,
            order=target,
            residuals=residuals,
            consistency=consistency,
            cubic=cubic_value,
            tolerance=tolerance,
            certified=False,
            dps=dps,
        )
        report.certified = bool(report.max_residual <= tolerance)

    logger.debug("method certified" if report.certified else "certification failed",
                 method=method.id, order=target, max_residual=float(report.max_residual))
    return report
