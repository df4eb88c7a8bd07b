#!/usr/bin/env python3
"""
SplitFlow Coefficients
Splitting method definitions, palindromic expansion and node vectors
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import List, Sequence, Tuple

import mpmath
import structlog

from utils.validation import SplitFlowError

logger = structlog.get_logger('SplitFlow.Coefficients')

# Verification precision and printed digits
DEFAULT_DPS = 50
PRINT_DIGITS = 40


class CoefficientError(SplitFlowError):
    """Raised for malformed coefficient kernels"""
    pass


class MethodKind(Enum):
    """Composition layouts"""
    ABA = "ABA"
    BAB = "BAB"
    ABAH = "ABAH"


def format_decimal(value, digits: int = PRINT_DIGITS) -> str:
    """Print an arbitrary-precision value with the given significant digits"""
    with mpmath.workdps(digits + 10):
        return mpmath.nstr(mpmath.mpf(value), digits, min_fixed=-6, max_fixed=digits)


@dataclass(frozen=True)
class CoefficientValue:
    """A coefficient stored as its decimal string"""
    decimal: str

    def __post_init__(self):
        try:
            mpmath.mpf(self.decimal)
        except (ValueError, TypeError):
            raise CoefficientError(f"Not a decimal number: {self.decimal!r}")

    @classmethod
    def from_value(cls, value, digits: int = PRINT_DIGITS) -> 'CoefficientValue':
        return cls(format_decimal(value, digits))

    @property
    def working(self) -> float:
        """Native double, correctly rounded from the decimal string"""
        return float(self.decimal)

    def exact(self, dps: int = DEFAULT_DPS) -> mpmath.mpf:
        """Value parsed at dps significant digits"""
        with mpmath.workdps(dps):
            return mpmath.mpf(self.decimal)

    def __str__(self) -> str:
        return self.decimal


def _coefficients(values: Sequence) -> Tuple[CoefficientValue, ...]:
    return tuple(v if isinstance(v, CoefficientValue) else CoefficientValue(str(v))
                 for v in values)


def _palindrome(kernel: Sequence, length: int) -> list:
    """Mirror a kernel into a palindrome of the given length"""
    kernel = list(kernel)
    if length % 2 == 0:
        return kernel + kernel[::-1]
    return kernel + kernel[-2::-1]


@dataclass(frozen=True)
class SplittingMethod:
    """A named palindromic splitting scheme"""
    id: str
    kind: MethodKind
    order: Tuple[int, ...]
    stages: int
    a_kernel: Tuple[CoefficientValue, ...]
    b_kernel: Tuple[CoefficientValue, ...]
    cubic_condition: bool = False
    description: str = ""
    source: str = ""

    def __post_init__(self):
        object.__setattr__(self, 'order', tuple(int(r) for r in self.order))
        object.__setattr__(self, 'a_kernel', _coefficients(self.a_kernel))
        object.__setattr__(self, 'b_kernel', _coefficients(self.b_kernel))

        if not isinstance(self.kind, MethodKind):
            object.__setattr__(self, 'kind', MethodKind(self.kind))

        if self.stages < 1:
            raise CoefficientError(f"{self.id}: stage count must be >= 1")
        if not self.a_kernel or not self.b_kernel:
            raise CoefficientError(f"{self.id}: empty coefficient kernel")
        if not self.order or any(r < 1 for r in self.order):
            raise CoefficientError(f"{self.id}: invalid order {self.order}")

        a_len, b_len = self.kernel_lengths(self.layout_stages)
        if len(self.a_kernel) != a_len or len(self.b_kernel) != b_len:
            raise CoefficientError(
                f"{self.id}: kernel lengths ({len(self.a_kernel)}, {len(self.b_kernel)}) "
                f"inconsistent with {self.stages} stages, expected ({a_len}, {b_len})")

        if self.kind == MethodKind.BAB and mpmath.mpf(self.a_kernel[0].decimal) != 0:
            raise CoefficientError(f"{self.id}: BAB layout requires a1 = 0")

    @staticmethod
    def kernel_lengths(layout_stages: int) -> Tuple[int, int]:
        """(a, b) kernel sizes of an ABA layout with the given stage count"""
        return (layout_stages + 2) // 2, (layout_stages + 1) // 2

    @property
    def layout_stages(self) -> int:
        """Stages of the underlying ABA layout (BAB adds a leading a1 = 0)"""
        return self.stages + 1 if self.kind == MethodKind.BAB else self.stages

    @property
    def approximate_b(self) -> bool:
        return self.kind == MethodKind.ABAH

    @property
    def classical_order(self) -> int:
        return min(self.order)

    def expand_palindrome(self) -> Tuple[List[CoefficientValue], List[CoefficientValue]]:
        return expand_palindrome(self)


def expand_palindrome(method: SplittingMethod) -> Tuple[List[CoefficientValue], List[CoefficientValue]]:
    """Full a- and b-sequences of the composition"""
    s = method.layout_stages
    a_list = _palindrome(method.a_kernel, s + 1)
    b_list = _palindrome(method.b_kernel, s)

    if len(a_list) != s + 1 or len(b_list) != s:
        raise CoefficientError(f"{method.id}: expansion does not match {s} stages")

    return a_list, b_list


def symbol_sequence(method: SplittingMethod) -> List[str]:
    """Symbolic layout such as ['a1', 'b1', 'a2', ..., 'a1']"""
    s = method.layout_stages
    a_names = _palindrome([f"a{i + 1}" for i in range(len(method.a_kernel))], s + 1)
    b_names = _palindrome([f"b{i + 1}" for i in range(len(method.b_kernel))], s)

    sequence = []
    for i in range(s):
        sequence.extend([a_names[i], b_names[i]])
    sequence.append(a_names[s])
    return sequence


def exact_sequences(method: SplittingMethod, dps: int = DEFAULT_DPS) -> Tuple[list, list]:
    """Expanded sequences as mpmath values at dps digits"""
    a_list, b_list = expand_palindrome(method)
    return [a.exact(dps) for a in a_list], [b.exact(dps) for b in b_list]


def working_sequences(method: SplittingMethod) -> Tuple[List[float], List[float]]:
    """Expanded sequences in native double precision"""
    a_list, b_list = expand_palindrome(method)
    return [a.working for a in a_list], [b.working for b in b_list]


@dataclass(frozen=True)
class NodeVector:
    """Prefix sums c_i of the expanded a-sequence"""
    c: Tuple = field(default_factory=tuple)

    @property
    def final(self):
        return self.c[-1]

    def __len__(self):
        return len(self.c)


def prefix_sums(values: Sequence) -> list:
    sums = []
    total = values[0] * 0
    for value in values:
        total = total + value
        sums.append(total)
    return sums


def nodes(method: SplittingMethod, dps: int = DEFAULT_DPS) -> NodeVector:
    """Node vector c_1..c_{s+1} evaluated at dps digits"""
    with mpmath.workdps(dps):
        a_values, _ = exact_sequences(method, dps)
        return NodeVector(tuple(prefix_sums(a_values)))


def consistency_residuals(method: SplittingMethod, dps: int = DEFAULT_DPS) -> Tuple:
    """(sum a - 1, sum b - 1) at dps digits"""
    with mpmath.workdps(dps):
        a_values, b_values = exact_sequences(method, dps)
        return mpmath.fsum(a_values) - 1, mpmath.fsum(b_values) - 1


def negative_coefficients(method: SplittingMethod) -> Tuple[List[str], List[str]]:
    """Names of the negative a- and b-kernel entries"""
    a_neg = [f"a{i + 1}" for i, a in enumerate(method.a_kernel) if a.working < 0]
    b_neg = [f"b{i + 1}" for i, b in enumerate(method.b_kernel) if b.working < 0]
    return a_neg, b_neg


def format_catalog(methods: Sequence[SplittingMethod]) -> str:
    """Plain-text method table, one coefficient per line"""
    lines = ["# id kind order stages cubic"]
    for method in methods:
        order = ",".join(str(r) for r in method.order)
        cubic = "yes" if method.cubic_condition else "no"
        lines.append(f"{method.id} {method.kind.value} ({order}) {method.stages} {cubic}")
        for i, value in enumerate(method.a_kernel):
            lines.append(f"  a{i + 1} = {value.decimal}")
        for i, value in enumerate(method.b_kernel):
            lines.append(f"  b{i + 1} = {value.decimal}")
    return "\n".join(lines) + "\n"
