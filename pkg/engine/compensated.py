#!/usr/bin/env python3
"""
SplitFlow Compensated Summation
Error-carrying accumulation for long integrations
"""

from typing import Tuple

import numpy as np


def compensated_add(value, carry, increment) -> Tuple:
    """value + increment with the lost low-order bits kept in carry

    Works elementwise on numpy arrays and on scalars.
    """
    corrected = increment - carry
    total = value + corrected
    carry = (total - value) - corrected
    return total, carry


def compensated_sum(values) -> float:
    """Sum of a sequence with Kahan compensation"""
    total = 0.0
    carry = 0.0
    for value in values:
        total, carry = compensated_add(total, carry, value)
    return total


def zero_carry(like: np.ndarray) -> np.ndarray:
    return np.zeros_like(like)
