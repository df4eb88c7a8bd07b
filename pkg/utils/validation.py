#!/usr/bin/env python3
"""
SplitFlow Validation Module
Input validation, sanitization and the common exception hierarchy
"""

import math
import re
from pathlib import Path
from typing import Any, Optional, Sequence, Tuple

import structlog

logger = structlog.get_logger('SplitFlow.Validation')


class SplitFlowError(Exception):
    """Base exception for all SplitFlow errors"""
    pass


class ValidationError(SplitFlowError):
    """Raised when user supplied input is rejected"""
    pass


class InputValidator:
    """Validation utilities for command line and config input"""

    METHOD_ID_PATTERN = re.compile(r'^[A-Z][A-Z0-9_]{1,31}$')
    ORDER_PATTERN = re.compile(r'^\s*\d+(\s*,\s*\d+)*\s*$')
    KERNEL_NAME_PATTERN = re.compile(r'^[ab][1-9][0-9]?$')

    # Characters that never appear in method ids, paths or numbers we accept
    DANGEROUS_CHARS = ['<', '>', '"', "'", '`', '\n', '\r', '\0', '\x1a']

    MIN_DPS = 16
    MAX_DPS = 400

    @classmethod
    def validate_method_id(cls, method_id: str) -> bool:
        """Validate a registry method identifier"""
        if not isinstance(method_id, str):
            return False
        return bool(cls.METHOD_ID_PATTERN.match(method_id))

    @classmethod
    def validate_order(cls, order: Sequence[int], symmetric: bool = True) -> bool:
        """Validate a generalized order tuple (r1, ..., rm)"""
        try:
            values = [int(r) for r in order]
        except (TypeError, ValueError):
            return False

        if not values or any(r < 1 for r in values):
            return False

        if symmetric:
            if any(r % 2 for r in values):
                return False
            if any(later > earlier for earlier, later in zip(values, values[1:])):
                return False

        return True

    @classmethod
    def validate_step(cls, tau: Any) -> bool:
        """Validate a step size: finite and nonzero"""
        try:
            value = float(tau)
        except (TypeError, ValueError):
            return False
        return math.isfinite(value) and value != 0.0

    @classmethod
    def validate_dps(cls, dps: Any) -> bool:
        """Validate a decimal precision request"""
        try:
            value = int(dps)
        except (TypeError, ValueError):
            return False
        return cls.MIN_DPS <= value <= cls.MAX_DPS

    @classmethod
    def validate_seed(cls, seed: Any) -> bool:
        """Validate a random seed"""
        try:
            value = int(seed)
        except (TypeError, ValueError):
            return False
        return 0 <= value < 2 ** 32

    @classmethod
    def validate_kernel_name(cls, name: str) -> bool:
        """Validate a kernel coefficient name such as 'a3' or 'b10'"""
        return isinstance(name, str) and bool(cls.KERNEL_NAME_PATTERN.match(name))

    @classmethod
    def sanitize_string(cls, data: str, max_length: int = 256) -> str:
        """Strip dangerous characters and bound the length"""
        if not isinstance(data, str):
            data = str(data)

        for char in cls.DANGEROUS_CHARS:
            data = data.replace(char, '')

        return data.strip()[:max_length]


def parse_order(text: str) -> Tuple[int, ...]:
    """Parse '10,6,4' into (10, 6, 4)"""
    if not isinstance(text, str) or not InputValidator.ORDER_PATTERN.match(text):
        raise ValidationError(f"Invalid order specification: {sanitize_log_message(str(text))}")
    return tuple(int(part) for part in text.split(','))


def parse_float_list(text: str) -> Tuple[float, ...]:
    """Parse a comma separated list of floats"""
    try:
        values = tuple(float(part) for part in str(text).split(',') if part.strip())
    except ValueError:
        raise ValidationError(f"Invalid number list: {sanitize_log_message(str(text))}")
    if not values:
        raise ValidationError("Empty number list")
    return values


class PathValidator:
    """Safe path handling for output files"""

    @classmethod
    def validate_filename(cls, filename: str) -> bool:
        """Validate a bare file name"""
        if not isinstance(filename, str):
            return False

        if not filename or len(filename) > 255:
            return False

        dangerous_chars = ['<', '>', ':', '"', '|', '?', '*', '\0', '/', '\\']
        if any(char in filename for char in dangerous_chars):
            return False

        return filename not in ('.', '..')

    @classmethod
    def output_path(cls, path: str, base_dir: Optional[Path] = None) -> Path:
        """Resolve an output path and make sure its directory exists"""
        if not isinstance(path, str) or not path.strip():
            raise ValidationError("Empty output path")

        target = Path(path)
        if base_dir is not None and not target.is_absolute():
            target = Path(base_dir) / target

        if not cls.validate_filename(target.name):
            raise ValidationError(f"Invalid output file name: {sanitize_log_message(target.name)}")

        try:
            target.parent.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise ValidationError(f"Cannot create output directory {target.parent}: {e}")

        return target

    @classmethod
    def input_path(cls, path: str) -> Path:
        """Resolve an existing input file"""
        target = Path(str(path)).expanduser()
        if not target.is_file():
            raise ValidationError(f"Input file not found: {sanitize_log_message(str(path))}")
        return target


def sanitize_log_message(message: str) -> str:
    """Sanitize log message to prevent log injection"""
    if not isinstance(message, str):
        message = str(message)

    message = message.replace('\n', '\\n').replace('\r', '\\r')
    message = message.replace('\0', '\\0')

    if len(message) > 1000:
        message = message[:997] + "..."

    return message
