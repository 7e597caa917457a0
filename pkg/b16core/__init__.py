# b16core module for the half-precision training lab
# This module contains binary16 value semantics and correctly rounded scalar arithmetic

from .half import (
    Half,
    FpKind,
    FpClass,
    round_to_half,
    classify,
    enumerate_finite,
    finite_bit_patterns,
    bits_to_array,
    array_to_bits,
    MAX_FINITE,
    MIN_NORMAL,
    MIN_SUBNORMAL,
    MACHINE_EPSILON,
    ULP_OF_ONE,
    OVERFLOW_THRESHOLD,
    CANONICAL_NAN_BITS,
)
from .arith import ArithOp, half_arith, exact_result, UNARY_OPS, BINARY_OPS

__version__ = '0.1.0'

__all__ = [
    'Half', 'FpKind', 'FpClass', 'round_to_half', 'classify', 'enumerate_finite',
    'finite_bit_patterns', 'bits_to_array', 'array_to_bits',
    'MAX_FINITE', 'MIN_NORMAL', 'MIN_SUBNORMAL', 'MACHINE_EPSILON', 'ULP_OF_ONE',
    'OVERFLOW_THRESHOLD', 'CANONICAL_NAN_BITS',
    'ArithOp', 'half_arith', 'exact_result', 'UNARY_OPS', 'BINARY_OPS',
]
