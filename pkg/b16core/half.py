#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
binary16 数值语义模块

以 16 位位模式表示 IEEE-754 binary16 标量（1 位符号、5 位指数、10 位尾数），
提供就近偶数舍入、分类和全体有限值枚举。舍入在有理数上精确进行，
因此可以作为数组内核的独立参照。
"""

import math
import struct
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import List, Union

import numpy as np

# 格式常量
EXPONENT_BIAS = 15
FRACTION_BITS = 10
MAX_FINITE = 65504.0
MIN_NORMAL = 2.0 ** -14
MIN_SUBNORMAL = 2.0 ** -24
# 单位舍入（机器精度表中给出的 4.88E-04）
MACHINE_EPSILON = 2.0 ** -11
# 1.0 与下一个可表示数之间的间隔
ULP_OF_ONE = 2.0 ** -10
# 恰好舍入为无穷的最小幅值（65504 与 65536 的中点）
OVERFLOW_THRESHOLD = 65520.0

SIGN_MASK = 0x8000
EXPONENT_MASK = 0x7C00
FRACTION_MASK = 0x03FF
POSITIVE_INFINITY_BITS = 0x7C00
NEGATIVE_INFINITY_BITS = 0xFC00
CANONICAL_NAN_BITS = 0x7E00
MAX_FINITE_BITS = 0x7BFF

Real = Union[int, float, Fraction, np.floating]


class FpKind(Enum):
    """位模式的数值类别"""
    ZERO = 'zero'
    SUBNORMAL = 'subnormal'
    NORMAL = 'normal'
    INFINITE = 'infinite'
    NAN = 'nan'


@dataclass(frozen=True)
class FpClass:
    """分类结果：类别与符号（'+' 或 '-'）"""
    kind: FpKind
    sign: str

    def __str__(self) -> str:
        return f"({self.kind.value}, {self.sign})"


@dataclass(frozen=True)
class Half:
    """
    binary16 标量，按位模式保存，具有值语义

    Attributes:
        bits: 0 到 65535 之间的无符号 16 位整数
    """
    bits: int

    def __post_init__(self):
        if not isinstance(self.bits, (int, np.integer)) or not 0 <= int(self.bits) <= 0xFFFF:
            raise ValueError(f"binary16 位模式必须在 0..65535 之间: {self.bits!r}")
        object.__setattr__(self, 'bits', int(self.bits))

    @property
    def sign_bit(self) -> int:
        return self.bits >> 15

    @property
    def exponent_field(self) -> int:
        return (self.bits & EXPONENT_MASK) >> FRACTION_BITS

    @property
    def fraction_field(self) -> int:
        return self.bits & FRACTION_MASK

    def is_nan(self) -> bool:
        return self.exponent_field == 0x1F and self.fraction_field != 0

    def is_infinite(self) -> bool:
        return self.exponent_field == 0x1F and self.fraction_field == 0

    def is_finite(self) -> bool:
        return self.exponent_field != 0x1F

    def is_zero(self) -> bool:
        return (self.bits & ~SIGN_MASK) == 0

    def to_float(self) -> float:
        """
        解码为 Python float（binary64），对所有有限值精确

        Returns:
            float: 数值，NaN 与 ±∞ 按 IEEE 规则给出
        """
        sign = -1.0 if self.sign_bit else 1.0
        exponent = self.exponent_field
        fraction = self.fraction_field
        if exponent == 0x1F:
            return math.nan if fraction else sign * math.inf
        if exponent == 0:
            return sign * math.ldexp(fraction, -24)
        return sign * math.ldexp(1024 + fraction, exponent - EXPONENT_BIAS - FRACTION_BITS)

    def to_fraction(self) -> Fraction:
        """有限值的精确有理数表示"""
        if not self.is_finite():
            raise ValueError("非有限的 binary16 值没有有理数表示")
        return Fraction(self.to_float())

    def to_float32(self) -> np.float32:
        """上转为 binary32（精确嵌入）"""
        return np.float32(self.to_float())

    def to_bytes(self) -> bytes:
        """按小端无符号 16 位整数编码"""
        return struct.pack('<H', self.bits)

    @classmethod
    def from_bytes(cls, data: bytes) -> 'Half':
        return cls(struct.unpack('<H', data)[0])

    def __float__(self) -> float:
        return self.to_float()

    def __neg__(self) -> 'Half':
        return Half(self.bits ^ SIGN_MASK)

    def __repr__(self) -> str:
        return f"Half(0x{self.bits:04X} = {self.to_float()!r})"


def _signed_zero(negative: bool) -> Half:
    return Half(SIGN_MASK if negative else 0)


def round_to_half(x: Real) -> Half:
    """
    就近偶数舍入到 binary16

    对有理数精确执行：先求出 x 所在的二进制区间，按该区间的量子
    缩放后用银行家舍入取整。幅值 >= 65520 得到 ±∞，幅值 <= 2^-25
    （含恰好等于时的偶数舍入）得到 ±0。

    Args:
        x: 实数（int、float、Fraction 或 numpy 浮点标量）

    Returns:
        Half: 舍入结果，NaN 映射为规范静默 NaN
    """
    if isinstance(x, Fraction):
        negative = x < 0
        magnitude = abs(x)
    else:
        value = float(x)
        if math.isnan(value):
            return Half(CANONICAL_NAN_BITS)
        negative = math.copysign(1.0, value) < 0
        if math.isinf(value):
            return Half(NEGATIVE_INFINITY_BITS if negative else POSITIVE_INFINITY_BITS)
        magnitude = abs(Fraction(value))

    if magnitude == 0:
        return _signed_zero(negative)

    numerator, denominator = magnitude.numerator, magnitude.denominator
    exponent = numerator.bit_length() - denominator.bit_length()
    if exponent >= 0:
        if numerator < (denominator << exponent):
            exponent -= 1
    elif (numerator << -exponent) < denominator:
        exponent -= 1

    # 低于最小正规数时使用次正规数的固定量子 2^-24
    exponent = max(exponent, 1 - EXPONENT_BIAS)
    quantum_exponent = exponent - FRACTION_BITS
    if quantum_exponent >= 0:
        scaled = magnitude / (1 << quantum_exponent)
    else:
        scaled = magnitude * (1 << -quantum_exponent)
    significand = round(scaled)  # Fraction.__round__ 为就近偶数

    if significand == 0:
        return _signed_zero(negative)
    if significand == 2048:
        exponent += 1
        significand = 1024
    if exponent > EXPONENT_BIAS:
        return Half(NEGATIVE_INFINITY_BITS if negative else POSITIVE_INFINITY_BITS)

    sign = SIGN_MASK if negative else 0
    if significand < 1024:
        return Half(sign | significand)
    exponent_field = exponent + EXPONENT_BIAS
    return Half(sign | (exponent_field << FRACTION_BITS) | (significand - 1024))


def classify(a: Half) -> FpClass:
    """
    对任意位模式分类

    Args:
        a: binary16 值

    Returns:
        FpClass: 类别与符号
    """
    sign = '-' if a.sign_bit else '+'
    exponent, fraction = a.exponent_field, a.fraction_field
    if exponent == 0x1F:
        kind = FpKind.NAN if fraction else FpKind.INFINITE
    elif exponent == 0:
        kind = FpKind.SUBNORMAL if fraction else FpKind.ZERO
    else:
        kind = FpKind.NORMAL
    return FpClass(kind=kind, sign=sign)


def finite_bit_patterns(dedupe_signed_zero: bool = True) -> np.ndarray:
    """
    按数值升序排列的全部有限位模式

    负数部分从 -65504（0xFBFF）递减到 -0（0x8000），正数部分从 +0 到 +65504。

    Args:
        dedupe_signed_zero: 为True时去掉 -0，结果长度 63487；否则为 63488

    Returns:
        np.ndarray: uint16 位模式数组
    """
    negative_stop = 0x8000 if dedupe_signed_zero else 0x7FFF
    negatives = np.arange(0xFBFF, negative_stop, -1, dtype=np.uint32)
    positives = np.arange(0x0000, MAX_FINITE_BITS + 1, dtype=np.uint32)
    return np.concatenate([negatives, positives]).astype(np.uint16)


def enumerate_finite(dedupe_signed_zero: bool = True) -> List[Half]:
    """
    枚举全部有限 binary16 值（升序）

    Args:
        dedupe_signed_zero: 是否合并 ±0（合并后共 63487 个）

    Returns:
        List[Half]: 升序排列的 Half 序列，-0 与 +0 同时存在时相邻
    """
    return [Half(int(bits)) for bits in finite_bit_patterns(dedupe_signed_zero)]


def bits_to_array(bits: np.ndarray) -> np.ndarray:
    """将 uint16 位模式数组解释为 float16 数组"""
    return np.ascontiguousarray(bits, dtype=np.uint16).view(np.float16)


def array_to_bits(values: np.ndarray) -> np.ndarray:
    """将 float16 数组解释为 uint16 位模式数组"""
    return np.ascontiguousarray(values, dtype=np.float16).view(np.uint16)
