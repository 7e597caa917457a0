#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
binary16 基本运算模块

每个基本运算先在更宽的精度（有理数或 binary64）上求出结果，再经
round_to_half 舍入一次：不做融合运算，也不跨两个运算保留宽中间值。
加减乘除在有理数上精确计算；sqrt、exp、log 取 binary64 库函数结果后舍入。
"""

import math
from enum import Enum
from fractions import Fraction
from typing import Optional, Union

from .half import (
    Half, round_to_half, SIGN_MASK, CANONICAL_NAN_BITS,
    POSITIVE_INFINITY_BITS, NEGATIVE_INFINITY_BITS,
)

NAN = Half(CANONICAL_NAN_BITS)
POSITIVE_INFINITY = Half(POSITIVE_INFINITY_BITS)
NEGATIVE_INFINITY = Half(NEGATIVE_INFINITY_BITS)
ONE = Half(0x3C00)
MINUS_ONE = Half(0xBC00)
ZERO = Half(0x0000)


class ArithOp(str, Enum):
    """half_arith 支持的运算名"""
    ADD = 'add'
    SUB = 'sub'
    MUL = 'mul'
    DIV = 'div'
    SQRT = 'sqrt'
    EXP = 'exp'
    LOG = 'log'
    NEG = 'neg'
    ABS = 'abs'
    MAX = 'max'
    MIN = 'min'
    COMPARE = 'compare'

    @property
    def is_unary(self) -> bool:
        return self in UNARY_OPS


UNARY_OPS = frozenset({ArithOp.SQRT, ArithOp.EXP, ArithOp.LOG, ArithOp.NEG, ArithOp.ABS})
BINARY_OPS = frozenset(set(ArithOp) - UNARY_OPS)


def _infinity(negative: bool) -> Half:
    return NEGATIVE_INFINITY if negative else POSITIVE_INFINITY


def _add_exact(a: Half, b: Half) -> Half:
    # 两个有限操作数
    total = a.to_fraction() + b.to_fraction()
    if total == 0:
        # 精确和为零时，仅当两个操作数都是 -0 才得到 -0
        both_negative = a.sign_bit and b.sign_bit
        return Half(SIGN_MASK if both_negative else 0)
    return round_to_half(total)


def _add(a: Half, b: Half) -> Half:
    if a.is_finite() and b.is_finite():
        return _add_exact(a, b)
    return round_to_half(a.to_float() + b.to_float())


def _mul(a: Half, b: Half) -> Half:
    negative = bool(a.sign_bit ^ b.sign_bit)
    if a.is_finite() and b.is_finite():
        product = a.to_fraction() * b.to_fraction()
        if product == 0:
            return Half(SIGN_MASK if negative else 0)
        return round_to_half(product)
    if a.is_zero() or b.is_zero():
        return NAN
    return _infinity(negative)


def _div(a: Half, b: Half) -> Half:
    negative = bool(a.sign_bit ^ b.sign_bit)
    if b.is_zero():
        if a.is_zero():
            return NAN
        return _infinity(negative)
    if a.is_infinite():
        return NAN if b.is_infinite() else _infinity(negative)
    if b.is_infinite():
        return Half(SIGN_MASK if negative else 0)
    quotient = a.to_fraction() / b.to_fraction()
    if quotient == 0:
        return Half(SIGN_MASK if negative else 0)
    return round_to_half(quotient)


def _sqrt(a: Half) -> Half:
    if a.is_zero():
        return a
    if a.sign_bit:
        return NAN
    if a.is_infinite():
        return POSITIVE_INFINITY
    return round_to_half(math.sqrt(a.to_float()))


def _exp(a: Half) -> Half:
    if a.is_infinite():
        return ZERO if a.sign_bit else POSITIVE_INFINITY
    try:
        return round_to_half(math.exp(a.to_float()))
    except OverflowError:
        return POSITIVE_INFINITY


def _log(a: Half) -> Half:
    if a.is_zero():
        return NEGATIVE_INFINITY
    if a.sign_bit:
        return NAN
    if a.is_infinite():
        return POSITIVE_INFINITY
    return round_to_half(math.log(a.to_float()))


def _compare(a: Half, b: Half) -> Half:
    x, y = a.to_float(), b.to_float()
    if x > y:
        return ONE
    if x < y:
        return MINUS_ONE
    return ZERO


def half_arith(op: Union[ArithOp, str], a: Half, b: Optional[Half] = None) -> Half:
    """
    执行一个正确舍入的 binary16 基本运算

    Args:
        op: 运算名，取值见 ArithOp
        a: 第一个操作数
        b: 第二个操作数，一元运算时省略

    Returns:
        Half: 运算结果；任一操作数为 NaN 时返回规范 NaN

    Raises:
        ValueError: 运算名未知，或操作数个数与运算不符
    """
    op = ArithOp(op)
    if op.is_unary:
        if b is not None:
            raise ValueError(f"一元运算 {op.value} 不接受第二个操作数")
    elif b is None:
        raise ValueError(f"二元运算 {op.value} 需要第二个操作数")

    if a.is_nan() or (b is not None and b.is_nan()):
        return NAN

    if op is ArithOp.ADD:
        return _add(a, b)
    if op is ArithOp.SUB:
        return _add(a, -b)
    if op is ArithOp.MUL:
        return _mul(a, b)
    if op is ArithOp.DIV:
        return _div(a, b)
    if op is ArithOp.SQRT:
        return _sqrt(a)
    if op is ArithOp.EXP:
        return _exp(a)
    if op is ArithOp.LOG:
        return _log(a)
    if op is ArithOp.NEG:
        return -a
    if op is ArithOp.ABS:
        return Half(a.bits & ~SIGN_MASK)
    if op is ArithOp.MAX:
        # 相等（包括 ±0）时返回第一个操作数
        return a if a.to_float() >= b.to_float() else b
    if op is ArithOp.MIN:
        return a if a.to_float() <= b.to_float() else b
    return _compare(a, b)


def exact_result(op: Union[ArithOp, str], a: Half, b: Optional[Half] = None) -> Union[Fraction, float]:
    """
    返回有限操作数上的宽精度结果（舍入之前），供测试对照

    加减乘除返回精确有理数，其余运算返回 binary64 结果。
    """
    op = ArithOp(op)
    x = a.to_fraction()
    y = b.to_fraction() if b is not None else None
    if op is ArithOp.ADD:
        return x + y
    if op is ArithOp.SUB:
        return x - y
    if op is ArithOp.MUL:
        return x * y
    if op is ArithOp.DIV:
        return x / y
    if op is ArithOp.SQRT:
        return math.sqrt(float(x))
    if op is ArithOp.EXP:
        return math.exp(float(x))
    if op is ArithOp.LOG:
        return math.log(float(x))
    raise ValueError(f"{op.value} 没有需要舍入的宽精度结果")
