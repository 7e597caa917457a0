# -*- coding: utf-8 -*-
"""
逐标量的 binary16 参照实现

scalar_* 只用 half_arith 完成每一次舍入，用来与向量化内核逐位比较；
reference_arith 则不经过 half_arith，直接把宽精度结果做一次就近偶数舍入，
用来检验 half_arith 本身（仅针对有限操作数）。
"""

import math

import numpy as np

from b16core.arith import ArithOp, exact_result, half_arith
from b16core.half import CANONICAL_NAN_BITS, SIGN_MASK, Half, round_to_half

_NAN = Half(CANONICAL_NAN_BITS)


def _zero(negative: bool) -> Half:
    return Half(SIGN_MASK if negative else 0)


def _infinity(negative: bool) -> Half:
    return Half(0xFC00 if negative else 0x7C00)


def _order(a: Half, b: Half) -> int:
    x, y = a.to_fraction(), b.to_fraction()
    return (x > y) - (x < y)


def reference_arith(op, a: Half, b: Half = None) -> Half:
    """有限操作数上的参照结果：有理数或 binary64 宽结果舍入一次，零与无穷的符号单独确定"""
    op = ArithOp(op)
    if op in (ArithOp.ADD, ArithOp.SUB):
        exact = exact_result(op, a, b)
        if exact == 0:
            b_negative = bool(b.sign_bit) if op is ArithOp.ADD else not b.sign_bit
            return _zero(a.is_zero() and b.is_zero() and bool(a.sign_bit) and b_negative)
        return round_to_half(exact)
    if op is ArithOp.MUL:
        exact = exact_result(op, a, b)
        if exact == 0:
            return _zero(bool(a.sign_bit ^ b.sign_bit))
        return round_to_half(exact)
    if op is ArithOp.DIV:
        negative = bool(a.sign_bit ^ b.sign_bit)
        if b.is_zero():
            return _NAN if a.is_zero() else _infinity(negative)
        if a.is_zero():
            return _zero(negative)
        return round_to_half(exact_result(op, a, b))
    if op is ArithOp.SQRT:
        if a.is_zero():
            return a
        return _NAN if a.sign_bit else round_to_half(exact_result(op, a))
    if op is ArithOp.EXP:
        try:
            return round_to_half(exact_result(op, a))
        except OverflowError:
            return _infinity(False)
    if op is ArithOp.LOG:
        if a.is_zero():
            return _infinity(True)
        return _NAN if a.sign_bit else round_to_half(exact_result(op, a))
    if op is ArithOp.NEG:
        return _zero(not a.sign_bit) if a.is_zero() else round_to_half(-a.to_fraction())
    if op is ArithOp.ABS:
        return _zero(False) if a.is_zero() else round_to_half(abs(a.to_fraction()))
    if op is ArithOp.MAX:
        return b if _order(a, b) < 0 else a
    if op is ArithOp.MIN:
        return b if _order(a, b) > 0 else a
    return round_to_half(_order(a, b))


def same_result(actual: Half, expected: Half) -> bool:
    """逐位相同；NaN 只要求两边都是 NaN"""
    if expected.is_nan():
        return actual.is_nan()
    return actual.bits == expected.bits


def to_half(value) -> Half:
    return Half(int(np.asarray(value, dtype=np.float16).reshape(()).view(np.uint16)))


def to_array(halves, shape) -> np.ndarray:
    bits = np.array([h.bits for h in halves], dtype=np.uint16)
    return bits.view(np.float16).reshape(shape)


def scalar_matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    m, k = a.shape
    n = b.shape[1]
    out = []
    for i in range(m):
        for j in range(n):
            acc = half_arith(ArithOp.MUL, to_half(a[i, 0]), to_half(b[0, j]))
            for kk in range(1, k):
                prod = half_arith(ArithOp.MUL, to_half(a[i, kk]), to_half(b[kk, j]))
                acc = half_arith(ArithOp.ADD, acc, prod)
            out.append(acc)
    return to_array(out, (m, n))


def scalar_sum(values) -> Half:
    flat = np.asarray(values, dtype=np.float16).reshape(-1)
    acc = to_half(flat[0])
    for v in flat[1:]:
        acc = half_arith(ArithOp.ADD, acc, to_half(v))
    return acc


def scalar_conv2d(x: np.ndarray, w: np.ndarray, stride: int = 1, padding: int = 0) -> np.ndarray:
    """按 (c, kh, kw) 升序累加，填充位置的零也参与乘加"""
    n, c, h, wd = x.shape
    f, _, kh, kw = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (wd + 2 * padding - kw) // stride + 1
    out = []
    for b in range(n):
        for ff in range(f):
            for i in range(oh):
                for j in range(ow):
                    acc = None
                    for cc in range(c):
                        for di in range(kh):
                            for dj in range(kw):
                                prod = half_arith(ArithOp.MUL,
                                                  to_half(xp[b, cc, i * stride + di, j * stride + dj]),
                                                  to_half(w[ff, cc, di, dj]))
                                acc = prod if acc is None else half_arith(ArithOp.ADD, acc, prod)
                    out.append(acc)
    return to_array(out, (n, f, oh, ow))
