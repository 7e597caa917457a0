#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
精度模式与浮点计算上下文

Precision 决定存储宽度、计算宽度和主权重宽度；FloatContext 在给定宽度上
执行逐运算舍入的数组运算，并累计 NumericEvents（上溢、下溢为零、NaN）。
所有高层模块（层、损失、优化器、分析工具）都通过 FloatContext 做算术。
"""

import os
from dataclasses import dataclass, asdict
from enum import Enum
from typing import Dict, Optional, Union

import numpy as np
from joblib import Parallel, delayed

from utils.exceptions import ContractViolationError
from utils.logger import get_logger

logger = get_logger('tensor.precision')

THREADS_ENV_VAR = 'HALFLAB_THREADS'

# 行数少于该值时不拆分线程
_MIN_ROWS_PER_THREAD = 8


class Precision(str, Enum):
    """
    精度模式

    PURE16: 存储、计算、权重更新都在 binary16
    PURE32: 全部在 binary32
    MIXED: 激活与梯度以 binary16 存储，内核在 binary32 计算后舍入一次，
           主权重与优化器矩在 binary32
    """
    PURE16 = 'pure16'
    PURE32 = 'pure32'
    MIXED = 'mixed'

    @classmethod
    def parse(cls, value: Union['Precision', str]) -> 'Precision':
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            error_msg = f"未知的精度模式: {value}"
            logger.error(error_msg)
            raise ContractViolationError(error_msg)

    @property
    def storage_dtype(self) -> np.dtype:
        return np.dtype(np.float32 if self is Precision.PURE32 else np.float16)

    @property
    def compute_dtype(self) -> np.dtype:
        return np.dtype(np.float16 if self is Precision.PURE16 else np.float32)

    @property
    def master_dtype(self) -> np.dtype:
        return np.dtype(np.float16 if self is Precision.PURE16 else np.float32)

    @property
    def machine_epsilon(self) -> float:
        """存储宽度上 1.0 与下一个可表示数之间的间隔"""
        return float(np.finfo(self.storage_dtype).eps)

    @property
    def tag_byte(self) -> int:
        return _TAG_BYTES[self]

    @classmethod
    def from_tag_byte(cls, tag: int) -> 'Precision':
        for precision, byte in _TAG_BYTES.items():
            if byte == tag:
                return precision
        raise ContractViolationError(f"未知的精度标签字节: {tag}")


_TAG_BYTES = {Precision.PURE16: 0x10, Precision.PURE32: 0x20, Precision.MIXED: 0x30}


@dataclass
class NumericEvents:
    """单次内核调用（或一串调用）的数值事件计数"""
    overflow_count: int = 0
    underflow_to_zero_count: int = 0
    nan_count: int = 0

    def merge(self, other: 'NumericEvents') -> 'NumericEvents':
        """就地累加另一组计数并返回自身"""
        self.overflow_count += other.overflow_count
        self.underflow_to_zero_count += other.underflow_to_zero_count
        self.nan_count += other.nan_count
        return self

    def __add__(self, other: 'NumericEvents') -> 'NumericEvents':
        return NumericEvents().merge(self).merge(other)

    @property
    def total(self) -> int:
        return self.overflow_count + self.underflow_to_zero_count + self.nan_count

    def any(self) -> bool:
        return self.total > 0

    def to_dict(self) -> Dict[str, int]:
        return asdict(self)


def kernel_threads() -> int:
    """读取内核线程数（环境变量 HALFLAB_THREADS，默认 1）"""
    raw = os.environ.get(THREADS_ENV_VAR)
    if not raw:
        return 1
    try:
        threads = int(raw)
    except ValueError:
        logger.warning(f"{THREADS_ENV_VAR}={raw!r} 不是整数，使用单线程")
        return 1
    return max(threads, 1)


def _matmul_rows(a: np.ndarray, b: np.ndarray, dtype: np.dtype, finite_inputs: bool):
    """
    对若干行做顺序累加的矩阵乘法

    每个输出元素按 k 升序累加，每次乘法和加法都在 dtype 上舍入。
    返回 (结果, 乘积下溢为零的个数)。
    """
    m, k = a.shape
    n = b.shape[1]
    flushed = 0
    acc = None
    for kk in range(k):
        col = a[:, kk]
        row = b[kk, :]
        prod = np.multiply(col[:, None], row[None, :], dtype=dtype)
        zeros = prod.size - np.count_nonzero(prod)
        if zeros:
            if finite_inputs:
                za = col.size - np.count_nonzero(col)
                zb = row.size - np.count_nonzero(row)
                flushed += zeros - (za * n + zb * m - za * zb)
            else:
                flushed += int(np.count_nonzero(
                    (prod == 0) & (col != 0)[:, None] & (row != 0)[None, :]))
        if acc is None:
            acc = prod
        else:
            np.add(acc, prod, out=acc, dtype=dtype)
    return acc, flushed


class FloatContext:
    """
    逐运算舍入的数组算术

    每个方法先把操作数转换到计算宽度，完成一个基本运算，再把结果舍入到
    存储宽度（两者不同时即 MIXED 模式），同时把事件累计到 self.events。
    binary16 上的 sqrt、exp、log 在 binary64 上求值后舍入一次。
    """

    def __init__(self, compute_dtype, storage_dtype=None):
        self.dtype = np.dtype(compute_dtype)
        self.storage_dtype = np.dtype(storage_dtype if storage_dtype is not None else compute_dtype)
        self.events = NumericEvents()
        self._wide_transcendentals = self.dtype == np.float16

    @classmethod
    def for_precision(cls, precision: Union[Precision, str]) -> 'FloatContext':
        precision = Precision.parse(precision)
        return cls(precision.compute_dtype, precision.storage_dtype)

    @classmethod
    def for_dtype(cls, dtype) -> 'FloatContext':
        """单一宽度的上下文（binary64 即分析用的参照上下文）"""
        return cls(dtype, dtype)

    def reset_events(self) -> NumericEvents:
        """返回当前计数并清零"""
        events, self.events = self.events, NumericEvents()
        return events

    # ------------------------------------------------------------------
    # 转换
    # ------------------------------------------------------------------
    def cast(self, x) -> np.ndarray:
        """转换到计算宽度（从较窄的存储宽度上转是精确的）"""
        return np.asarray(x).astype(self.dtype, copy=False)

    def const(self, value: float):
        """把常数舍入到存储宽度，再以计算宽度表示"""
        rounded = np.asarray(value, dtype=np.float64).astype(self.storage_dtype)
        return self.dtype.type(rounded)

    def round_to(self, x, dtype) -> np.ndarray:
        """舍入到指定宽度并统计由此产生的上溢和下溢"""
        x = np.asarray(x)
        dtype = np.dtype(dtype)
        with np.errstate(all='ignore'):
            out = x.astype(dtype)
        if dtype.itemsize < x.dtype.itemsize:
            self._tally_overflow(out, x)
            zeros = out == 0
            if zeros.any():
                self.events.underflow_to_zero_count += int(np.count_nonzero(zeros & (x != 0)))
        return out

    def store(self, x) -> np.ndarray:
        return self.round_to(x, self.storage_dtype)

    def _finish(self, result: np.ndarray) -> np.ndarray:
        if self.storage_dtype != self.dtype:
            return self.cast(self.store(result))
        return result

    # ------------------------------------------------------------------
    # 事件统计
    # ------------------------------------------------------------------
    def _tally_overflow(self, result: np.ndarray, *operands: np.ndarray) -> None:
        if np.isfinite(result).all():
            return
        inf_mask = np.isinf(result)
        nan_mask = np.isnan(result)
        for op in operands:
            inf_mask = inf_mask & np.isfinite(op)
            nan_mask = nan_mask & ~np.isnan(op)
        self.events.overflow_count += int(np.count_nonzero(inf_mask))
        self.events.nan_count += int(np.count_nonzero(nan_mask))

    def _tally_flush(self, result: np.ndarray, nonzero_mask) -> None:
        zeros = result == 0
        if zeros.any():
            self.events.underflow_to_zero_count += int(np.count_nonzero(zeros & nonzero_mask))

    # ------------------------------------------------------------------
    # 逐元素运算
    # ------------------------------------------------------------------
    def add(self, a, b) -> np.ndarray:
        a, b = self.cast(a), self.cast(b)
        with np.errstate(all='ignore'):
            r = np.add(a, b, dtype=self.dtype)
        self._tally_overflow(r, a, b)
        return self._finish(r)

    def sub(self, a, b) -> np.ndarray:
        a, b = self.cast(a), self.cast(b)
        with np.errstate(all='ignore'):
            r = np.subtract(a, b, dtype=self.dtype)
        self._tally_overflow(r, a, b)
        return self._finish(r)

    def mul(self, a, b) -> np.ndarray:
        a, b = self.cast(a), self.cast(b)
        with np.errstate(all='ignore'):
            r = np.multiply(a, b, dtype=self.dtype)
        self._tally_overflow(r, a, b)
        self._tally_flush(r, (a != 0) & (b != 0))
        return self._finish(r)

    def div(self, a, b) -> np.ndarray:
        a, b = self.cast(a), self.cast(b)
        with np.errstate(all='ignore'):
            r = np.divide(a, b, dtype=self.dtype)
        self._tally_overflow(r, a, b)
        self._tally_flush(r, (a != 0) & np.isfinite(b))
        return self._finish(r)

    def _transcendental(self, func, x: np.ndarray) -> np.ndarray:
        with np.errstate(all='ignore'):
            if self._wide_transcendentals:
                return func(x.astype(np.float64)).astype(self.dtype)
            return func(x, dtype=self.dtype)

    def sqrt(self, x) -> np.ndarray:
        x = self.cast(x)
        r = self._transcendental(np.sqrt, x)
        self._tally_overflow(r, x)
        return self._finish(r)

    def exp(self, x) -> np.ndarray:
        x = self.cast(x)
        r = self._transcendental(np.exp, x)
        self._tally_overflow(r, x)
        self._tally_flush(r, np.isfinite(x))
        return self._finish(r)

    def log(self, x) -> np.ndarray:
        x = self.cast(x)
        r = self._transcendental(np.log, x)
        self._tally_overflow(r, x)
        return self._finish(r)

    def neg(self, x) -> np.ndarray:
        return np.negative(self.cast(x))

    def abs(self, x) -> np.ndarray:
        return np.abs(self.cast(x))

    def maximum(self, a, b) -> np.ndarray:
        """相等时返回第一个操作数，NaN 传播"""
        a, b = self.cast(a), self.cast(b)
        return np.where((a >= b) | np.isnan(a), a, b)

    def minimum(self, a, b) -> np.ndarray:
        a, b = self.cast(a), self.cast(b)
        return np.where((a <= b) | np.isnan(a), a, b)

    def compare(self, a, b) -> np.ndarray:
        a, b = self.cast(a), self.cast(b)
        out = np.where(a > b, 1.0, np.where(a < b, -1.0, np.where(a == b, 0.0, np.nan)))
        return out.astype(self.dtype)

    # ------------------------------------------------------------------
    # 归约与矩阵乘法
    # ------------------------------------------------------------------
    def sum(self, x, axis: Optional[int] = None) -> np.ndarray:
        """
        沿一个轴按下标升序逐项累加，每次加法都在计算宽度上舍入

        Args:
            x: 输入数组
            axis: 归约轴，None 表示按行主序展平后整体求和

        Returns:
            np.ndarray: 去掉该轴后的结果
        """
        x = self.cast(x)
        if axis is None:
            x = x.reshape(-1)
            axis = 0
        if not -x.ndim <= axis < x.ndim:
            raise ContractViolationError(f"归约轴 {axis} 超出维数 {x.ndim}")
        if x.shape[axis] == 0:
            raise ContractViolationError("不能对长度为 0 的轴求和")
        # cumsum 逐项顺序累加，不做成对求和
        with np.errstate(all='ignore'):
            running = np.cumsum(x, axis=axis, dtype=self.dtype)
        r = np.take(running, -1, axis=axis)
        if not np.isfinite(r).all():
            finite_lanes = np.isfinite(x).all(axis=axis)
            clean_lanes = ~np.isnan(x).any(axis=axis)
            self.events.overflow_count += int(np.count_nonzero(np.isinf(r) & finite_lanes))
            self.events.nan_count += int(np.count_nonzero(np.isnan(r) & clean_lanes))
        return self._finish(r)

    def mean(self, x, axis: Optional[int] = None) -> np.ndarray:
        """顺序求和后做一次除法"""
        x = self.cast(x)
        count = x.size if axis is None else x.shape[axis]
        return self.div(self.sum(x, axis=axis), self.const(count))

    def matmul(self, a, b) -> np.ndarray:
        """
        矩阵乘法 [m×k] @ [k×n]

        每个输出元素按 k 升序累加，乘法与加法逐次舍入；多线程时只按行拆分，
        因此结果与线程数无关。
        """
        a, b = self.cast(a), self.cast(b)
        if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
            error_msg = f"矩阵乘法形状不匹配: {a.shape} @ {b.shape}"
            logger.error(error_msg)
            raise ContractViolationError(error_msg)
        if a.shape[1] == 0:
            raise ContractViolationError("矩阵乘法的内维必须为正")

        finite_inputs = bool(np.isfinite(a).all() and np.isfinite(b).all())
        threads = kernel_threads()
        m = a.shape[0]
        with np.errstate(all='ignore'):
            if threads > 1 and m >= threads * _MIN_ROWS_PER_THREAD:
                blocks = np.array_split(np.arange(m), threads)
                parts = Parallel(n_jobs=threads, prefer='threads')(
                    delayed(_matmul_rows)(a[rows], b, self.dtype, finite_inputs) for rows in blocks
                )
                out = np.concatenate([p[0] for p in parts], axis=0)
                flushed = sum(p[1] for p in parts)
            else:
                out, flushed = _matmul_rows(a, b, self.dtype, finite_inputs)

        self.events.underflow_to_zero_count += int(flushed)
        if not np.isfinite(out).all():
            # 输出 (i, j) 只依赖 a 的第 i 行与 b 的第 j 列
            finite_lanes = np.isfinite(a).all(axis=1)[:, None] & np.isfinite(b).all(axis=0)[None, :]
            clean_lanes = ~np.isnan(a).any(axis=1)[:, None] & ~np.isnan(b).any(axis=0)[None, :]
            self.events.overflow_count += int(np.count_nonzero(np.isinf(out) & finite_lanes))
            self.events.nan_count += int(np.count_nonzero(np.isnan(out) & clean_lanes))
        return self._finish(out)
