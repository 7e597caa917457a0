#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
张量内核模块
提供矩阵乘法、二维卷积、顺序归约和逐元素映射，结果与数值事件计数一起返回
"""

from typing import Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from b16core.arith import ArithOp, UNARY_OPS
from utils.exceptions import ContractViolationError
from utils.logger import get_logger
from .precision import FloatContext, NumericEvents
from .tensor import Tensor

logger = get_logger('tensor.kernels')


def _check_same_precision(*tensors: Tensor) -> None:
    tags = {t.precision for t in tensors}
    if len(tags) != 1:
        error_msg = f"张量精度标签不一致: {sorted(t.value for t in tags)}"
        logger.error(error_msg)
        raise ContractViolationError(error_msg)


def _wrap(ctx: FloatContext, result: np.ndarray, like: Tensor) -> Tuple[Tensor, NumericEvents]:
    data = np.asarray(result).astype(like.precision.storage_dtype)
    return Tensor(data, like.precision), ctx.events


def conv_output_size(size: int, kernel: int, stride: int, padding: int) -> int:
    """floor((size + 2·padding − kernel) / stride) + 1"""
    return (size + 2 * padding - kernel) // stride + 1


def im2col(x: np.ndarray, kh: int, kw: int, stride: int = 1, padding: int = 0):
    """
    把 [N×C×H×W] 输入展开成列矩阵

    Returns:
        (cols, oh, ow): cols 形状为 [N·OH·OW × C·kh·kw]，列顺序为 (c, kh, kw) 升序
    """
    n, c, h, w = x.shape
    oh = conv_output_size(h, kh, stride, padding)
    ow = conv_output_size(w, kw, stride, padding)
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    windows = sliding_window_view(x, (kh, kw), axis=(2, 3))
    windows = windows[:, :, ::stride, ::stride][:, :, :oh, :ow]
    cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(n * oh * ow, c * kh * kw)
    return np.ascontiguousarray(cols), oh, ow


def col2im(ctx: FloatContext, cols: np.ndarray, x_shape, kh: int, kw: int,
           stride: int = 1, padding: int = 0) -> np.ndarray:
    """
    im2col 的伴随：把列矩阵的梯度累加回输入形状

    每个输入位置的贡献按 (kh, kw) 升序逐次相加，在 ctx 的宽度上舍入。
    """
    n, c, h, w = x_shape
    oh = conv_output_size(h, kh, stride, padding)
    ow = conv_output_size(w, kw, stride, padding)
    blocks = ctx.cast(cols).reshape(n, oh, ow, c, kh, kw).transpose(0, 3, 4, 5, 1, 2)
    padded = np.zeros((n, c, h + 2 * padding, w + 2 * padding), dtype=ctx.dtype)
    for i in range(kh):
        for j in range(kw):
            region = (slice(None), slice(None),
                      slice(i, i + stride * oh, stride), slice(j, j + stride * ow, stride))
            padded[region] = ctx.add(padded[region], blocks[:, :, i, j])
    return padded[:, :, padding:padding + h, padding:padding + w]


def conv2d_arrays(ctx: FloatContext, x: np.ndarray, w: np.ndarray,
                  stride: int = 1, padding: int = 0) -> Tuple[np.ndarray, np.ndarray]:
    """
    数组层面的卷积（互相关），返回 (输出 [N×F×OH×OW], 展开的列矩阵)

    列矩阵供反向传播复用。
    """
    if x.ndim != 4 or w.ndim != 4 or x.shape[1] != w.shape[1]:
        error_msg = f"卷积形状不匹配: 输入 {x.shape}, 卷积核 {w.shape}"
        logger.error(error_msg)
        raise ContractViolationError(error_msg)
    if stride < 1 or padding < 0:
        raise ContractViolationError(f"无效的步长或填充: stride={stride}, padding={padding}")
    f, c, kh, kw = w.shape
    n, _, h, wd = x.shape
    if conv_output_size(h, kh, stride, padding) < 1 or conv_output_size(wd, kw, stride, padding) < 1:
        error_msg = f"输入空间尺寸 {h}×{wd} 容不下 {kh}×{kw} 卷积核"
        logger.error(error_msg)
        raise ContractViolationError(error_msg)

    cols, oh, ow = im2col(ctx.cast(x), kh, kw, stride, padding)
    out = ctx.matmul(cols, ctx.cast(w).reshape(f, c * kh * kw).T)
    out = out.reshape(n, oh, ow, f).transpose(0, 3, 1, 2)
    return np.ascontiguousarray(out), cols


def matmul(a: Tensor, b: Tensor) -> Tuple[Tensor, NumericEvents]:
    """
    矩阵乘法 [m×k] @ [k×n]

    Args:
        a: 左矩阵
        b: 右矩阵，精度标签必须与 a 相同

    Returns:
        (Tensor, NumericEvents): 结果张量与本次调用的事件计数

    Raises:
        ContractViolationError: 形状或标签不匹配
    """
    _check_same_precision(a, b)
    ctx = FloatContext.for_precision(a.precision)
    return _wrap(ctx, ctx.matmul(a.data, b.data), a)


def conv2d(x: Tensor, w: Tensor, stride: int = 1, padding: int = 0) -> Tuple[Tensor, NumericEvents]:
    """
    二维卷积（互相关，零填充）

    每个输出元素按 (c, kh, kw) 升序累加，输出空间尺寸为
    floor((H + 2·padding − kh)/stride) + 1。
    """
    _check_same_precision(x, w)
    ctx = FloatContext.for_precision(x.precision)
    out, _ = conv2d_arrays(ctx, x.data, w.data, stride, padding)
    return _wrap(ctx, out, x)


def reduce_sum(x: Tensor, axis=None) -> Tuple[Tensor, NumericEvents]:
    """
    沿 axis 按下标升序顺序求和

    对一维张量做整体求和时结果形状为 [1]。
    """
    ctx = FloatContext.for_precision(x.precision)
    out = np.atleast_1d(ctx.sum(x.data, axis=axis))
    return _wrap(ctx, out, x)


def map_elementwise(x: Tensor, op: Union[ArithOp, str]) -> Tuple[Tensor, NumericEvents]:
    """逐元素一元运算（neg、abs、sqrt、exp、log）"""
    op = ArithOp(op)
    if op not in UNARY_OPS:
        raise ContractViolationError(f"{op.value} 不是一元运算")
    ctx = FloatContext.for_precision(x.precision)
    return _wrap(ctx, apply_op(ctx, op, x.data), x)


def zip_elementwise(x: Tensor, y: Tensor, op: Union[ArithOp, str]) -> Tuple[Tensor, NumericEvents]:
    """逐元素二元运算（add、sub、mul、div、max、min、compare），形状必须相同"""
    op = ArithOp(op)
    if op in UNARY_OPS:
        raise ContractViolationError(f"{op.value} 不是二元运算")
    _check_same_precision(x, y)
    if x.shape != y.shape:
        error_msg = f"逐元素运算形状不一致: {x.shape} vs {y.shape}"
        logger.error(error_msg)
        raise ContractViolationError(error_msg)
    ctx = FloatContext.for_precision(x.precision)
    return _wrap(ctx, apply_op(ctx, op, x.data, y.data), x)


def apply_op(ctx: FloatContext, op: Union[ArithOp, str], a, b=None) -> np.ndarray:
    """按运算名在给定上下文上执行一个基本运算"""
    op = ArithOp(op)
    handlers = {
        ArithOp.ADD: ctx.add, ArithOp.SUB: ctx.sub, ArithOp.MUL: ctx.mul, ArithOp.DIV: ctx.div,
        ArithOp.MAX: ctx.maximum, ArithOp.MIN: ctx.minimum, ArithOp.COMPARE: ctx.compare,
        ArithOp.SQRT: ctx.sqrt, ArithOp.EXP: ctx.exp, ArithOp.LOG: ctx.log,
        ArithOp.NEG: ctx.neg, ArithOp.ABS: ctx.abs,
    }
    if op in UNARY_OPS:
        return handlers[op](a)
    return handlers[op](a, b)
