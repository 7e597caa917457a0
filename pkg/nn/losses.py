#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
损失函数模块
交叉熵损失及其与 softmax 融合的梯度
"""

from typing import Tuple

import numpy as np

from b16core.half import MIN_NORMAL
from tensor.precision import FloatContext, NumericEvents, Precision
from utils.exceptions import ContractViolationError
from utils.logger import get_logger

logger = get_logger('nn.losses')

# 概率下限取最小正规 binary16 数，避免 log(0)
PROBABILITY_FLOOR = MIN_NORMAL


def _check_labels(labels: np.ndarray, batch: int, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.ndim != 1 or labels.shape[0] != batch:
        error_msg = f"标签形状 {labels.shape} 与批大小 {batch} 不符"
        logger.error(error_msg)
        raise ContractViolationError(error_msg)
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        error_msg = f"标签超出 [0, {num_classes}) 范围"
        logger.error(error_msg)
        raise ContractViolationError(error_msg)
    return labels.astype(np.int64)


def cross_entropy_loss(ctx: FloatContext, p: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """
    批平均交叉熵 mean(−log(clamp(p_true, 2^-14, 1)))

    逐样本的负对数按批下标顺序求和后做一次除法。

    Args:
        ctx: 计算上下文
        p: [B×N] 概率
        labels: B 个类别下标

    Returns:
        np.ndarray: 0 维的损失值（计算宽度）
    """
    p = ctx.cast(p)
    labels = _check_labels(labels, p.shape[0], p.shape[1])
    p_true = p[np.arange(p.shape[0]), labels]
    clamped = np.clip(p_true, ctx.dtype.type(PROBABILITY_FLOOR), ctx.dtype.type(1.0))
    per_sample = ctx.neg(ctx.log(clamped))
    return ctx.mean(per_sample)


def cross_entropy(p, labels, precision=Precision.PURE32) -> Tuple[float, NumericEvents]:
    """
    对概率批计算交叉熵损失

    Args:
        p: [B×N] 概率（Tensor 或数组）
        labels: B 个类别下标
        precision: 计算使用的精度模式，p 为 Tensor 时取其标签

    Returns:
        (float, NumericEvents): 损失值与事件计数
    """
    if hasattr(p, 'precision'):
        precision, p = p.precision, p.data
    ctx = FloatContext.for_precision(precision)
    loss = cross_entropy_loss(ctx, p, labels)
    return float(loss), ctx.events


def softmax_cross_entropy_grad(ctx: FloatContext, p: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """softmax 与交叉熵融合后对 logits 的梯度 (p − onehot) / B"""
    p = ctx.cast(p)
    labels = _check_labels(labels, p.shape[0], p.shape[1])
    onehot = np.zeros_like(p)
    onehot[np.arange(p.shape[0]), labels] = 1
    return ctx.div(ctx.sub(p, onehot), ctx.const(p.shape[0]))
