#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
优化器数值不稳定检测

记录三类事件：二阶矩下溢为零（梯度非零但 v 变为 0）、权重上溢为无穷、
权重出现 NaN。每个参数元素的每类事件只在首次出现的步记录一次。
另外提供 ε 倒数探测和梯度幅值扫描，用来复现 binary16 下 ε 过小时
更新量被放大的现象。
"""

from collections import Counter
from dataclasses import dataclass, asdict
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from b16core.half import finite_bit_patterns, bits_to_array
from tensor.precision import FloatContext, Precision
from utils.logger import get_logger

logger = get_logger('optim.instability')

# 保存的事件条数上限，超过后只累计计数
DEFAULT_MAX_EVENTS = 10000

# 判定更新量被放大的倍数
DEFAULT_AMPLIFICATION_FACTOR = 1e4


class InstabilityCause(str, Enum):
    OVERFLOW_INF = 'OverflowInf'
    NAN_PRODUCED = 'NaNProduced'
    MOMENT_UNDERFLOW = 'MomentUnderflowToZero'


@dataclass(frozen=True)
class InstabilityEvent:
    """
    单个不稳定事件

    Attributes:
        step: 优化步 t
        layer: 层下标
        param: 参数名（weight、bias、gamma、beta）
        index: 参数张量内按行主序的元素下标
        cause: 事件原因
    """
    step: int
    layer: int
    param: str
    index: int
    cause: InstabilityCause

    def to_dict(self) -> Dict[str, Any]:
        record = asdict(self)
        record['cause'] = self.cause.value
        return record


class InstabilityDetector:
    """按参数元素记录首次出现的不稳定事件"""

    def __init__(self, max_events: int = DEFAULT_MAX_EVENTS):
        self.max_events = max_events
        self.events: List[InstabilityEvent] = []
        self.counts: Counter = Counter()
        self._flagged: Dict[Tuple[Any, InstabilityCause], np.ndarray] = {}

    def inspect(self, step: int, key: Tuple[int, str], cause: InstabilityCause,
                mask: np.ndarray) -> List[InstabilityEvent]:
        """
        检查一个条件掩码，为首次满足条件的元素生成事件

        Args:
            step: 当前步
            key: (层下标, 参数名)
            cause: 事件原因
            mask: 与参数同形的布尔掩码

        Returns:
            List[InstabilityEvent]: 本次新增的事件
        """
        mask = np.asarray(mask, dtype=bool).reshape(-1)
        if not mask.any():
            return []
        flagged = self._flagged.get((key, cause))
        if flagged is None:
            flagged = np.zeros(mask.shape, dtype=bool)
            self._flagged[(key, cause)] = flagged
        fresh = mask & ~flagged
        if not fresh.any():
            return []
        flagged |= fresh

        indices = np.flatnonzero(fresh)
        self.counts[cause] += int(indices.size)
        layer, param = key
        new_events = [InstabilityEvent(step, int(layer), str(param), int(i), cause) for i in indices]
        if len(self.events) < self.max_events:
            self.events.extend(new_events[:self.max_events - len(self.events)])
        if self.counts[cause] == indices.size:
            logger.warning(f"第 {step} 步首次出现 {cause.value}: 层 {layer} 参数 {param}，"
                           f"{indices.size} 个元素")
        return new_events

    @property
    def first_event(self) -> Optional[InstabilityEvent]:
        return self.events[0] if self.events else None

    def any(self) -> bool:
        return bool(self.counts)

    def summary(self) -> Dict[str, Any]:
        first = self.first_event
        return {
            'event_counts': {cause.value: int(self.counts.get(cause, 0)) for cause in InstabilityCause},
            'first_event': first.to_dict() if first else None,
        }


def probe_epsilon_reciprocal(epsilon: float) -> Dict[str, Any]:
    """
    探测 ε 的 binary16 倒数是否上溢

    Args:
        epsilon: 配置的 ε

    Returns:
        Dict: epsilon、epsilon_half、reciprocal_half、reciprocal_overflows
    """
    ctx = FloatContext.for_dtype(np.float16)
    epsilon_half = ctx.const(epsilon)
    reciprocal = ctx.div(ctx.const(1.0), epsilon_half)
    overflows = bool(np.isinf(reciprocal))
    if overflows:
        logger.warning(f"ε={epsilon} 的 binary16 倒数上溢为无穷")
    return {
        'epsilon': float(epsilon),
        'epsilon_half': float(epsilon_half),
        'reciprocal_half': float(reciprocal),
        'reciprocal_overflows': overflows,
    }


def gradient_band_sweep(epsilon: float, optimizer: str = 'adam', learning_rate: float = 1e-3,
                        beta: float = 0.9, beta1: float = 0.9, beta2: float = 0.999,
                        precision: Precision = Precision.PURE16, max_gradient: float = 1.0) -> pd.DataFrame:
    """
    对全部正的有限 binary16 梯度值计算第一步更新量

    从 w=0、零矩开始执行一步 RMSProp 或 Adam，与 η·g 比较得到放大倍数。

    Args:
        epsilon: ε
        optimizer: 'rmsprop' 或 'adam'
        learning_rate: η
        beta, beta1, beta2: 衰减系数
        precision: 更新使用的精度模式
        max_gradient: 扫描的梯度上限

    Returns:
        pd.DataFrame: 列为 gradient、step、amplification、moment_underflow
    """
    from .optimizers import OptimState, adam_step, rmsprop_step

    bits = finite_bit_patterns(dedupe_signed_zero=True)
    values = bits_to_array(bits).astype(np.float64)
    gradients = values[(values > 0) & (values <= max_gradient)]

    state = OptimState.create(optimizer, precision, learning_rate=learning_rate, beta=beta,
                              beta1=beta1, beta2=beta2, epsilon=epsilon)
    state.t = 1
    g = gradients.astype(state.dtype)
    w = np.zeros_like(g)
    step_fn = adam_step if state.kind == 'adam' else rmsprop_step
    w_new, _ = step_fn(w, g, state, key=(0, 'sweep'))

    step = np.abs(w_new.astype(np.float64))
    reference = learning_rate * np.abs(gradients)
    with np.errstate(divide='ignore', invalid='ignore'):
        amplification = step / reference
    moments = state.v[(0, 'sweep')].astype(np.float64)
    return pd.DataFrame({
        'gradient': gradients,
        'step': step,
        'amplification': amplification,
        'moment_underflow': moments == 0,
    })


def amplified_band(sweep: pd.DataFrame, factor: float = DEFAULT_AMPLIFICATION_FACTOR) -> pd.DataFrame:
    """梯度扫描中更新量超过 factor·η·g（或为非有限值）的行"""
    hazard = (sweep['amplification'] >= factor) | ~np.isfinite(sweep['step'])
    return sweep[hazard]
