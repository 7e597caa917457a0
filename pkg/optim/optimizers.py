#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
优化器模块
实现 SGD、RMSProp、Adam 在各精度模式下的参数更新

更新的求值顺序固定为：平方、滑动平均、开方、加 ε、一次除法、乘 η、相减，
每一步都在更新精度上舍入（PURE16 为 binary16，PURE32 与 MIXED 为 binary32）。
MIXED 模式先更新 binary32 主权重，再把舍入后的 binary16 副本写回模型。
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from tensor.precision import FloatContext, Precision
from utils.exceptions import ContractViolationError
from utils.logger import get_logger
from .instability import InstabilityCause, InstabilityDetector, InstabilityEvent

logger = get_logger('optim.optimizers')

OPTIMIZER_KINDS = ('sgd', 'rmsprop', 'adam')

ParamKey = Tuple[int, str]
_DEFAULT_KEY: ParamKey = (0, 'w')


@dataclass
class OptimState:
    """
    优化器状态

    超参数按更新精度舍入后保存（eta、beta_t 等）；原始配置值保留在
    learning_rate、beta 等字段中，用于计算 1−β 与偏差校正除数。
    """
    kind: str
    dtype: np.dtype
    learning_rate: float = 1e-3
    beta: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-3
    t: int = 0
    m: Dict[ParamKey, np.ndarray] = field(default_factory=dict)
    v: Dict[ParamKey, np.ndarray] = field(default_factory=dict)
    detector: InstabilityDetector = field(default_factory=InstabilityDetector)

    @classmethod
    def create(cls, kind: str, precision: Union[Precision, str], **hyper) -> 'OptimState':
        """
        按精度模式创建状态

        Args:
            kind: 'sgd'、'rmsprop' 或 'adam'
            precision: 模型精度模式，决定更新精度
            **hyper: learning_rate、beta、beta1、beta2、epsilon
        """
        kind = str(kind).lower()
        if kind not in OPTIMIZER_KINDS:
            error_msg = f"不支持的优化器类型: {kind}"
            logger.error(error_msg)
            raise ContractViolationError(error_msg)
        precision = Precision.parse(precision)
        return cls(kind=kind, dtype=precision.master_dtype, **hyper)

    def __post_init__(self):
        self.dtype = np.dtype(self.dtype)
        ctx = self.context()
        self.eta = ctx.const(self.learning_rate)
        self.eps = ctx.const(self.epsilon)
        self.beta_t = ctx.const(self.beta)
        self.one_minus_beta = ctx.const(1.0 - self.beta)
        self.beta1_t = ctx.const(self.beta1)
        self.one_minus_beta1 = ctx.const(1.0 - self.beta1)
        self.beta2_t = ctx.const(self.beta2)
        self.one_minus_beta2 = ctx.const(1.0 - self.beta2)

    def context(self) -> FloatContext:
        return FloatContext.for_dtype(self.dtype)

    def moments(self, key: ParamKey, shape) -> Tuple[np.ndarray, np.ndarray]:
        if key not in self.m:
            self.m[key] = np.zeros(shape, dtype=self.dtype)
            self.v[key] = np.zeros(shape, dtype=self.dtype)
        return self.m[key], self.v[key]

    def bias_correction(self, beta: float) -> np.ndarray:
        """1 − β^t，在 binary32 上计算后舍入到更新精度"""
        divisor = np.float32(1.0 - float(beta) ** self.t)
        return self.context().const(float(divisor))

    def hyperparameters(self) -> Dict[str, float]:
        """舍入后实际使用的超参数"""
        return {
            'learning_rate': float(self.eta), 'epsilon': float(self.eps),
            'beta': float(self.beta_t), 'beta1': float(self.beta1_t), 'beta2': float(self.beta2_t),
        }


def _check_shapes(w: np.ndarray, g: np.ndarray) -> None:
    if np.shape(w) != np.shape(g):
        error_msg = f"权重与梯度形状不一致: {np.shape(w)} vs {np.shape(g)}"
        logger.error(error_msg)
        raise ContractViolationError(error_msg)


def _inspect_weights(state: OptimState, key: ParamKey, w: np.ndarray, w_new: np.ndarray) -> List[InstabilityEvent]:
    events = state.detector.inspect(state.t, key, InstabilityCause.OVERFLOW_INF,
                                    np.isinf(w_new) & np.isfinite(w))
    events += state.detector.inspect(state.t, key, InstabilityCause.NAN_PRODUCED,
                                     np.isnan(w_new) & ~np.isnan(w))
    return events


def _apply_step(ctx: FloatContext, state: OptimState, w: np.ndarray, numerator: np.ndarray,
                second_moment: np.ndarray) -> np.ndarray:
    # sqrt, +ε, 一次除法, ×η, 相减
    denom = ctx.add(ctx.sqrt(second_moment), state.eps)
    quotient = ctx.div(numerator, denom)
    return ctx.sub(w, ctx.mul(state.eta, quotient))


def _sgd(w, g, state: OptimState, key: ParamKey) -> Tuple[np.ndarray, List[InstabilityEvent]]:
    _check_shapes(w, g)
    ctx = state.context()
    w = ctx.cast(w)
    w_new = ctx.sub(w, ctx.mul(state.eta, ctx.cast(g)))
    return w_new, _inspect_weights(state, key, w, w_new)


def sgd_step(w: np.ndarray, g: np.ndarray, state: OptimState, key: ParamKey = _DEFAULT_KEY) -> np.ndarray:
    """
    SGD 更新 w' = w − η·g

    非有限的 w' 记入 state.detector。

    Returns:
        np.ndarray: 更新后的权重（更新精度）
    """
    return _sgd(w, g, state, key)[0]


def rmsprop_step(w: np.ndarray, g: np.ndarray, state: OptimState,
                 key: ParamKey = _DEFAULT_KEY) -> Tuple[np.ndarray, List[InstabilityEvent]]:
    """
    RMSProp 更新

    v ← β·v + (1−β)·g²，w' = w − η·g/(√v + ε)

    Returns:
        (np.ndarray, List[InstabilityEvent]): 更新后的权重与本步新增事件
    """
    _check_shapes(w, g)
    ctx = state.context()
    w, g = ctx.cast(w), ctx.cast(g)
    _, v = state.moments(key, g.shape)

    squared = ctx.mul(g, g)
    v = ctx.add(ctx.mul(state.beta_t, v), ctx.mul(state.one_minus_beta, squared))
    state.v[key] = v
    w_new = _apply_step(ctx, state, w, g, v)

    events = state.detector.inspect(state.t, key, InstabilityCause.MOMENT_UNDERFLOW, (g != 0) & (v == 0))
    events += _inspect_weights(state, key, w, w_new)
    return w_new, events


def adam_step(w: np.ndarray, g: np.ndarray, state: OptimState,
              key: ParamKey = _DEFAULT_KEY) -> Tuple[np.ndarray, List[InstabilityEvent]]:
    """
    Adam 更新

    m ← β1·m + (1−β1)·g，v ← β2·v + (1−β2)·g²，
    m̂ = m/(1−β1^t)，v̂ = v/(1−β2^t)，w' = w − η·m̂/(√v̂ + ε)。
    偏差校正除数在 binary32 上计算后舍入到更新精度。

    Raises:
        ContractViolationError: t < 1
    """
    _check_shapes(w, g)
    if state.t < 1:
        raise ContractViolationError("Adam 更新要求步数 t >= 1")
    ctx = state.context()
    w, g = ctx.cast(w), ctx.cast(g)
    m, v = state.moments(key, g.shape)

    m = ctx.add(ctx.mul(state.beta1_t, m), ctx.mul(state.one_minus_beta1, g))
    squared = ctx.mul(g, g)
    v = ctx.add(ctx.mul(state.beta2_t, v), ctx.mul(state.one_minus_beta2, squared))
    state.m[key], state.v[key] = m, v

    m_hat = ctx.div(m, state.bias_correction(state.beta1))
    v_hat = ctx.div(v, state.bias_correction(state.beta2))
    w_new = _apply_step(ctx, state, w, m_hat, v_hat)

    events = state.detector.inspect(state.t, key, InstabilityCause.MOMENT_UNDERFLOW, (g != 0) & (v == 0))
    events += _inspect_weights(state, key, w, w_new)
    return w_new, events


_STEP_FUNCTIONS = {'sgd': _sgd, 'rmsprop': rmsprop_step, 'adam': adam_step}


class Optimizer:
    """
    绑定到一个模型的优化器

    step 接收 Model.backward 返回的梯度字典，逐参数更新并递增模型版本号。
    """

    def __init__(self, model, kind: str = 'sgd', learning_rate: float = 1e-3, beta: float = 0.9,
                 beta1: float = 0.9, beta2: float = 0.999, epsilon: float = 1e-3,
                 detector: Optional[InstabilityDetector] = None):
        self.model = model
        self.state = OptimState.create(kind, model.precision, learning_rate=learning_rate, beta=beta,
                                       beta1=beta1, beta2=beta2, epsilon=epsilon)
        if detector is not None:
            self.state.detector = detector

    @property
    def kind(self) -> str:
        return self.state.kind

    @property
    def detector(self) -> InstabilityDetector:
        return self.state.detector

    def step(self, grads: Dict[ParamKey, np.ndarray]) -> List[InstabilityEvent]:
        """
        执行一步更新

        Args:
            grads: (层下标, 参数名) 到梯度的映射

        Returns:
            List[InstabilityEvent]: 本步新增的不稳定事件
        """
        self.state.t += 1
        model = self.model
        step_fn = _STEP_FUNCTIONS[self.state.kind]
        new_events: List[InstabilityEvent] = []
        for key in sorted(grads):
            index, name = key
            if model.master_params is not None:
                w = model.master_params[key]
            else:
                w = model.layers[index].params[name]
            w_new, events = step_fn(w, grads[key], self.state, key)
            new_events.extend(events)
            if model.master_params is not None:
                model.master_params[key] = w_new.astype(np.float32)
            model.set_param(key, w_new)
        model.mark_updated()
        return new_events


def create_optimizer(model, kind: str = 'sgd', **hyper) -> Optimizer:
    """
    创建优化器

    Args:
        model: 待训练的模型
        kind: 'sgd'、'rmsprop' 或 'adam'
        **hyper: learning_rate、beta、beta1、beta2、epsilon

    Returns:
        Optimizer: 优化器实例
    """
    optimizer = Optimizer(model, kind, **hyper)
    logger.info(f"创建{kind}优化器: {optimizer.state.hyperparameters()}")
    return optimizer
