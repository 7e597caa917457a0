#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Optim模块
提供 SGD/RMSProp/Adam 更新与数值不稳定检测
"""

from .optimizers import (
    OptimState,
    Optimizer,
    sgd_step,
    rmsprop_step,
    adam_step,
    create_optimizer,
    OPTIMIZER_KINDS,
)

from .instability import (
    InstabilityCause,
    InstabilityEvent,
    InstabilityDetector,
    probe_epsilon_reciprocal,
    gradient_band_sweep,
    amplified_band,
)

__version__ = '0.1.0'

__all__ = [
    'OptimState', 'Optimizer', 'sgd_step', 'rmsprop_step', 'adam_step', 'create_optimizer',
    'OPTIMIZER_KINDS',
    'InstabilityCause', 'InstabilityEvent', 'InstabilityDetector', 'probe_epsilon_reciprocal',
    'gradient_band_sweep', 'amplified_band',
]
