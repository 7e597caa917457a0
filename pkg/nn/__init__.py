#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
NN模块
提供网络层、交叉熵损失、模型构建与前向/反向传播
"""

from .layers import (
    Layer,
    Dense,
    ReLU,
    Softmax,
    Conv2D,
    MaxPool2D,
    Flatten,
    BatchNorm,
    create_layer,
    layer_from_extents,
    LAYER_CLASSES,
    BN_EPSILON,
    BN_MOMENTUM,
)

from .losses import (
    cross_entropy,
    cross_entropy_loss,
    softmax_cross_entropy_grad,
    PROBABILITY_FLOOR,
)

from .model import (
    Model,
    ForwardCache,
    init_params,
    create_model,
    forward,
    backward,
    batchnorm_forward,
)

__version__ = '0.1.0'

__all__ = [
    'Layer', 'Dense', 'ReLU', 'Softmax', 'Conv2D', 'MaxPool2D', 'Flatten', 'BatchNorm',
    'create_layer', 'layer_from_extents', 'LAYER_CLASSES', 'BN_EPSILON', 'BN_MOMENTUM',
    'cross_entropy', 'cross_entropy_loss', 'softmax_cross_entropy_grad', 'PROBABILITY_FLOOR',
    'Model', 'ForwardCache', 'init_params', 'create_model', 'forward', 'backward',
    'batchnorm_forward',
]
