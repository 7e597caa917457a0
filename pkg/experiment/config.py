#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
实验配置模块
把校验过的 experiment 配置节转换为 ExperimentConfig
"""

import copy
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any, Dict, List, Optional

from tensor.precision import Precision
from utils.config_loader import validate_config
from utils.exceptions import ConfigError
from utils.logger import get_logger

logger = get_logger('experiment.config')


def default_architecture() -> List[Dict[str, Any]]:
    """flatten → 3 × (dense 256 → relu) → dense 10 → softmax"""
    layers: List[Dict[str, Any]] = [{'kind': 'flatten'}]
    for _ in range(3):
        layers += [{'kind': 'dense', 'out': 256}, {'kind': 'relu'}]
    layers += [{'kind': 'dense', 'out': 10}, {'kind': 'softmax'}]
    return layers


@dataclass
class ExperimentConfig:
    """一次实验的全部参数"""
    architecture: List[Dict[str, Any]] = field(default_factory=default_architecture)
    input_shape: List[int] = field(default_factory=lambda: [1, 28, 28])
    num_classes: int = 10
    precision: str = 'pure16'
    optimizer: str = 'sgd'
    learning_rate: float = 1e-3
    beta: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-3
    epochs: int = 10
    batch_size: int = 64
    seed: int = 42
    train_images: Optional[str] = None
    train_labels: Optional[str] = None
    test_images: Optional[str] = None
    test_labels: Optional[str] = None
    train_limit: Optional[int] = 10000
    test_limit: Optional[int] = 2000
    output_dir: str = './output'
    include_mixed: bool = False
    tolerance_epochs: List[int] = field(default_factory=list)
    batch_sizes: List[int] = field(default_factory=lambda: [64, 128, 192, 256, 320, 384])
    plot_results: bool = True
    abort_nonfinite_fraction: float = 0.5

    def __post_init__(self):
        if not self.architecture or self.architecture[-1].get('kind') != 'softmax':
            error_msg = "结构配置的最后一层必须是 softmax"
            logger.error(error_msg)
            raise ConfigError(error_msg)
        self.precision = Precision.parse(self.precision).value

    @classmethod
    def from_dict(cls, experiment: Optional[Dict[str, Any]]) -> 'ExperimentConfig':
        """
        由 experiment 配置节创建，缺省字段取默认值

        Raises:
            ConfigError: 字段不符合模式定义或结构配置无效
        """
        experiment = copy.deepcopy(experiment or {})
        validate_config({'experiment': experiment})
        return cls(**experiment)

    def with_overrides(self, **overrides) -> 'ExperimentConfig':
        """返回覆盖部分字段后的新配置（重新校验）"""
        values = {k: v for k, v in overrides.items() if v is not None}
        updated = replace(self, **values)
        validate_config({'experiment': updated.to_dict()})
        return updated

    @property
    def precision_mode(self) -> Precision:
        return Precision.parse(self.precision)

    def optimizer_hyperparameters(self) -> Dict[str, float]:
        return {
            'learning_rate': self.learning_rate, 'beta': self.beta, 'beta1': self.beta1,
            'beta2': self.beta2, 'epsilon': self.epsilon,
        }

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def config_field_names() -> List[str]:
    """全部可由命令行覆盖的字段名"""
    return [f.name for f in fields(ExperimentConfig)]
