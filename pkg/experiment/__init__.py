#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Experiment模块
提供实验配置、训练循环与各子命令的实现
"""

from .config import ExperimentConfig, default_architecture, config_field_names
from .trainer import Evaluation, TrainingResult, Trainer, evaluate
from .runner import (
    INSTABILITY_REPORT,
    load_datasets,
    cmd_train,
    cmd_compare,
    cmd_scan,
    cmd_model_info,
    format_model_info,
    cmd_tolerance,
    cmd_sweep,
)

__version__ = '0.1.0'

__all__ = [
    'ExperimentConfig', 'default_architecture', 'config_field_names',
    'Evaluation', 'TrainingResult', 'Trainer', 'evaluate',
    'INSTABILITY_REPORT', 'load_datasets', 'cmd_train', 'cmd_compare', 'cmd_scan', 'cmd_model_info',
    'format_model_info', 'cmd_tolerance', 'cmd_sweep',
]
