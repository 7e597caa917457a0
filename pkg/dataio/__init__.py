#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Dataio模块
提供 MNIST IDX 读写、小批量划分、模型文件读写和训练指标输出
"""

from .mnist import (
    Dataset,
    load_mnist,
    normalize_pixels,
    write_idx_images,
    write_idx_labels,
    epoch_permutation,
    batches,
)

from .model_file import (
    MAGIC,
    FORMAT_VERSION,
    ModelFileInfo,
    save_model,
    load_model,
    inspect_model_file,
)

from .metrics import (
    METRIC_COLUMNS,
    EpochMetrics,
    predictions,
    accuracy,
    top2_accuracy,
    metrics_frame,
    write_metrics,
)

__version__ = '0.1.0'

__all__ = [
    'Dataset', 'load_mnist', 'normalize_pixels', 'write_idx_images', 'write_idx_labels',
    'epoch_permutation', 'batches',
    'MAGIC', 'FORMAT_VERSION', 'ModelFileInfo', 'save_model', 'load_model', 'inspect_model_file',
    'METRIC_COLUMNS', 'EpochMetrics', 'predictions', 'accuracy', 'top2_accuracy', 'metrics_frame',
    'write_metrics',
]
