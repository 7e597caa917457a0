# -*- coding: utf-8 -*-
"""
测试公共夹具：合成的小型 IDX 数据集、小网络结构、临时配置文件
"""

import os

import numpy as np
import pytest
import yaml

from dataio.mnist import load_mnist, write_idx_images, write_idx_labels

SYNTHETIC_SIDE = 8
SYNTHETIC_CLASSES = 4


def synthetic_images(labels: np.ndarray, side: int = SYNTHETIC_SIDE, seed: int = 0) -> np.ndarray:
    """每个类别在不同的象限点亮一块，再叠加少量噪声"""
    rng = np.random.default_rng(seed)
    images = rng.integers(0, 40, size=(labels.size, side, side)).astype(np.int64)
    half = side // 2
    for i, label in enumerate(labels):
        r, c = divmod(int(label) % 4, 2)
        images[i, r * half:(r + 1) * half, c * half:(c + 1) * half] += 200
    return np.clip(images, 0, 255).astype(np.uint8)


def write_synthetic_split(directory, prefix: str, count: int, seed: int):
    labels = (np.arange(count) % SYNTHETIC_CLASSES).astype(np.uint8)
    images = synthetic_images(labels, seed=seed)
    images_path = os.path.join(str(directory), f'{prefix}-images-idx3-ubyte')
    labels_path = os.path.join(str(directory), f'{prefix}-labels-idx1-ubyte')
    write_idx_images(images_path, images)
    write_idx_labels(labels_path, labels)
    return images_path, labels_path


def small_architecture():
    return [
        {'kind': 'flatten'},
        {'kind': 'dense', 'out': 16},
        {'kind': 'relu'},
        {'kind': 'dense', 'out': SYNTHETIC_CLASSES},
        {'kind': 'softmax'},
    ]


@pytest.fixture
def rng():
    return np.random.default_rng(20240521)


@pytest.fixture
def idx_paths(tmp_path):
    data_dir = tmp_path / 'data'
    data_dir.mkdir()
    train_images, train_labels = write_synthetic_split(data_dir, 'train', 48, seed=1)
    test_images, test_labels = write_synthetic_split(data_dir, 't10k', 16, seed=2)
    return {
        'train_images': train_images, 'train_labels': train_labels,
        'test_images': test_images, 'test_labels': test_labels,
    }


@pytest.fixture
def datasets(idx_paths):
    train = load_mnist(idx_paths['train_images'], idx_paths['train_labels'])
    test = load_mnist(idx_paths['test_images'], idx_paths['test_labels'])
    return train, test


@pytest.fixture
def experiment_dict(idx_paths, tmp_path):
    experiment = {
        'architecture': small_architecture(),
        'input_shape': [1, SYNTHETIC_SIDE, SYNTHETIC_SIDE],
        'num_classes': SYNTHETIC_CLASSES,
        'precision': 'pure16',
        'optimizer': 'sgd',
        'learning_rate': 0.05,
        'epochs': 2,
        'batch_size': 8,
        'seed': 7,
        'train_limit': None,
        'test_limit': None,
        'output_dir': str(tmp_path / 'output'),
        'tolerance_epochs': [1],
        'batch_sizes': [8, 16],
        'plot_results': False,
    }
    experiment.update(idx_paths)
    return experiment


@pytest.fixture
def config_file(tmp_path, experiment_dict):
    path = tmp_path / 'config.yaml'
    config = {
        'logging': {'level': 'WARNING', 'console_output': False},
        'experiment': experiment_dict,
    }
    with open(path, 'w', encoding='utf-8') as f:
        yaml.safe_dump(config, f, allow_unicode=True, sort_keys=False)
    return str(path)
