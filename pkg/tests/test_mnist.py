# -*- coding: utf-8 -*-
"""
真实 MNIST 上的端到端检查（分钟级）

设置 HALFLAB_MNIST_DIR 指向包含四个 IDX 文件（可为 .gz）的目录后运行：
    HALFLAB_MNIST_DIR=./data/mnist pytest -m mnist
"""

import os

import numpy as np
import pytest

from dataio.mnist import load_mnist
from dataio.model_file import save_model
from experiment import ExperimentConfig, Trainer
from analysis.tolerance import tolerance_report

MNIST_DIR = os.environ.get('HALFLAB_MNIST_DIR')

pytestmark = [
    pytest.mark.slow,
    pytest.mark.mnist,
    pytest.mark.skipif(not MNIST_DIR, reason='未设置 HALFLAB_MNIST_DIR'),
]

TRAIN_LIMIT = 10000
TEST_LIMIT = 2000


def _idx(name: str) -> str:
    path = os.path.join(MNIST_DIR, name)
    return path if os.path.exists(path) else path + '.gz'


@pytest.fixture(scope='module')
def mnist():
    train = load_mnist(_idx('train-images-idx3-ubyte'), _idx('train-labels-idx1-ubyte'), TRAIN_LIMIT)
    test = load_mnist(_idx('t10k-images-idx3-ubyte'), _idx('t10k-labels-idx1-ubyte'), TEST_LIMIT)
    return train, test


@pytest.fixture(scope='module')
def sgd_results(mnist):
    train, test = mnist
    config = ExperimentConfig(epochs=10, batch_size=64, learning_rate=1e-3, optimizer='sgd', seed=42)
    return {precision: Trainer(config, precision).train(train, test) for precision in ('pure32', 'pure16')}


def test_accuracy_parity(sgd_results):
    acc32 = sgd_results['pure32'].history[-1].test_acc
    acc16 = sgd_results['pure16'].history[-1].test_acc
    assert acc32 >= 0.85
    assert acc16 >= 0.85
    assert abs(acc16 - acc32) <= 0.02


def test_tolerance_magnitudes(sgd_results, mnist):
    _, test = mnist
    report = tolerance_report(sgd_results['pure32'].model, sgd_results['pure16'].model, test)
    assert report.gamma_stats['mean'] / report.delta_stats['mean'] >= 10
    assert report.guaranteed_fraction <= report.agree_fraction


def test_model_file_halves(sgd_results, tmp_path):
    size32 = save_model(sgd_results['pure32'].model, str(tmp_path / 'm32.p16n'))
    size16 = save_model(sgd_results['pure16'].model, str(tmp_path / 'm16.p16n'))
    assert 0.49 <= size16 / size32 <= 0.51


def _adam(mnist, precision, epsilon, epochs=5):
    train, test = mnist
    config = ExperimentConfig(epochs=epochs, batch_size=64, learning_rate=1e-3, optimizer='adam',
                              epsilon=epsilon, seed=42, abort_nonfinite_fraction=1.0)
    return Trainer(config, precision).train(train, test)


def test_tiny_epsilon_breaks_pure16_adam(mnist):
    result = _adam(mnist, 'pure16', 1e-7)
    assert sum(result.instability_summary()['event_counts'].values()) > 0
    broken = result.model.nonfinite_fraction() > 0 or result.history[-1].test_acc <= 0.20
    assert broken


def test_larger_epsilon_trains_pure16_adam(mnist):
    assert _adam(mnist, 'pure16', 1e-3, epochs=10).history[-1].test_acc >= 0.85


def test_tiny_epsilon_is_stable_at_pure32(mnist):
    result = _adam(mnist, 'pure32', 1e-7)
    assert result.model.nonfinite_fraction() == 0
    assert np.isfinite(result.history[-1].test_loss)
