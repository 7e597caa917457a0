# -*- coding: utf-8 -*-
"""训练循环与各子命令（直接调用，数据集由夹具提供）"""

import json
import os

import numpy as np
import pandas as pd
import pytest

from dataio.model_file import load_model
from experiment import (ExperimentConfig, Trainer, cmd_compare, cmd_model_info, cmd_scan, cmd_sweep,
                        cmd_tolerance, cmd_train, evaluate, format_model_info)
from experiment.runner import TOLERANCE_EPOCH_COLUMNS, SWEEP_COLUMNS
from nn.model import create_model
from utils.exceptions import TrainingInstabilityError


@pytest.fixture
def config(experiment_dict):
    return ExperimentConfig.from_dict(experiment_dict)


def _params(model):
    return [array.copy() for _, _, array in model.parameters()]


class TestTrainer:

    def test_runs_are_bit_identical(self, config, datasets):
        train, test = datasets
        first = Trainer(config).train(train, test)
        second = Trainer(config).train(train, test)
        for a, b in zip(_params(first.model), _params(second.model)):
            assert np.array_equal(a, b)
        assert [h.test_acc for h in first.history] == [h.test_acc for h in second.history]

    def test_history_and_callback(self, config, datasets):
        train, test = datasets
        seen = []
        result = Trainer(config).train(train, test, epoch_callback=lambda epoch, model: seen.append(epoch))
        assert seen == [0, 1, 2]
        assert [h.epoch for h in result.history] == [1, 2]
        assert all(h.precision == 'pure16' for h in result.history)
        assert all(0.0 <= h.test_acc <= 1.0 for h in result.history)
        assert result.optimizer.state.t == 2 * 6
        assert result.model.layers[1].params['weight'].dtype == np.float16

    def test_loss_decreases(self, config, datasets):
        train, test = datasets
        config = config.with_overrides(precision='pure32', learning_rate=0.1, epochs=6)
        trainer = Trainer(config)
        initial = evaluate(trainer.model, train).loss
        result = trainer.train(train, test)
        assert result.history[-1].train_loss < initial

    def test_aborts_on_nonfinite_weights(self, config, datasets):
        train, test = datasets
        config = config.with_overrides(abort_nonfinite_fraction=1e-6)
        model = create_model(config.architecture, config.input_shape, 'pure16', config.seed)
        weight = model.layers[1].params['weight'].copy()
        weight[0, 0] = np.inf
        model.layers[1].params['weight'] = weight
        with pytest.raises(TrainingInstabilityError) as info:
            Trainer(config, 'pure16', model=model).train(train, test)
        report = info.value.report
        assert report['epoch'] == 1
        assert report['step'] == 1
        assert report['nonfinite_fraction'] > 1e-6
        assert report['precision'] == 'pure16'
        assert 'event_counts' in report and 'epsilon_probe' in report


class TestCommands:

    def test_train(self, config, datasets):
        summary = cmd_train(config, datasets)
        output_dir = config.output_dir
        for name in ('metrics.csv', 'metrics.json', 'config_used.yaml', 'model_pure16.p16n'):
            assert os.path.exists(os.path.join(output_dir, name)), name
        assert summary['precision'] == 'pure16'
        assert summary['model_file_bytes'] == os.path.getsize(summary['model_file'])
        assert load_model(summary['model_file']).num_parameters() == summary['param_count']
        assert len(pd.read_csv(summary['csv'])) == 2

    def test_compare(self, config, datasets):
        summary = cmd_compare(config, datasets)
        output_dir = config.output_dir
        by_epoch = pd.read_csv(os.path.join(output_dir, 'tolerance_by_epoch.csv'))
        assert list(by_epoch.columns) == TOLERANCE_EPOCH_COLUMNS
        assert by_epoch['epoch'].tolist() == [1, 2]
        assert len(pd.read_csv(os.path.join(output_dir, 'tolerance.csv'))) == 16
        metrics = pd.read_csv(os.path.join(output_dir, 'metrics.csv'))
        assert sorted(metrics['precision'].unique()) == ['pure16', 'pure32']
        assert summary['precisions'] == ['pure32', 'pure16']
        assert summary['lemma_lower_bound_holds']
        assert 0.0 <= summary['accuracy_gap'] <= 1.0
        for precision in ('pure16', 'pure32'):
            assert os.path.exists(os.path.join(output_dir, f'model_{precision}.p16n'))

    def test_compare_with_mixed_and_plots(self, config, datasets):
        config = config.with_overrides(include_mixed=True, plot_results=True, epochs=1)
        summary = cmd_compare(config, datasets)
        assert summary['precisions'] == ['pure32', 'pure16', 'mixed']
        assert 'accuracy_gap_mixed' in summary
        assert os.path.exists(os.path.join(config.output_dir, 'training_curves.png'))
        assert os.path.exists(os.path.join(config.output_dir, 'tolerance_histograms.png'))

    def test_tolerance_from_saved_models(self, config, datasets):
        _, test = datasets
        config = config.with_overrides(include_mixed=True, epochs=1)
        cmd_compare(config, datasets)
        model32 = os.path.join(config.output_dir, 'model_pure32.p16n')
        summary = cmd_tolerance(model32, os.path.join(config.output_dir, 'model_pure16.p16n'), config, test)
        assert summary['count'] == 16
        assert summary['guaranteed_fraction'] <= summary['agree_fraction']
        with open(summary['json'], encoding='utf-8') as f:
            assert json.load(f)['count'] == 16
        mixed = cmd_tolerance(model32, os.path.join(config.output_dir, 'model_mixed.p16n'), config, test)
        assert mixed['count'] == 16

    def test_sweep(self, config, datasets):
        config = config.with_overrides(epochs=1)
        summary = cmd_sweep(config, datasets)
        frame = pd.read_csv(summary['csv'])
        assert list(frame.columns) == SWEEP_COLUMNS
        assert summary['rows'] == 4
        assert frame['batch_size'].tolist() == [8, 8, 16, 16]
        assert frame['precision'].tolist() == ['pure32', 'pure16', 'pure32', 'pure16']

    def test_model_info(self, config, datasets):
        config = config.with_overrides(epochs=1)
        cmd_compare(config, datasets)
        path16 = os.path.join(config.output_dir, 'model_pure16.p16n')
        path32 = os.path.join(config.output_dir, 'model_pure32.p16n')
        info = cmd_model_info(path16, path32)
        assert info['payload_ratio'] == 0.5
        assert info['file_ratio'] < 1.0
        text = format_model_info(info)
        assert '0x10' in text
        assert 'dense' in text

    def test_scan(self, tmp_path):
        summary = cmd_scan('identity', str(tmp_path))
        assert summary['count'] == 63487
        assert os.path.exists(summary['csv'])
        assert os.path.exists(summary['json'])
