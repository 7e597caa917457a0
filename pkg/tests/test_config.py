# -*- coding: utf-8 -*-
"""配置加载、校验与覆盖"""

import os

import pytest
import yaml

import utils.config_loader as config_loader
from experiment.config import ExperimentConfig, config_field_names, default_architecture
from utils.config_loader import apply_overrides, get_config, load_config, save_config, validate_config
from utils.exceptions import ConfigError


@pytest.fixture(autouse=True)
def fresh_config(monkeypatch):
    monkeypatch.setattr(config_loader, '_config', {})


def _write_yaml(tmp_path, content, name='config.yaml'):
    path = tmp_path / name
    with open(path, 'w', encoding='utf-8') as f:
        if isinstance(content, str):
            f.write(content)
        else:
            yaml.safe_dump(content, f, allow_unicode=True)
    return str(path)


class TestLoadConfig:

    def test_load(self, config_file):
        config = load_config(config_file)
        assert config['experiment']['batch_size'] == 8
        assert get_config('experiment')['seed'] == 7
        assert get_config('missing') == {}

    def test_bundled_config_is_valid(self):
        config = load_config()
        experiment = ExperimentConfig.from_dict(config['experiment'])
        assert experiment.architecture == default_architecture()
        assert experiment.epsilon == 1e-3

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_config(str(tmp_path / 'absent.yaml'))

    def test_malformed_yaml(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(_write_yaml(tmp_path, 'experiment: [unclosed'))

    def test_empty_file_uses_defaults(self, tmp_path):
        config = load_config(_write_yaml(tmp_path, ''))
        assert config == {'experiment': {}}
        assert ExperimentConfig.from_dict(config['experiment']).batch_size == 64

    @pytest.mark.parametrize('experiment', [
        {'precision': 'bf16'},
        {'optimizer': 'lamb'},
        {'batch_size': 0},
        {'learning_rate': 0},
        {'beta2': 1.0},
        {'tolerance_epochs': [0]},
        {'architecture': [{'kind': 'dense', 'units': 3}]},
        {'unknown_field': 1},
    ])
    def test_schema_violations(self, tmp_path, experiment):
        with pytest.raises(ConfigError):
            load_config(_write_yaml(tmp_path, {'experiment': experiment}))

    def test_logging_section_checked(self):
        with pytest.raises(ConfigError):
            validate_config({'experiment': {}, 'logging': {'level': 'LOUD'}})
        with pytest.raises(ConfigError):
            validate_config({'experiment': {}, 'logging': {'log_dir': 3}})


class TestOverrides:

    def test_apply(self, config_file):
        config = load_config(config_file)
        merged = apply_overrides(config, {'batch_size': 32, 'optimizer': None})
        assert merged['experiment']['batch_size'] == 32
        assert merged['experiment']['optimizer'] == 'sgd'
        assert config['experiment']['batch_size'] == 8
        assert get_config('experiment')['batch_size'] == 32

    def test_invalid_override(self, config_file):
        with pytest.raises(ConfigError):
            apply_overrides(load_config(config_file), {'precision': 'fp8'})

    def test_save_round_trip(self, config_file, tmp_path):
        config = load_config(config_file)
        path = str(tmp_path / 'saved.yaml')
        save_config(config, path)
        assert os.path.exists(path)
        assert load_config(path) == config


class TestExperimentConfig:

    def test_from_dict(self, experiment_dict):
        config = ExperimentConfig.from_dict(experiment_dict)
        assert config.batch_size == 8
        assert config.precision_mode.value == 'pure16'
        assert config.optimizer_hyperparameters()['learning_rate'] == 0.05

    def test_defaults(self):
        config = ExperimentConfig.from_dict(None)
        assert config.input_shape == [1, 28, 28]
        assert config.abort_nonfinite_fraction == 0.5
        assert config.architecture[-1] == {'kind': 'softmax'}

    def test_softmax_must_be_last(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({'architecture': [{'kind': 'flatten'}, {'kind': 'dense', 'out': 3}]})

    def test_with_overrides(self, experiment_dict):
        config = ExperimentConfig.from_dict(experiment_dict)
        updated = config.with_overrides(epochs=5, seed=None)
        assert updated.epochs == 5
        assert updated.seed == 7
        assert config.epochs == 2
        with pytest.raises(ConfigError):
            config.with_overrides(batch_size=-1)

    def test_field_names_cover_schema(self):
        assert set(config_field_names()) == set(config_loader.EXPERIMENT_SCHEMA['properties'])
