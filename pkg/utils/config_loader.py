# -*- coding: utf-8 -*-
"""
配置加载模块，解析并校验配置文件，供主流程调用

配置文件为 YAML（JSON 文档同样可以直接加载），包含 logging 与 experiment 两节。
所有内容在任何计算开始之前通过 jsonschema 校验。
"""

import copy
import os
import yaml
import jsonschema
from typing import Dict, Any, Optional
from .logger import get_logger
from .exceptions import ConfigError

logger = get_logger('config_loader')

# 全局配置字典
_config = {}

_DEFAULT_CONFIG_PATH = os.path.join(os.path.dirname(os.path.dirname(__file__)), 'config.yaml')

_LAYER_SCHEMA = {
    "type": "object",
    "required": ["kind"],
    "properties": {
        "kind": {"type": "string",
                 "enum": ["dense", "relu", "softmax", "conv2d", "maxpool2d", "flatten", "batchnorm"]},
        "in": {"type": "integer", "minimum": 1},
        "out": {"type": "integer", "minimum": 1},
        "filters": {"type": "integer", "minimum": 1},
        "kernel": {"type": "integer", "minimum": 1},
        "stride": {"type": "integer", "minimum": 1},
        "padding": {"type": "integer", "minimum": 0},
        "size": {"type": "integer", "minimum": 1},
        "channels": {"type": "integer", "minimum": 1}
    },
    "additionalProperties": False
}

EXPERIMENT_SCHEMA = {
    "type": "object",
    "properties": {
        "architecture": {"type": "array", "items": _LAYER_SCHEMA},
        "input_shape": {"type": "array", "items": {"type": "integer", "minimum": 1},
                        "minItems": 1, "maxItems": 3},
        "num_classes": {"type": "integer", "minimum": 2},
        "precision": {"type": "string", "enum": ["pure16", "pure32", "mixed"]},
        "optimizer": {"type": "string", "enum": ["sgd", "rmsprop", "adam"]},
        "learning_rate": {"type": "number", "exclusiveMinimum": 0},
        "beta": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
        "beta1": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
        "beta2": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
        "epsilon": {"type": "number", "exclusiveMinimum": 0},
        "epochs": {"type": "integer", "minimum": 0},
        "batch_size": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0, "maximum": 18446744073709551615},
        "train_images": {"type": ["string", "null"]},
        "train_labels": {"type": ["string", "null"]},
        "test_images": {"type": ["string", "null"]},
        "test_labels": {"type": ["string", "null"]},
        "train_limit": {"type": ["integer", "null"], "minimum": 1},
        "test_limit": {"type": ["integer", "null"], "minimum": 1},
        "output_dir": {"type": "string"},
        "include_mixed": {"type": "boolean"},
        "tolerance_epochs": {"type": "array", "items": {"type": "integer", "minimum": 1}},
        "batch_sizes": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
        "plot_results": {"type": "boolean"},
        "abort_nonfinite_fraction": {"type": "number", "exclusiveMinimum": 0, "maximum": 1}
    },
    "additionalProperties": False
}

_CONFIG_SCHEMA = {
    "type": "object",
    "required": ["experiment"],
    "properties": {
        "logging": {
            "type": "object",
            "properties": {
                "level": {"type": "string", "enum": ["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]},
                "log_dir": {"type": "string"},
                "console_output": {"type": "boolean"},
                "file_size_limit": {"type": "number", "minimum": 0},
                "backup_count": {"type": "integer", "minimum": 0}
            }
        },
        "experiment": EXPERIMENT_SCHEMA
    }
}


def _schema_error_message(error: jsonschema.exceptions.ValidationError) -> str:
    location = '.'.join(str(p) for p in error.absolute_path) or '<root>'
    return f"配置不符合模式定义: {location}: {error.message}"


def validate_config(config: Dict[str, Any]) -> None:
    """校验整个配置字典，不合法时抛出 ConfigError"""
    try:
        jsonschema.validate(instance=config, schema=_CONFIG_SCHEMA)
    except jsonschema.exceptions.ValidationError as e:
        message = _schema_error_message(e)
        logger.error(message)
        raise ConfigError(message) from e


def _read_yaml(config_path: str) -> Dict[str, Any]:
    if not os.path.exists(config_path):
        message = f"配置文件不存在: {config_path}"
        logger.error(message)
        raise FileNotFoundError(message)
    try:
        with open(config_path, 'r', encoding='utf-8') as f:
            document = yaml.safe_load(f)
    except yaml.YAMLError as e:
        message = f"无法解析配置文件 {config_path}: {e}"
        logger.error(message)
        raise ConfigError(message) from e
    return document or {}


def load_config(config_path: Optional[str] = None) -> Dict[str, Any]:
    """
    读取配置文件、补全 experiment 节并校验，成功后成为全局配置

    Args:
        config_path (str, optional): 配置文件路径，缺省为仓库根目录的 config.yaml

    Returns:
        Dict[str, Any]: 配置字典

    Raises:
        FileNotFoundError: 文件不存在
        ConfigError: 无法解析或校验失败
    """
    global _config

    path = config_path or _DEFAULT_CONFIG_PATH
    logger.info(f"读取实验配置: {path}")
    config = _read_yaml(path)
    config.setdefault('experiment', {})
    validate_config(config)

    _config = config
    return config


def get_config(section: Optional[str] = None) -> Dict[str, Any]:
    """
    返回全局配置（尚未加载时先加载默认文件）

    section 给定时只返回该节，节不存在返回空字典。
    """
    if not _config:
        load_config()
    return _config if section is None else _config.get(section, {})


def apply_overrides(config: Dict[str, Any], overrides: Dict[str, Any]) -> Dict[str, Any]:
    """
    把命令行覆盖项写进 experiment 节的副本，重新校验后替换全局配置

    取值为 None 的覆盖项视为未给出。原配置字典保持不变。
    """
    global _config

    applied = {key: value for key, value in overrides.items() if value is not None}
    merged = copy.deepcopy(config)
    merged.setdefault('experiment', {}).update(applied)
    validate_config(merged)

    if applied:
        logger.info(f"命令行覆盖: {sorted(applied)}")
    _config = merged
    return merged


def save_config(config: Dict[str, Any], config_path: str) -> None:
    """把实验实际使用的配置写成 YAML，写之前同样校验"""
    validate_config(config)
    with open(config_path, 'w', encoding='utf-8') as f:
        yaml.safe_dump(config, f, default_flow_style=False, allow_unicode=True, sort_keys=False)
    logger.info(f"实际使用的配置已写入: {config_path}")
