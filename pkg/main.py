#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
半精度训练实验室主入口

子命令：
    train       在配置的精度下训练
    compare     以相同种子在 pure32、pure16（可选 mixed）下训练并比较
    scan        在全部有限 binary16 输入上扫描函数误差
    model-info  查看模型文件
    tolerance   比较两个已保存模型的 δ、Γ 与预测一致性
    sweep       批大小扫描

退出码：0 成功；1 配置、数据、文件或契约错误；3 训练因数值不稳定中止。
"""

import argparse
import json
import logging
import sys
from dataclasses import MISSING, fields
from typing import Any, Dict, List, Optional

from analysis.scan import ORACLE_DTYPES, SCAN_FUNCTIONS
from experiment import (ExperimentConfig, cmd_compare, cmd_model_info, cmd_scan, cmd_sweep,
                        cmd_tolerance, cmd_train, format_model_info)
from utils.config_loader import apply_overrides, get_config, load_config
from utils.exceptions import HalfLabError, TrainingInstabilityError
from utils.logger import default_log_file, get_logger, setup_logger

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INSTABILITY = 3

CONFIG_COMMANDS = ('train', 'compare', 'tolerance', 'sweep')


def _str2bool(value: str) -> bool:
    lowered = str(value).strip().lower()
    if lowered in ('true', '1', 'yes', 'y'):
        return True
    if lowered in ('false', '0', 'no', 'n'):
        return False
    raise argparse.ArgumentTypeError(f"无法解析的布尔值: {value}")


def _json_value(value: str):
    try:
        return json.loads(value)
    except json.JSONDecodeError as e:
        raise argparse.ArgumentTypeError(f"无法解析的 JSON: {e}")


def _flag_type(default: Any):
    if isinstance(default, bool):
        return _str2bool
    if isinstance(default, list):
        return _json_value
    if isinstance(default, int):
        return int
    if isinstance(default, float):
        return float
    return str


def _add_experiment_flags(parser: argparse.ArgumentParser) -> None:
    """为 ExperimentConfig 的每个字段添加同名长选项"""
    parser.add_argument('--config', type=str, help='配置文件路径（YAML 或 JSON）')
    for f in fields(ExperimentConfig):
        default = f.default if f.default is not MISSING else f.default_factory()
        parser.add_argument(f'--{f.name}', type=_flag_type(default), default=None,
                            help=f'覆盖 experiment.{f.name}（默认 {json.dumps(default)}）')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description='纯 binary16 神经网络训练实验室')
    subparsers = parser.add_subparsers(dest='command', required=True)

    _add_experiment_flags(subparsers.add_parser('train', help='在配置的精度下训练'))
    _add_experiment_flags(subparsers.add_parser('compare', help='比较 pure32 与 pure16 训练'))
    _add_experiment_flags(subparsers.add_parser('sweep', help='批大小扫描'))

    tolerance = subparsers.add_parser('tolerance', help='比较两个已保存模型')
    tolerance.add_argument('model32', help='参照模型文件')
    tolerance.add_argument('model16', help='16 位模型文件')
    _add_experiment_flags(tolerance)

    scan = subparsers.add_parser('scan', help='全值域函数扫描')
    scan.add_argument('function', choices=sorted(SCAN_FUNCTIONS), help='函数名')
    scan.add_argument('--oracle', choices=sorted(ORACLE_DTYPES), default='binary32', help='参照精度')
    scan.add_argument('--output_dir', default='./output', help='输出目录')

    info = subparsers.add_parser('model-info', help='查看模型文件')
    info.add_argument('path', help='模型文件')
    info.add_argument('other', nargs='?', default=None, help='用于比较大小的第二个模型文件')
    return parser


def _setup_logging() -> None:
    log_config = get_config('logging')
    log_dir = log_config.get('log_dir')
    setup_logger(
        log_file=default_log_file(log_dir) if log_dir else None,
        level=getattr(logging, log_config.get('level', 'INFO').upper()),
        console_output=log_config.get('console_output', True),
        max_bytes=int(log_config.get('file_size_limit', 10) * 1024 * 1024),
        backup_count=log_config.get('backup_count', 5),
    )


def _experiment_config(args: argparse.Namespace) -> ExperimentConfig:
    config = get_config()
    overrides = {f.name: getattr(args, f.name) for f in fields(ExperimentConfig)}
    merged = apply_overrides(config, overrides)
    return ExperimentConfig.from_dict(merged['experiment'])


def run(args: argparse.Namespace) -> Dict[str, Any]:
    if args.command == 'train':
        return cmd_train(_experiment_config(args))
    if args.command == 'compare':
        return cmd_compare(_experiment_config(args))
    if args.command == 'sweep':
        return cmd_sweep(_experiment_config(args))
    if args.command == 'tolerance':
        return cmd_tolerance(args.model32, args.model16, _experiment_config(args))
    if args.command == 'scan':
        return cmd_scan(args.function, args.output_dir, oracle=args.oracle)
    return cmd_model_info(args.path, args.other)


def main(argv: Optional[List[str]] = None) -> int:
    """主函数，返回退出码"""
    parser = build_parser()
    args = parser.parse_args(argv)
    logger = get_logger('main')

    try:
        if args.command in CONFIG_COMMANDS:
            load_config(args.config)
            _setup_logging()
        else:
            setup_logger()
        result = run(args)
    except TrainingInstabilityError as e:
        logger.error(f"训练中止: {e}")
        print(json.dumps(e.report, indent=2, ensure_ascii=False, default=str))
        return EXIT_INSTABILITY
    except (HalfLabError, FileNotFoundError) as e:
        logger.error(f"运行失败: {e}")
        print(f"错误: {e}", file=sys.stderr)
        return EXIT_ERROR

    if args.command == 'model-info':
        print(format_model_info(result))
    else:
        print(json.dumps(result, indent=2, ensure_ascii=False, default=str))
    return EXIT_OK


if __name__ == '__main__':
    sys.exit(main())
