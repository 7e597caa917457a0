#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
实验运行模块
组合训练、精度对比、函数扫描、模型信息、容限分析和批大小扫描，
每个子命令把结果写入输出目录并返回汇总字典
"""

import json
import os
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from analysis.plots import plot_tolerance_histograms, plot_training_curves
from analysis.scan import scan_function
from analysis.tolerance import ToleranceReport, tolerance_report
from dataio.metrics import metrics_frame, write_metrics
from dataio.mnist import Dataset, load_mnist
from dataio.model_file import inspect_model_file, load_model, save_model
from nn.model import Model
from optim.instability import probe_epsilon_reciprocal
from tensor.precision import Precision
from utils.config_loader import save_config
from utils.exceptions import ConfigError, TrainingInstabilityError
from utils.logger import get_logger
from .config import ExperimentConfig
from .trainer import Trainer, TrainingResult

logger = get_logger('experiment.runner')

TOLERANCE_EPOCH_COLUMNS = [
    'epoch', 'delta_min', 'delta_max', 'delta_mean', 'delta_var',
    'gamma_min', 'gamma_max', 'gamma_mean', 'gamma_var', 'guaranteed_fraction', 'agree_fraction',
]
SWEEP_COLUMNS = ['batch_size', 'precision', 'test_acc', 'test_top2_acc', 'test_loss', 'wall_time']
INSTABILITY_REPORT = 'instability_report.json'


def _write_json(path: str, payload: Dict[str, Any]) -> str:
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(payload, f, indent=2, ensure_ascii=False, default=_to_builtin)
    return path


def _to_builtin(value):
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, Precision):
        return value.value
    return str(value)


def _prepare_output(config: ExperimentConfig) -> str:
    os.makedirs(config.output_dir, exist_ok=True)
    save_config({'experiment': config.to_dict()}, os.path.join(config.output_dir, 'config_used.yaml'))
    return config.output_dir


def load_datasets(config: ExperimentConfig) -> Tuple[Dataset, Dataset]:
    """
    按配置读取训练集与测试集

    Raises:
        ConfigError: 数据路径未配置
    """
    paths = {key: getattr(config, key) for key in ('train_images', 'train_labels', 'test_images', 'test_labels')}
    missing = [key for key, value in paths.items() if not value]
    if missing:
        error_msg = f"缺少数据路径配置: {missing}"
        logger.error(error_msg)
        raise ConfigError(error_msg)
    train = load_mnist(paths['train_images'], paths['train_labels'], config.train_limit)
    test = load_mnist(paths['test_images'], paths['test_labels'], config.test_limit)
    return train, test


def _record_instability(output_dir: str, error: TrainingInstabilityError) -> None:
    path = _write_json(os.path.join(output_dir, INSTABILITY_REPORT), error.report)
    error.report['report_path'] = path
    logger.warning(f"训练中止报告已保存至 {path}")


def _train(config: ExperimentConfig, precision: Precision, train: Dataset, test: Dataset,
           output_dir: str, epoch_callback=None) -> TrainingResult:
    try:
        return Trainer(config, precision).train(train, test, epoch_callback)
    except TrainingInstabilityError as e:
        _record_instability(output_dir, e)
        raise


def cmd_train(config: ExperimentConfig, datasets: Optional[Tuple[Dataset, Dataset]] = None) -> Dict[str, Any]:
    """
    在配置的精度下训练并保存指标与模型

    Args:
        config: 实验配置
        datasets: 已读取的 (训练集, 测试集)，为 None 时按配置读取

    Returns:
        Dict[str, Any]: 汇总（写入 metrics.json）

    Raises:
        TrainingInstabilityError: 训练中止，报告同时写入 instability_report.json
    """
    output_dir = _prepare_output(config)
    train, test = datasets or load_datasets(config)
    precision = config.precision_mode
    result = _train(config, precision, train, test, output_dir)

    model_path = os.path.join(output_dir, f'model_{precision.value}.p16n')
    file_bytes = save_model(result.model, model_path)
    summary = {
        'precision': precision.value,
        'optimizer': config.optimizer,
        'hyperparameters': result.optimizer.state.hyperparameters(),
        'param_count': result.model.num_parameters(),
        'model_file': model_path,
        'model_file_bytes': file_bytes,
        'epsilon_probe': probe_epsilon_reciprocal(config.epsilon),
        'instability': result.instability_summary(),
    }
    paths = write_metrics(result.history, os.path.join(output_dir, 'metrics.csv'), summary)
    if config.plot_results and result.history:
        plot_training_curves({precision.value: metrics_frame(result.history)},
                             os.path.join(output_dir, 'training_curves.png'))
    summary.update(paths)
    return summary


def _compare_precisions(config: ExperimentConfig) -> List[Precision]:
    precisions = [Precision.PURE32, Precision.PURE16]
    if config.include_mixed:
        precisions.append(Precision.MIXED)
    return precisions


def cmd_compare(config: ExperimentConfig, datasets: Optional[Tuple[Dataset, Dataset]] = None) -> Dict[str, Any]:
    """
    以相同种子分别在 PURE32、PURE16（可选 MIXED）下训练并比较

    输出 metrics.csv（每精度每轮一行）、tolerance_by_epoch.csv、最终轮的
    tolerance.csv 与 tolerance_summary.json，以及各精度的模型文件。

    Returns:
        Dict[str, Any]: 汇总，含 accuracy_gap、guaranteed_fraction、agree_fraction、
            lemma_lower_bound_holds
    """
    output_dir = _prepare_output(config)
    train, test = datasets or load_datasets(config)
    checkpoints = sorted({e for e in config.tolerance_epochs if e <= config.epochs} | {config.epochs})

    snapshots: Dict[Precision, Dict[int, Model]] = {}
    results: Dict[Precision, TrainingResult] = {}
    for precision in _compare_precisions(config):
        snapshots[precision] = {}

        def keep(epoch: int, model: Model, store=snapshots[precision]):
            if epoch in checkpoints:
                store[epoch] = model.copy()

        results[precision] = _train(config, precision, train, test, output_dir, keep)
        save_model(results[precision].model, os.path.join(output_dir, f'model_{precision.value}.p16n'))

    rows = []
    final_report: Optional[ToleranceReport] = None
    for epoch in checkpoints:
        report = tolerance_report(snapshots[Precision.PURE32][epoch], snapshots[Precision.PURE16][epoch], test)
        rows.append(report.epoch_row(epoch))
        final_report = report
    pd.DataFrame(rows, columns=TOLERANCE_EPOCH_COLUMNS).to_csv(
        os.path.join(output_dir, 'tolerance_by_epoch.csv'), index=False, encoding='utf-8')
    final_report.write(output_dir, prefix='tolerance')

    history = [row for precision in results for row in results[precision].history]
    summary: Dict[str, Any] = {
        'precisions': [p.value for p in results],
        'epsilon_probe': probe_epsilon_reciprocal(config.epsilon),
        'accuracy_gap': _final_gap(results, Precision.PURE16),
        'guaranteed_fraction': final_report.guaranteed_fraction,
        'agree_fraction': final_report.agree_fraction,
        'lemma_lower_bound_holds': bool(final_report.agree_fraction >= final_report.guaranteed_fraction),
        'mean_gamma_over_mean_delta': _ratio(final_report.gamma_stats['mean'], final_report.delta_stats['mean']),
        'instability': {p.value: r.instability_summary() for p, r in results.items()},
    }
    if Precision.MIXED in results:
        summary['accuracy_gap_mixed'] = _final_gap(results, Precision.MIXED)
    paths = write_metrics(history, os.path.join(output_dir, 'metrics.csv'), summary)

    if config.plot_results:
        if history:
            plot_training_curves({p.value: metrics_frame(r.history) for p, r in results.items()},
                                 os.path.join(output_dir, 'training_curves.png'))
        plot_tolerance_histograms(final_report.records, os.path.join(output_dir, 'tolerance_histograms.png'))
    logger.info(f"精度对比完成: accuracy_gap={summary['accuracy_gap']}, "
                f"guaranteed={summary['guaranteed_fraction']:.4f}, agree={summary['agree_fraction']:.4f}")
    summary.update(paths)
    return summary


def _final_gap(results: Dict[Precision, TrainingResult], precision: Precision) -> Optional[float]:
    base, other = results[Precision.PURE32].history, results[precision].history
    if not base or not other:
        return None
    return abs(other[-1].test_acc - base[-1].test_acc)


def _ratio(numerator: float, denominator: float) -> Optional[float]:
    return numerator / denominator if denominator > 0 else None


def cmd_scan(function: str, output_dir: str, oracle: str = 'binary32') -> Dict[str, Any]:
    """全值域扫描一个函数并写出 scan_<function>.csv / scan_<function>_summary.json"""
    report = scan_function(function, oracle=oracle)
    paths = report.write(output_dir)
    summary = report.summary()
    summary.update(paths)
    return summary


def cmd_model_info(path: str, other_path: Optional[str] = None) -> Dict[str, Any]:
    """
    读取模型文件信息；给出第二个文件时附带两者的参数字节比与文件字节比

    Raises:
        ModelFileError: 文件损坏或格式不符
    """
    info = inspect_model_file(path).to_dict()
    if other_path is not None:
        other = inspect_model_file(other_path).to_dict()
        info['compared_with'] = other
        info['payload_ratio'] = _ratio(info['payload_bytes'], other['payload_bytes'])
        info['file_ratio'] = _ratio(info['file_bytes'], other['file_bytes'])
    return info


def format_model_info(info: Dict[str, Any]) -> str:
    """模型信息的可读文本"""
    lines = [
        f"文件: {info['path']}",
        f"精度: {info['precision']} (标记 {info['tag_byte']}), 格式版本 {info['version']}, 种子 {info['seed']}",
        f"输入形状: {info['input_shape']}",
    ]
    for index, layer in enumerate(info['layers']):
        lines.append(f"  [{index}] {layer['kind']:<10} 结构 {layer['extents']}  参数 {layer['param_shapes']}  "
                     f"个数 {layer['param_count']}")
    lines.append(f"参数总数: {info['param_count']}")
    lines.append(f"参数字节: {info['payload_bytes']}, 文件字节: {info['file_bytes']}")
    if 'payload_ratio' in info:
        lines.append(f"与 {info['compared_with']['path']} 的参数字节比: {info['payload_ratio']}, "
                     f"文件字节比: {info['file_ratio']}")
    return '\n'.join(lines)


def cmd_tolerance(model32_path: str, model16_path: str, config: ExperimentConfig,
                  test_set: Optional[Dataset] = None) -> Dict[str, Any]:
    """
    比较两个已保存模型在测试集上的 δ、Γ 与预测一致性

    第二个文件不是 PURE16 时，先把它的参数舍入到 binary16。
    """
    output_dir = config.output_dir
    os.makedirs(output_dir, exist_ok=True)
    if test_set is None:
        if not config.test_images or not config.test_labels:
            raise ConfigError("tolerance 需要 test_images 与 test_labels")
        test_set = load_mnist(config.test_images, config.test_labels, config.test_limit)
    model32 = load_model(model32_path)
    model16 = load_model(model16_path)
    if model16.precision is not Precision.PURE16:
        logger.info(f"{model16_path} 精度为 {model16.precision.value}，转换为 pure16 后比较")
        model16 = model16.cast(Precision.PURE16)

    report = tolerance_report(model32, model16, test_set)
    paths = report.write(output_dir, prefix='tolerance')
    if config.plot_results:
        plot_tolerance_histograms(report.records, os.path.join(output_dir, 'tolerance_histograms.png'))
    summary = report.summary()
    summary.update(paths)
    return summary


def cmd_sweep(config: ExperimentConfig, datasets: Optional[Tuple[Dataset, Dataset]] = None) -> Dict[str, Any]:
    """
    对 batch_sizes 中的每个批大小在各精度下训练，写出 sweep.csv

    训练中止的组合记为 NaN 并继续。
    """
    output_dir = _prepare_output(config)
    train, test = datasets or load_datasets(config)
    rows = []
    for batch_size in config.batch_sizes:
        run_config = config.with_overrides(batch_size=batch_size)
        for precision in _compare_precisions(config):
            try:
                result = Trainer(run_config, precision).train(train, test)
            except TrainingInstabilityError as e:
                logger.warning(f"批大小 {batch_size} 精度 {precision.value} 训练中止: {e}")
                rows.append({'batch_size': batch_size, 'precision': precision.value, 'test_acc': np.nan,
                             'test_top2_acc': np.nan, 'test_loss': np.nan, 'wall_time': np.nan})
                continue
            last = result.history[-1] if result.history else None
            rows.append({
                'batch_size': batch_size,
                'precision': precision.value,
                'test_acc': last.test_acc if last else np.nan,
                'test_top2_acc': last.test_top2_acc if last else np.nan,
                'test_loss': last.test_loss if last else np.nan,
                'wall_time': float(sum(h.wall_time for h in result.history)),
            })
    frame = pd.DataFrame(rows, columns=SWEEP_COLUMNS)
    path = os.path.join(output_dir, 'sweep.csv')
    frame.to_csv(path, index=False, encoding='utf-8')
    logger.info(f"批大小扫描结果已保存至 {path}")
    return {'csv': path, 'rows': len(frame)}
