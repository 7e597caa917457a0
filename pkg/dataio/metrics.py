#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
训练指标模块
逐轮指标的计算与 CSV/JSON 输出
"""

import json
import os
from dataclasses import asdict, dataclass
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from sklearn.metrics import accuracy_score, top_k_accuracy_score

from utils.logger import get_logger

logger = get_logger('dataio.metrics')

METRIC_COLUMNS = [
    'epoch', 'train_acc', 'test_acc', 'train_loss', 'test_loss', 'wall_time',
    'overflow_count', 'underflow_count', 'nan_count', 'train_top2_acc', 'test_top2_acc',
]


@dataclass
class EpochMetrics:
    """一轮训练后的指标"""
    epoch: int
    train_acc: float
    test_acc: float
    train_loss: float
    test_loss: float
    wall_time: float
    overflow_count: int = 0
    underflow_count: int = 0
    nan_count: int = 0
    train_top2_acc: float = float('nan')
    test_top2_acc: float = float('nan')
    precision: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def predictions(probs: np.ndarray) -> np.ndarray:
    """逐行取概率最大的类别（并列时取下标最小者，含 NaN 的行视为类别 -1）"""
    probs = np.asarray(probs, dtype=np.float64)
    preds = np.argmax(np.where(np.isnan(probs), -np.inf, probs), axis=1)
    return np.where(np.isnan(probs).any(axis=1), -1, preds)


def accuracy(probs: np.ndarray, labels: np.ndarray) -> float:
    if len(labels) == 0:
        return float('nan')
    return float(accuracy_score(np.asarray(labels), predictions(probs)))


def top2_accuracy(probs: np.ndarray, labels: np.ndarray) -> float:
    """前两名命中率；非有限分数按 -1 处理"""
    probs = np.asarray(probs, dtype=np.float64)
    if len(labels) == 0 or probs.shape[1] < 2:
        return float('nan')
    if probs.shape[1] == 2:
        return 1.0
    scores = np.where(np.isfinite(probs), probs, -1.0)
    return float(top_k_accuracy_score(np.asarray(labels), scores, k=2,
                                      labels=np.arange(probs.shape[1])))


def metrics_frame(history: Sequence[Union[EpochMetrics, Dict[str, Any]]]) -> pd.DataFrame:
    """指标列表转为 DataFrame，列顺序固定；含精度字段时 precision 列在最前"""
    rows = [h.to_dict() if isinstance(h, EpochMetrics) else dict(h) for h in history]
    with_precision = any(row.get('precision') for row in rows)
    columns = (['precision'] if with_precision else []) + METRIC_COLUMNS
    return pd.DataFrame(rows, columns=columns)


def write_metrics(history: Sequence[Union[EpochMetrics, Dict[str, Any]]], path: str,
                  summary: Optional[Dict[str, Any]] = None) -> Dict[str, str]:
    """
    写出逐轮指标 CSV 和同名 JSON 汇总

    Args:
        history: 逐轮指标
        path: CSV 路径，汇总写到同名 .json
        summary: 追加到汇总中的字段（例如 accuracy_gap）

    Returns:
        Dict[str, str]: 'csv' 与 'json' 的路径
    """
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    frame = metrics_frame(history)
    frame.to_csv(path, index=False, encoding='utf-8')

    result: Dict[str, Any] = {'epochs': int(frame['epoch'].nunique()) if not frame.empty else 0}
    if not frame.empty:
        if 'precision' in frame.columns:
            final_rows = frame.sort_values('epoch').groupby('precision').tail(1)
            result['final'] = {row['precision']: _clean(row) for _, row in final_rows.iterrows()}
        else:
            result['final'] = _clean(frame.iloc[-1])
        result['total_events'] = {
            'overflow_count': int(frame['overflow_count'].sum()),
            'underflow_count': int(frame['underflow_count'].sum()),
            'nan_count': int(frame['nan_count'].sum()),
        }
    if summary:
        result.update(summary)

    json_path = os.path.splitext(path)[0] + '.json'
    with open(json_path, 'w', encoding='utf-8') as f:
        json.dump(result, f, indent=2, ensure_ascii=False, default=_json_default)
    logger.info(f"指标已保存至: {path} 和 {json_path}")
    return {'csv': path, 'json': json_path}


def _clean(row: pd.Series) -> Dict[str, Any]:
    return {key: _json_default(value) for key, value in row.items()}


def _json_default(value):
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if np.isfinite(value) else None
    if isinstance(value, np.ndarray):
        return value.tolist()
    return value
