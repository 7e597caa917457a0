#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
误差容限分析模块
计算两种精度模型之间的浮点误差 δ、误差容限 Γ，以及预测一致性证书

对一个输入 x：δ 为两个概率向量之差的无穷范数，Γ 为 32 位模型概率向量中
最大值与次大值之差。Γ > 2δ（或 δ = 0）时两个模型的预测必然相同；
若证书成立而预测不同，说明实现存在缺陷，直接抛出 TheoryViolationError。
"""

import json
import os
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd
from scipy import stats
from sklearn.metrics import accuracy_score, confusion_matrix

from utils.exceptions import ArchitectureMismatchError, ContractViolationError, TheoryViolationError
from utils.logger import get_logger

logger = get_logger('analysis.tolerance')

RECORD_COLUMNS = ['id', 'delta', 'gamma', 'pred32', 'pred16', 'agree', 'guaranteed']

# 浮点判定与 Γ−2δ 的距离小于该值时改用有理数精确判定
_EXACT_MARGIN = 1e-9


@dataclass
class ToleranceRecord:
    """单个输入的容限记录"""
    id: int
    delta: float
    gamma: float
    pred32: int
    pred16: int
    agree: bool
    guaranteed: bool


def _as_vector(p) -> np.ndarray:
    values = np.asarray(p, dtype=np.float64).reshape(-1)
    if values.size == 0:
        error_msg = "概率向量不能为空"
        logger.error(error_msg)
        raise ContractViolationError(error_msg)
    return values


def pred(p) -> int:
    """
    分类结果：最大概率的下标，并列时取最小下标

    Args:
        p: 概率向量

    Returns:
        int: 类别下标
    """
    return int(np.argmax(_as_vector(p)))


def delta(p32, p16) -> float:
    """两个概率向量之差的无穷范数（先把 binary16 向量精确上转）"""
    a, b = _as_vector(p32), _as_vector(p16)
    if a.shape != b.shape:
        error_msg = f"概率向量长度不一致: {a.size} vs {b.size}"
        logger.error(error_msg)
        raise ContractViolationError(error_msg)
    return float(np.max(np.abs(a - b)))


def gamma(p) -> float:
    """最大概率与次大概率之差，最大值重复时为 0"""
    values = _as_vector(p)
    if values.size < 2:
        error_msg = f"计算误差容限至少需要 2 个类别，实际为 {values.size}"
        logger.error(error_msg)
        raise ContractViolationError(error_msg)
    top_two = np.partition(values, values.size - 2)[-2:]
    return float(top_two[1] - top_two[0])


def _exact_guarantee(p32: np.ndarray, p16: np.ndarray) -> bool:
    a = [Fraction(float(x)) for x in p32]
    b = [Fraction(float(x)) for x in p16]
    exact_delta = max(abs(x - y) for x, y in zip(a, b))
    if exact_delta == 0:
        return True
    ordered = sorted(a, reverse=True)
    return ordered[0] - ordered[1] > 2 * exact_delta


def is_guaranteed(gamma_value: float, delta_value: float, p32=None, p16=None) -> bool:
    """
    证书条件 Γ > 2δ 或 δ = 0

    浮点判定接近边界时用原始向量做有理数精确判定。
    """
    if delta_value == 0:
        return True
    margin = gamma_value - 2 * delta_value
    if abs(margin) > _EXACT_MARGIN or p32 is None:
        return margin > 0
    return _exact_guarantee(_as_vector(p32), _as_vector(p16))


def lemma_certificate(p32, p16, input_id: int = 0) -> ToleranceRecord:
    """
    生成单个输入的容限记录并检查证书

    Args:
        p32: 32 位模型的概率向量
        p16: 16 位模型的概率向量
        input_id: 输入编号

    Returns:
        ToleranceRecord: 容限记录

    Raises:
        TheoryViolationError: 证书成立但两个预测不同
    """
    d = delta(p32, p16)
    g = gamma(p32)
    pred32, pred16 = pred(p32), pred(p16)
    guaranteed = is_guaranteed(g, d, p32, p16)
    record = ToleranceRecord(id=int(input_id), delta=d, gamma=g, pred32=pred32, pred16=pred16,
                             agree=pred32 == pred16, guaranteed=guaranteed)
    if guaranteed and not record.agree:
        error_msg = (f"输入 {input_id}: Γ={g!r} > 2δ={2 * d!r} 但预测不同 "
                     f"({pred32} vs {pred16})")
        logger.error(error_msg)
        raise TheoryViolationError(error_msg)
    return record


def certify_batch(p32: np.ndarray, p16: np.ndarray, ids: Optional[np.ndarray] = None) -> pd.DataFrame:
    """
    批量生成容限记录

    δ、Γ、预测按向量化方式计算，只有接近边界的行才逐行精确判定。

    Returns:
        pd.DataFrame: 列顺序为 id, delta, gamma, pred32, pred16, agree, guaranteed
    """
    a = np.asarray(p32, dtype=np.float64)
    b = np.asarray(p16, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 2:
        error_msg = f"概率矩阵形状不一致: {a.shape} vs {b.shape}"
        logger.error(error_msg)
        raise ContractViolationError(error_msg)
    if a.shape[1] < 2:
        raise ContractViolationError("计算误差容限至少需要 2 个类别")
    if ids is None:
        ids = np.arange(a.shape[0])

    deltas = np.max(np.abs(a - b), axis=1)
    top_two = np.partition(a, a.shape[1] - 2, axis=1)[:, -2:]
    gammas = top_two[:, 1] - top_two[:, 0]
    pred32 = np.argmax(a, axis=1)
    pred16 = np.argmax(b, axis=1)

    margin = gammas - 2 * deltas
    guaranteed = (deltas == 0) | (margin > 0)
    for row in np.flatnonzero((np.abs(margin) <= _EXACT_MARGIN) & (deltas != 0)):
        guaranteed[row] = _exact_guarantee(a[row], b[row])

    records = pd.DataFrame({
        'id': np.asarray(ids, dtype=np.int64),
        'delta': deltas,
        'gamma': gammas,
        'pred32': pred32.astype(np.int64),
        'pred16': pred16.astype(np.int64),
        'agree': pred32 == pred16,
        'guaranteed': guaranteed,
    }, columns=RECORD_COLUMNS)

    violations = records[records['guaranteed'] & ~records['agree']]
    if not violations.empty:
        first = violations.iloc[0]
        error_msg = (f"{len(violations)} 个输入证书成立但预测不同，首个为输入 {int(first['id'])} "
                     f"(Γ={first['gamma']!r}, δ={first['delta']!r})")
        logger.error(error_msg)
        raise TheoryViolationError(error_msg)
    return records


def describe_series(values) -> Dict[str, float]:
    """最小值、最大值、均值、总体方差"""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        return {'min': float('nan'), 'max': float('nan'), 'mean': float('nan'), 'var': float('nan')}
    summary = stats.describe(values, ddof=0)
    return {'min': float(summary.minmax[0]), 'max': float(summary.minmax[1]),
            'mean': float(summary.mean), 'var': float(summary.variance)}


@dataclass
class ToleranceReport:
    """
    容限报告：逐输入记录与汇总统计

    Attributes:
        records: 逐输入记录表
        delta_stats: δ 的最小值、最大值、均值、方差
        gamma_stats: Γ 的最小值、最大值、均值、方差
        guaranteed_fraction: 证书成立的比例
        agree_fraction: 预测一致的比例
        accuracy32, accuracy16: 提供标签时两个模型的准确率
        confusion: 32 位预测（行）对 16 位预测（列）的混淆矩阵
    """
    records: pd.DataFrame
    delta_stats: Dict[str, float]
    gamma_stats: Dict[str, float]
    guaranteed_fraction: float
    agree_fraction: float
    accuracy32: Optional[float] = None
    accuracy16: Optional[float] = None
    confusion: List[List[int]] = field(default_factory=list)

    @classmethod
    def from_records(cls, records: pd.DataFrame, labels=None, num_classes: Optional[int] = None) -> 'ToleranceReport':
        count = len(records)
        accuracy32 = accuracy16 = None
        if labels is not None and count:
            accuracy32 = float(accuracy_score(labels, records['pred32']))
            accuracy16 = float(accuracy_score(labels, records['pred16']))
        confusion = []
        if count:
            class_labels = list(range(num_classes)) if num_classes else None
            confusion = confusion_matrix(records['pred32'], records['pred16'], labels=class_labels).tolist()
        return cls(
            records=records,
            delta_stats=describe_series(records['delta']),
            gamma_stats=describe_series(records['gamma']),
            guaranteed_fraction=float(records['guaranteed'].mean()) if count else 0.0,
            agree_fraction=float(records['agree'].mean()) if count else 0.0,
            accuracy32=accuracy32,
            accuracy16=accuracy16,
            confusion=confusion,
        )

    @property
    def accuracy_gap(self) -> Optional[float]:
        if self.accuracy32 is None or self.accuracy16 is None:
            return None
        return abs(self.accuracy16 - self.accuracy32)

    def summary(self) -> Dict[str, Any]:
        return {
            'count': int(len(self.records)),
            'delta': self.delta_stats,
            'gamma': self.gamma_stats,
            'guaranteed_fraction': self.guaranteed_fraction,
            'agree_fraction': self.agree_fraction,
            'lemma_lower_bound_holds': bool(self.agree_fraction >= self.guaranteed_fraction),
            'accuracy32': self.accuracy32,
            'accuracy16': self.accuracy16,
            'accuracy_gap': self.accuracy_gap,
            'prediction_confusion': self.confusion,
        }

    def epoch_row(self, epoch: int) -> Dict[str, float]:
        """按轮次汇总的一行（tolerance_by_epoch.csv）"""
        row = {'epoch': int(epoch)}
        for prefix, values in (('delta', self.delta_stats), ('gamma', self.gamma_stats)):
            for key in ('min', 'max', 'mean', 'var'):
                row[f'{prefix}_{key}'] = values[key]
        row['guaranteed_fraction'] = self.guaranteed_fraction
        row['agree_fraction'] = self.agree_fraction
        return row

    def write(self, output_dir: str, prefix: str = 'tolerance') -> Dict[str, str]:
        """
        写出逐输入 CSV 与 JSON 汇总

        Returns:
            Dict[str, str]: 'csv' 与 'json' 文件路径
        """
        os.makedirs(output_dir, exist_ok=True)
        csv_path = os.path.join(output_dir, f'{prefix}.csv')
        json_path = os.path.join(output_dir, f'{prefix}_summary.json')
        self.records.to_csv(csv_path, index=False, columns=RECORD_COLUMNS, encoding='utf-8')
        with open(json_path, 'w', encoding='utf-8') as f:
            json.dump(self.summary(), f, indent=2, ensure_ascii=False)
        logger.info(f"容限报告已保存至: {csv_path} 和 {json_path}")
        return {'csv': csv_path, 'json': json_path}


def check_same_architecture(model32, model16) -> None:
    if model32.architecture() != model16.architecture() or model32.input_shape != model16.input_shape:
        error_msg = "两个模型的结构不一致，无法逐输入比较"
        logger.error(error_msg)
        raise ArchitectureMismatchError(error_msg)
    if model32.seed != model16.seed:
        logger.warning(f"两个模型的初始化种子不同: {model32.seed} vs {model16.seed}")


def tolerance_report(model32, model16, dataset, batch_size: int = 256) -> ToleranceReport:
    """
    在数据集上比较两个模型，生成容限报告

    Args:
        model32: 作为参照的模型（通常为 PURE32）
        model16: 待比较的模型（通常为 PURE16）
        dataset: 提供 images 与 labels 的数据集
        batch_size: 推理批大小

    Returns:
        ToleranceReport: 逐输入记录与汇总

    Raises:
        ArchitectureMismatchError: 两个模型结构不一致
        TheoryViolationError: 出现证书成立但预测不同的输入
    """
    check_same_architecture(model32, model16)
    p32, _ = model32.predict_proba(dataset.images, batch_size=batch_size)
    p16, events16 = model16.predict_proba(dataset.images, batch_size=batch_size)
    if events16.any():
        logger.warning(f"16 位模型推理出现数值事件: {events16.to_dict()}")

    records = certify_batch(p32, p16)
    report = ToleranceReport.from_records(records, labels=dataset.labels, num_classes=model32.num_classes)
    logger.info(f"容限报告: {len(records)} 个输入, 平均δ={report.delta_stats['mean']:.3e}, "
                f"平均Γ={report.gamma_stats['mean']:.3e}, 证书比例={report.guaranteed_fraction:.4f}, "
                f"一致比例={report.agree_fraction:.4f}")
    return report
