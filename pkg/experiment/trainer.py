#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
训练模块
按配置在指定精度下训练模型，逐轮评估并检测数值不稳定
"""

import time
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Union

import numpy as np

from dataio.metrics import EpochMetrics, accuracy, top2_accuracy
from dataio.mnist import Dataset, batches
from nn.losses import cross_entropy
from nn.model import Model, create_model
from optim.instability import probe_epsilon_reciprocal
from optim.optimizers import Optimizer, create_optimizer
from tensor.precision import FloatContext, NumericEvents, Precision
from utils.exceptions import TrainingInstabilityError
from utils.logger import get_logger
from .config import ExperimentConfig

logger = get_logger('experiment.trainer')

EVAL_BATCH_SIZE = 256

EpochCallback = Callable[[int, Model], None]


@dataclass
class Evaluation:
    """一个数据集上的评估结果"""
    accuracy: float
    top2_accuracy: float
    loss: float
    probs: np.ndarray = field(repr=False)
    events: NumericEvents = field(default_factory=NumericEvents)


def evaluate(model: Model, dataset: Dataset, batch_size: int = EVAL_BATCH_SIZE) -> Evaluation:
    """
    推理模式评估

    概率按模型精度计算；报告用的损失在 binary32 上对这些概率求平均。
    """
    if len(dataset) == 0:
        return Evaluation(float('nan'), float('nan'), float('nan'),
                          np.zeros((0, model.num_classes), dtype=np.float32))
    probs, events = model.predict_proba(dataset.images, batch_size=batch_size)
    loss, _ = cross_entropy(probs.astype(np.float32), dataset.labels, Precision.PURE32)
    return Evaluation(
        accuracy=accuracy(probs, dataset.labels),
        top2_accuracy=top2_accuracy(probs, dataset.labels),
        loss=loss,
        probs=probs,
        events=events,
    )


@dataclass
class TrainingResult:
    model: Model
    history: List[EpochMetrics]
    optimizer: Optimizer
    test_evaluation: Optional[Evaluation] = None

    def instability_summary(self) -> Dict[str, Any]:
        return self.optimizer.detector.summary()


class Trainer:
    """
    单一精度模式下的训练器

    同一配置、同一种子下的两次训练逐位相同；不同精度模式使用同一组初始化抽样。
    """

    def __init__(self, config: ExperimentConfig, precision: Optional[Union[Precision, str]] = None,
                 model: Optional[Model] = None):
        self.config = config
        self.precision = Precision.parse(precision or config.precision)
        self.model = model if model is not None else create_model(
            config.architecture, config.input_shape, self.precision, config.seed)
        self.optimizer = create_optimizer(self.model, config.optimizer, **config.optimizer_hyperparameters())

    def _abort_report(self, epoch: int, step: int, fraction: float,
                      history: List[EpochMetrics]) -> Dict[str, Any]:
        config = self.config
        report = {
            'precision': self.precision.value,
            'optimizer': config.optimizer,
            'hyperparameters': config.optimizer_hyperparameters(),
            'epoch': epoch,
            'step': step,
            'nonfinite_fraction': fraction,
            'threshold': config.abort_nonfinite_fraction,
            'epsilon_probe': probe_epsilon_reciprocal(config.epsilon),
            'history': [h.to_dict() for h in history],
        }
        report.update(self.optimizer.detector.summary())
        return report

    def train_epoch(self, train_set: Dataset, epoch: int, history: List[EpochMetrics]) -> NumericEvents:
        """
        训练一轮

        Returns:
            NumericEvents: 本轮前向与反向的事件累计

        Raises:
            TrainingInstabilityError: 非有限权重比例超过阈值
        """
        config = self.config
        model = self.model
        events = NumericEvents()
        for xb, yb in batches(train_set, config.batch_size, config.seed, epoch):
            ctx = FloatContext.for_precision(model.precision)
            _, cache, _ = model.forward(xb, training=True, ctx=ctx)
            grads, _ = model.backward(cache, yb, ctx=ctx)
            self.optimizer.step(grads)
            events.merge(ctx.events)

            fraction = model.nonfinite_fraction()
            if fraction > config.abort_nonfinite_fraction:
                report = self._abort_report(epoch, self.optimizer.state.t, fraction, history)
                first = report.get('first_event')
                error_msg = (f"第 {epoch} 轮第 {self.optimizer.state.t} 步非有限权重比例 {fraction:.2%} "
                             f"超过阈值 {config.abort_nonfinite_fraction:.0%}，首个事件: {first}")
                logger.error(error_msg)
                raise TrainingInstabilityError(error_msg, report)
        return events

    def train(self, train_set: Dataset, test_set: Dataset,
              epoch_callback: Optional[EpochCallback] = None) -> TrainingResult:
        """
        执行完整训练

        Args:
            train_set: 训练集
            test_set: 测试集
            epoch_callback: 每轮结束后以 (轮次, 模型) 调用；训练前以轮次 0 调用一次

        Returns:
            TrainingResult: 模型、逐轮指标与优化器
        """
        config = self.config
        logger.info(f"开始训练: 精度 {self.precision.value}, 优化器 {config.optimizer}, "
                    f"轮数 {config.epochs}, 批大小 {config.batch_size}, 训练样本 {len(train_set)}")
        if epoch_callback is not None:
            epoch_callback(0, self.model)

        history: List[EpochMetrics] = []
        test_eval = None
        for epoch in range(1, config.epochs + 1):
            start = time.perf_counter()
            events = self.train_epoch(train_set, epoch, history)
            wall_time = time.perf_counter() - start

            train_eval = evaluate(self.model, train_set)
            test_eval = evaluate(self.model, test_set)
            if events.any():
                logger.warning(f"第 {epoch} 轮出现数值事件: {events.to_dict()}")
            history.append(EpochMetrics(
                epoch=epoch,
                train_acc=train_eval.accuracy,
                test_acc=test_eval.accuracy,
                train_loss=train_eval.loss,
                test_loss=test_eval.loss,
                wall_time=wall_time,
                overflow_count=events.overflow_count,
                underflow_count=events.underflow_to_zero_count,
                nan_count=events.nan_count,
                train_top2_acc=train_eval.top2_accuracy,
                test_top2_acc=test_eval.top2_accuracy,
                precision=self.precision.value,
            ))
            logger.info(f"[{self.precision.value}] 第 {epoch}/{config.epochs} 轮: "
                        f"训练准确率 {train_eval.accuracy:.4f}, 测试准确率 {test_eval.accuracy:.4f}, "
                        f"训练损失 {train_eval.loss:.4f}, 用时 {wall_time:.1f}s")
            if epoch_callback is not None:
                epoch_callback(epoch, self.model)

        return TrainingResult(model=self.model, history=history, optimizer=self.optimizer,
                              test_evaluation=test_eval)
