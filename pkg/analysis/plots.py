#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
图表模块
绘制不同精度模式的训练曲线以及 δ、Γ 分布直方图
"""

import os
from typing import Dict, Optional

import matplotlib
matplotlib.use('Agg')
import matplotlib.pyplot as plt
import pandas as pd
import seaborn as sns

from utils.logger import get_logger

logger = get_logger('analysis.plots')


def _ensure_parent(path: str) -> None:
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)


def plot_training_curves(histories: Dict[str, pd.DataFrame], save_path: str) -> Optional[str]:
    """
    绘制训练曲线（测试准确率与训练损失，按精度模式分组）

    Args:
        histories: 精度模式名到逐轮指标表的映射，表需含 epoch、test_acc、train_loss 列
        save_path: 图片保存路径

    Returns:
        Optional[str]: 保存路径；数据不足时返回 None
    """
    usable = {name: df for name, df in histories.items()
              if df is not None and not df.empty and {'epoch', 'test_acc', 'train_loss'} <= set(df.columns)}
    if not usable:
        logger.warning("没有可用的训练记录，跳过训练曲线绘制")
        return None

    sns.set_style('whitegrid')
    fig, axes = plt.subplots(1, 2, figsize=(12, 5))
    for name, df in usable.items():
        axes[0].plot(df['epoch'], df['test_acc'], marker='o', linewidth=2, label=name)
        axes[1].plot(df['epoch'], df['train_loss'], marker='o', linewidth=2, label=name)

    axes[0].set_title('测试准确率', fontsize=14)
    axes[0].set_xlabel('轮次', fontsize=12)
    axes[0].set_ylabel('准确率', fontsize=12)
    axes[1].set_title('训练损失', fontsize=14)
    axes[1].set_xlabel('轮次', fontsize=12)
    axes[1].set_ylabel('交叉熵', fontsize=12)
    for ax in axes:
        ax.legend(fontsize=11)
    fig.tight_layout()

    _ensure_parent(save_path)
    fig.savefig(save_path, dpi=300, bbox_inches='tight')
    plt.close(fig)
    logger.info(f"训练曲线已保存至 {save_path}")
    return save_path


def plot_tolerance_histograms(records: pd.DataFrame, save_path: str, bins: int = 50) -> Optional[str]:
    """
    绘制 δ 与 Γ 的分布直方图

    Args:
        records: certify_batch 返回的记录表
        save_path: 图片保存路径
        bins: 直方图分箱数
    """
    if records is None or records.empty:
        logger.warning("容限记录为空，跳过直方图绘制")
        return None

    sns.set_style('whitegrid')
    fig, axes = plt.subplots(1, 2, figsize=(12, 5))
    sns.histplot(records['delta'], bins=bins, ax=axes[0], color='tab:red')
    sns.histplot(records['gamma'], bins=bins, ax=axes[1], color='tab:blue')
    axes[0].set_title('浮点误差 δ 分布', fontsize=14)
    axes[0].set_xlabel('δ', fontsize=12)
    axes[1].set_title('误差容限 Γ 分布', fontsize=14)
    axes[1].set_xlabel('Γ', fontsize=12)
    fig.tight_layout()

    _ensure_parent(save_path)
    fig.savefig(save_path, dpi=300, bbox_inches='tight')
    plt.close(fig)
    logger.info(f"容限直方图已保存至 {save_path}")
    return save_path
