#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
MNIST 数据模块
负责 IDX 文件的解析与写出、像素归一化以及确定性的小批量划分

IDX 格式：4 字节大端魔数（图像 2051，标签 2049），随后每一维一个大端 uint32，
最后是逐字节的原始数据。文件名以 .gz 结尾时按 gzip 读写。
"""

import gzip
import os
import struct
from dataclasses import dataclass
from typing import Iterator, Optional, Tuple, Union

import numpy as np

from tensor.precision import Precision
from utils.exceptions import (ContractViolationError, CountMismatchError, DatasetError,
                              TruncatedPayloadError, WrongMagicError)
from utils.logger import get_logger

logger = get_logger('dataio.mnist')

IMAGES_MAGIC = 2051
LABELS_MAGIC = 2049
PIXEL_SCALE = 255.0


@dataclass(frozen=True)
class Dataset:
    """
    数据集

    Attributes:
        images: [N×C×H×W] binary32 数组，像素已归一化到 [0, 1]；
            进入模型时再舍入到模型的存储宽度
        labels: 长度为 N 的类别下标
    """
    images: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        images = np.asarray(self.images, dtype=np.float32)
        labels = np.asarray(self.labels, dtype=np.int64)
        if images.shape[0] != labels.shape[0]:
            error_msg = f"图像数 {images.shape[0]} 与标签数 {labels.shape[0]} 不一致"
            logger.error(error_msg)
            raise CountMismatchError(error_msg)
        if images.size and (images.min() < 0 or images.max() > 1):
            raise ContractViolationError("像素值必须位于 [0, 1]")
        images.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, 'images', images)
        object.__setattr__(self, 'labels', labels)

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    @property
    def sample_shape(self) -> Tuple[int, ...]:
        return tuple(self.images.shape[1:])

    @property
    def num_classes(self) -> int:
        return int(self.labels.max()) + 1 if len(self) else 0

    def subset(self, limit: Optional[int]) -> 'Dataset':
        """取前 limit 个样本"""
        if limit is None or limit >= len(self):
            return self
        return Dataset(self.images[:limit], self.labels[:limit])

    def as_precision(self, precision: Union[Precision, str]) -> np.ndarray:
        """图像舍入到给定精度模式的存储宽度"""
        return self.images.astype(Precision.parse(precision).storage_dtype)


def _open(path: str, mode: str):
    if str(path).endswith('.gz'):
        return gzip.open(path, mode)
    return open(path, mode)


def _read_idx(path: str, expected_magic: int) -> np.ndarray:
    if not os.path.exists(path):
        error_msg = f"IDX 文件不存在: {path}"
        logger.error(error_msg)
        raise DatasetError(error_msg)
    with _open(path, 'rb') as f:
        raw = f.read()

    if len(raw) < 4:
        raise TruncatedPayloadError(f"IDX 文件过短，缺少魔数: {path}")
    magic = struct.unpack('>I', raw[:4])[0]
    if magic != expected_magic:
        error_msg = f"IDX 魔数错误: {path} 为 {magic}，期望 {expected_magic}"
        logger.error(error_msg)
        raise WrongMagicError(error_msg)

    ndim = magic & 0xFF
    header_len = 4 + 4 * ndim
    if len(raw) < header_len:
        raise TruncatedPayloadError(f"IDX 维度头不完整: {path}")
    dims = struct.unpack(f'>{ndim}I', raw[4:header_len])
    expected = int(np.prod(dims, dtype=np.int64))
    payload = raw[header_len:]
    if len(payload) < expected:
        error_msg = f"IDX 数据被截断: {path} 声明 {expected} 字节，实际 {len(payload)} 字节"
        logger.error(error_msg)
        raise TruncatedPayloadError(error_msg)
    if len(payload) > expected:
        logger.warning(f"IDX 文件末尾有 {len(payload) - expected} 字节多余数据，已忽略: {path}")
    return np.frombuffer(payload, dtype=np.uint8, count=expected).reshape(dims)


def normalize_pixels(raw: np.ndarray) -> np.ndarray:
    """像素字节除以 255（binary32）"""
    return np.asarray(raw, dtype=np.float32) / np.float32(PIXEL_SCALE)


def load_mnist(images_path: str, labels_path: str, limit: Optional[int] = None) -> Dataset:
    """
    读取 MNIST IDX 文件

    Args:
        images_path: 图像文件路径（魔数 2051）
        labels_path: 标签文件路径（魔数 2049）
        limit: 只保留前 limit 个样本

    Returns:
        Dataset: 形状为 [N×1×H×W] 的数据集

    Raises:
        WrongMagicError: 魔数不符
        TruncatedPayloadError: 数据长度不足
        CountMismatchError: 图像与标签数量不一致
    """
    raw_images = _read_idx(images_path, IMAGES_MAGIC)
    raw_labels = _read_idx(labels_path, LABELS_MAGIC)
    if raw_images.ndim != 3 or raw_labels.ndim != 1:
        raise DatasetError(f"IDX 维度不符合 MNIST 约定: 图像 {raw_images.shape}, 标签 {raw_labels.shape}")
    if raw_images.shape[0] != raw_labels.shape[0]:
        error_msg = f"图像数 {raw_images.shape[0]} 与标签数 {raw_labels.shape[0]} 不一致"
        logger.error(error_msg)
        raise CountMismatchError(error_msg)

    if limit is not None:
        raw_images, raw_labels = raw_images[:limit], raw_labels[:limit]
    images = normalize_pixels(raw_images)[:, None, :, :]
    dataset = Dataset(images, raw_labels.astype(np.int64))
    logger.info(f"读取 MNIST: {images_path}, 样本数 {len(dataset)}, 形状 {dataset.sample_shape}")
    return dataset


def write_idx_images(path: str, images: np.ndarray) -> None:
    """把 [N×H×W] uint8 图像写成 IDX 文件"""
    images = np.asarray(images, dtype=np.uint8)
    if images.ndim != 3:
        raise ContractViolationError(f"IDX 图像需为三维数组，当前形状 {images.shape}")
    header = struct.pack('>I', IMAGES_MAGIC) + struct.pack('>3I', *images.shape)
    with _open(path, 'wb') as f:
        f.write(header + images.tobytes())


def write_idx_labels(path: str, labels: np.ndarray) -> None:
    """把一维 uint8 标签写成 IDX 文件"""
    labels = np.asarray(labels, dtype=np.uint8)
    if labels.ndim != 1:
        raise ContractViolationError(f"IDX 标签需为一维数组，当前形状 {labels.shape}")
    header = struct.pack('>I', LABELS_MAGIC) + struct.pack('>I', labels.shape[0])
    with _open(path, 'wb') as f:
        f.write(header + labels.tobytes())


def epoch_permutation(n: int, seed: int, epoch: int) -> np.ndarray:
    """由 (seed, epoch) 派生的 PCG64 置换"""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((int(seed), int(epoch)))))
    return rng.permutation(n)


def batches(dataset: Dataset, batch_size: int, seed: int, epoch: int) -> Iterator[Tuple[np.ndarray, np.ndarray]]:
    """
    按 (seed, epoch) 确定性打乱后划分小批量，保留最后不足一批的部分

    Yields:
        (np.ndarray, np.ndarray): 图像批与标签批

    Raises:
        ContractViolationError: batch_size < 1
    """
    if int(batch_size) < 1:
        error_msg = f"batch_size 必须 >= 1，当前为 {batch_size}"
        logger.error(error_msg)
        raise ContractViolationError(error_msg)
    order = epoch_permutation(len(dataset), seed, epoch)
    for start in range(0, len(order), int(batch_size)):
        index = order[start:start + int(batch_size)]
        yield dataset.images[index], dataset.labels[index]
