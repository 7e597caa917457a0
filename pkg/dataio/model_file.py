#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
模型文件模块
按固定的小端二进制布局保存与读取模型，保证逐位往返

布局：
    "P16N" | 版本 u32 | 精度标记 u8 | 层数 u32 | 种子 u64 | 输入维数 u8 | 输入各维 u32
    每层：类型编号 u8 | 结构整数个数 u8 | 结构整数 u32… | 参数个数 u8
          每个参数：维数 u8 | 各维 u32 | 数据（binary16 或 binary32）
PURE16 的标量宽 2 字节；PURE32 与 MIXED 为 4 字节，MIXED 的可训练参数写 binary32 主副本。
"""

import os
import struct
from dataclasses import dataclass, field
from typing import Any, Dict, List, Tuple

import numpy as np

from nn.layers import LAYER_KIND_IDS, layer_from_extents
from nn.model import Model
from tensor.precision import Precision
from utils.exceptions import (BadMagicError, ContractViolationError, ModelFileError,
                              PayloadLengthError, VersionMismatchError)
from utils.logger import get_logger

logger = get_logger('dataio.model_file')

MAGIC = b'P16N'
FORMAT_VERSION = 1


def _file_dtype(precision: Precision) -> np.dtype:
    return np.dtype('<f2') if precision is Precision.PURE16 else np.dtype('<f4')


@dataclass
class ModelFileInfo:
    """模型文件头与逐层信息"""
    path: str
    version: int
    precision: Precision
    seed: int
    input_shape: Tuple[int, ...]
    layers: List[Dict[str, Any]] = field(default_factory=list)
    param_count: int = 0
    payload_bytes: int = 0
    file_bytes: int = 0

    def to_dict(self) -> Dict[str, Any]:
        return {
            'path': self.path,
            'version': self.version,
            'precision': self.precision.value,
            'tag_byte': f'0x{self.precision.tag_byte:02X}',
            'seed': self.seed,
            'input_shape': list(self.input_shape),
            'layers': self.layers,
            'param_count': self.param_count,
            'payload_bytes': self.payload_bytes,
            'file_bytes': self.file_bytes,
        }


def _param_source(model: Model, index: int, name: str, array: np.ndarray) -> np.ndarray:
    if model.master_params is not None and (index, name) in model.master_params:
        return model.master_params[(index, name)]
    return array


def save_model(model: Model, path: str) -> int:
    """
    保存模型

    Args:
        model: 待保存的模型，参数必须全部有限
        path: 输出路径

    Returns:
        int: 写入的字节数

    Raises:
        ContractViolationError: 存在非有限参数
    """
    precision = model.precision
    dtype = _file_dtype(precision)
    chunks = [
        MAGIC,
        struct.pack('<I', FORMAT_VERSION),
        struct.pack('<B', precision.tag_byte),
        struct.pack('<I', len(model.layers)),
        struct.pack('<Q', model.seed & 0xFFFFFFFFFFFFFFFF),
        struct.pack('<B', len(model.input_shape)),
        struct.pack(f'<{len(model.input_shape)}I', *model.input_shape),
    ]
    for index, layer in enumerate(model.layers):
        extents = layer.extents()
        names = list(layer.param_shapes())
        chunks.append(struct.pack('<BB', layer.kind_id, len(extents)))
        chunks.append(struct.pack(f'<{len(extents)}I', *extents))
        chunks.append(struct.pack('<B', len(names)))
        for name in names:
            array = _param_source(model, index, name, layer.params[name])
            if not np.all(np.isfinite(array)):
                error_msg = f"第 {index} 层参数 {name} 含非有限值，拒绝保存"
                logger.error(error_msg)
                raise ContractViolationError(error_msg)
            chunks.append(struct.pack('<B', array.ndim))
            chunks.append(struct.pack(f'<{array.ndim}I', *array.shape))
            chunks.append(np.ascontiguousarray(array).astype(dtype).tobytes())

    blob = b''.join(chunks)
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(path, 'wb') as f:
        f.write(blob)
    logger.info(f"模型已保存至 {path}: {len(blob)} 字节, 精度 {precision.value}")
    return len(blob)


class _Reader:
    """带越界检查的顺序读取器"""

    def __init__(self, blob: bytes, path: str):
        self.blob = blob
        self.path = path
        self.offset = 0

    def take(self, size: int) -> bytes:
        if self.offset + size > len(self.blob):
            error_msg = f"模型文件长度不足: {self.path} 在偏移 {self.offset} 处需要 {size} 字节"
            logger.error(error_msg)
            raise PayloadLengthError(error_msg)
        chunk = self.blob[self.offset:self.offset + size]
        self.offset += size
        return chunk

    def unpack(self, fmt: str) -> Tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def _parse(path: str):
    with open(path, 'rb') as f:
        blob = f.read()
    reader = _Reader(blob, path)
    if len(blob) < len(MAGIC) or reader.take(len(MAGIC)) != MAGIC:
        error_msg = f"模型文件魔数错误: {path}"
        logger.error(error_msg)
        raise BadMagicError(error_msg)
    version, = reader.unpack('<I')
    if version != FORMAT_VERSION:
        error_msg = f"模型文件版本 {version} 不受支持（当前版本 {FORMAT_VERSION}）"
        logger.error(error_msg)
        raise VersionMismatchError(error_msg)
    tag, = reader.unpack('<B')
    try:
        precision = Precision.from_tag_byte(tag)
    except ContractViolationError as e:
        raise ModelFileError(str(e)) from e
    layer_count, = reader.unpack('<I')
    seed, = reader.unpack('<Q')
    rank, = reader.unpack('<B')
    input_shape = reader.unpack(f'<{rank}I')

    dtype = _file_dtype(precision)
    layers = []
    for _ in range(layer_count):
        kind_id, extent_count = reader.unpack('<BB')
        if kind_id not in LAYER_KIND_IDS:
            error_msg = f"模型文件含未知的层类型编号 {kind_id}: {path}"
            logger.error(error_msg)
            raise ModelFileError(error_msg)
        extents = reader.unpack(f'<{extent_count}I')
        param_count, = reader.unpack('<B')
        params = []
        for _ in range(param_count):
            ndim, = reader.unpack('<B')
            shape = reader.unpack(f'<{ndim}I')
            size = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
            array = np.frombuffer(reader.take(size), dtype=dtype).reshape(shape)
            params.append((tuple(shape), array))
        layers.append((kind_id, tuple(extents), params))

    if reader.offset != len(blob):
        error_msg = f"模型文件末尾有 {len(blob) - reader.offset} 字节多余数据: {path}"
        logger.error(error_msg)
        raise PayloadLengthError(error_msg)
    return version, precision, int(seed), tuple(input_shape), layers, len(blob)


def load_model(path: str) -> Model:
    """
    读取模型文件

    Raises:
        BadMagicError: 魔数不是 "P16N"
        VersionMismatchError: 格式版本不受支持
        PayloadLengthError: 声明长度与实际字节数不符
        ModelFileError: 精度标记或层类型编号未知，或结构无效
    """
    _, precision, seed, input_shape, entries, _ = _parse(path)
    try:
        layers = [layer_from_extents(kind_id, extents) for kind_id, extents, _ in entries]
        model = Model(layers, precision, input_shape, seed)
    except ContractViolationError as e:
        raise ModelFileError(f"模型文件结构无效: {e}") from e

    master = {} if precision is Precision.MIXED else None
    for index, (layer, (_, _, params)) in enumerate(zip(model.layers, entries)):
        expected = layer.param_shapes()
        if [shape for shape, _ in params] != [tuple(s) for s in expected.values()]:
            error_msg = f"第 {index} 层参数形状与结构不符: {[s for s, _ in params]}"
            logger.error(error_msg)
            raise PayloadLengthError(error_msg)
        for name, (_, array) in zip(expected, params):
            values = array.astype(array.dtype.newbyteorder('='))
            layer.params[name] = values.astype(precision.storage_dtype)
            if master is not None and name in layer.trainable:
                master[(index, name)] = values.astype(np.float32)
    model.master_params = master
    logger.info(f"已读取模型 {path}: {len(model.layers)} 层, 精度 {precision.value}")
    return model


def inspect_model_file(path: str) -> ModelFileInfo:
    """读取模型文件头与逐层结构信息，不构建模型"""
    version, precision, seed, input_shape, entries, total = _parse(path)
    info = ModelFileInfo(path=path, version=version, precision=precision, seed=seed,
                         input_shape=input_shape, file_bytes=total)
    for kind_id, extents, params in entries:
        count = int(sum(np.prod(shape, dtype=np.int64) for shape, _ in params))
        info.layers.append({
            'kind_id': kind_id,
            'kind': layer_from_extents(kind_id, extents).kind,
            'extents': list(extents),
            'param_shapes': [list(shape) for shape, _ in params],
            'param_count': count,
        })
        info.param_count += count
    info.payload_bytes = info.param_count * _file_dtype(precision).itemsize
    return info
