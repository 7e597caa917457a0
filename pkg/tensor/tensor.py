#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
带精度标签的稠密张量
"""

from typing import Sequence, Tuple, Union

import numpy as np

from utils.exceptions import ContractViolationError
from .precision import Precision


class Tensor:
    """
    行主序稠密张量，元素以标签的存储宽度保存

    创建后不可修改（底层数组设置为只读），可以在线程间共享。
    """

    __slots__ = ('_data', '_precision')

    def __init__(self, data: np.ndarray, precision: Union[Precision, str]):
        """
        Args:
            data: 元素数组，dtype 必须等于标签的存储宽度
            precision: 精度标签
        """
        precision = Precision.parse(precision)
        data = np.asarray(data)
        if data.dtype != precision.storage_dtype:
            raise ContractViolationError(
                f"张量数据类型 {data.dtype} 与精度 {precision.value} 的存储宽度 "
                f"{precision.storage_dtype} 不符")
        if data.ndim == 0 or any(extent <= 0 for extent in data.shape):
            raise ContractViolationError(f"张量的各维长度必须为正: {data.shape}")
        data = np.ascontiguousarray(data)
        if data.flags.writeable:
            data = data.copy()
            data.setflags(write=False)
        self._data = data
        self._precision = precision

    @classmethod
    def from_values(cls, values, precision: Union[Precision, str]) -> 'Tensor':
        """把任意实数数组就近偶数舍入到标签的存储宽度"""
        precision = Precision.parse(precision)
        wide = np.asarray(values, dtype=np.float64)
        with np.errstate(over='ignore'):
            return cls(wide.astype(precision.storage_dtype), precision)

    @classmethod
    def full(cls, shape: Sequence[int], value: float, precision: Union[Precision, str]) -> 'Tensor':
        precision = Precision.parse(precision)
        return cls.from_values(np.full(tuple(shape), value, dtype=np.float64), precision)

    @property
    def precision(self) -> Precision:
        return self._precision

    @property
    def shape(self) -> Tuple[int, ...]:
        return self._data.shape

    @property
    def ndim(self) -> int:
        return self._data.ndim

    @property
    def size(self) -> int:
        return self._data.size

    @property
    def data(self) -> np.ndarray:
        """只读的元素数组"""
        return self._data

    def flat(self) -> np.ndarray:
        """行主序展平的元素缓冲区"""
        return self._data.reshape(-1)

    def numpy(self, dtype=None) -> np.ndarray:
        """返回可写副本，可选转换宽度"""
        return self._data.astype(dtype or self._data.dtype, copy=True)

    def bits(self) -> np.ndarray:
        """binary16 张量的 uint16 位模式"""
        if self._data.dtype != np.float16:
            raise ContractViolationError("只有 binary16 存储的张量有 16 位位模式")
        return self._data.view(np.uint16)

    def astype(self, precision: Union[Precision, str]) -> 'Tensor':
        """转换到另一个精度标签（变窄时就近偶数舍入）"""
        precision = Precision.parse(precision)
        with np.errstate(over='ignore'):
            return Tensor(self._data.astype(precision.storage_dtype), precision)

    def equals(self, other: 'Tensor') -> bool:
        """逐位相等（NaN 按位模式比较）"""
        if self.precision is not other.precision or self.shape != other.shape:
            return False
        return bool(np.array_equal(self._data.view(_uint_view(self._data)),
                                   other._data.view(_uint_view(other._data))))

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, precision={self.precision.value})"


def _uint_view(data: np.ndarray):
    return {2: np.uint16, 4: np.uint32, 8: np.uint64}[data.dtype.itemsize]
