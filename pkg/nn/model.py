#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
模型模块
由层序列组成的分类模型：参数初始化、前向、反向、精度转换
"""

import copy
import math
from dataclasses import dataclass, field
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from tensor.precision import FloatContext, NumericEvents, Precision
from tensor.tensor import Tensor
from utils.exceptions import ContractViolationError
from utils.logger import get_logger
from .layers import BatchNorm, Layer, Softmax, create_layer, layer_from_extents
from .losses import softmax_cross_entropy_grad

logger = get_logger('nn.model')

ParamKey = Tuple[int, str]


@dataclass
class ForwardCache:
    """一次前向传播保存的中间量"""
    layer_caches: List[Any]
    probs: np.ndarray
    version: int
    training: bool
    events: NumericEvents = field(default_factory=NumericEvents)


class Model:
    """
    层序列分类模型

    Attributes:
        layers: 层列表
        precision: 精度模式
        input_shape: 单个样本的形状（不含批维）
        seed: 初始化种子
        master_params: MIXED 模式下可训练参数的 binary32 主副本
        version: 参数版本号，每次参数更新后递增，用于识别过期的前向缓存
    """

    def __init__(self, layers: Sequence[Layer], precision: Union[Precision, str],
                 input_shape: Sequence[int], seed: int = 0):
        self.layers = list(layers)
        self.precision = Precision.parse(precision)
        self.input_shape = tuple(int(e) for e in input_shape)
        self.seed = int(seed)
        self.master_params: Optional[Dict[ParamKey, np.ndarray]] = None
        self.version = 0
        self.layer_shapes = self._compose_shapes()

    def _compose_shapes(self) -> List[Tuple[int, ...]]:
        shapes = []
        shape = self.input_shape
        for layer in self.layers:
            shape = layer.output_shape(shape)
            shapes.append(shape)
        return shapes

    # ------------------------------------------------------------------
    # 参数访问
    # ------------------------------------------------------------------
    @property
    def output_shape(self) -> Tuple[int, ...]:
        return self.layer_shapes[-1] if self.layers else self.input_shape

    @property
    def num_classes(self) -> int:
        return int(self.output_shape[0])

    def parameters(self) -> Iterator[Tuple[int, str, np.ndarray]]:
        """按层序和参数声明顺序遍历全部参数"""
        for index, layer in enumerate(self.layers):
            for name in layer.param_shapes():
                yield index, name, layer.params[name]

    def trainable_parameters(self) -> Iterator[Tuple[int, str, np.ndarray]]:
        for index, layer in enumerate(self.layers):
            for name in layer.trainable:
                yield index, name, layer.params[name]

    def num_parameters(self) -> int:
        return int(sum(array.size for _, _, array in self.parameters()))

    def set_param(self, key: ParamKey, value: np.ndarray) -> None:
        index, name = key
        with np.errstate(over='ignore'):
            self.layers[index].params[name] = np.asarray(value).astype(self.precision.storage_dtype)

    def mark_updated(self) -> None:
        self.version += 1

    def nonfinite_fraction(self) -> float:
        """非有限权重所占比例（MIXED 模式按主副本统计）"""
        if self.master_params is not None:
            arrays = list(self.master_params.values())
        else:
            arrays = [array for _, _, array in self.trainable_parameters()]
        total = sum(a.size for a in arrays)
        if total == 0:
            return 0.0
        bad = sum(int(np.count_nonzero(~np.isfinite(a))) for a in arrays)
        return bad / total

    # ------------------------------------------------------------------
    # 前向与反向
    # ------------------------------------------------------------------
    def _prepare_input(self, x) -> np.ndarray:
        if isinstance(x, Tensor):
            if x.precision is not self.precision:
                raise ContractViolationError(
                    f"输入精度 {x.precision.value} 与模型精度 {self.precision.value} 不一致")
            x = x.data
        x = np.asarray(x)
        if x.shape[1:] != self.input_shape:
            error_msg = f"输入形状 {x.shape[1:]} 与模型输入形状 {self.input_shape} 不匹配"
            logger.error(error_msg)
            raise ContractViolationError(error_msg)
        if x.dtype != self.precision.storage_dtype:
            with np.errstate(over='ignore'):
                x = x.astype(self.precision.storage_dtype)
        return x

    def forward_arrays(self, ctx: FloatContext, x, training: bool = False) -> Tuple[np.ndarray, List[Any]]:
        """在给定上下文上逐层前向，返回 (输出, 各层缓存)"""
        out = ctx.cast(self._prepare_input(x))
        caches = []
        for layer in self.layers:
            out, layer_cache = layer.forward(ctx, out, training=training)
            caches.append(layer_cache)
        return out, caches

    def forward(self, x, training: bool = False, ctx: Optional[FloatContext] = None):
        """
        前向传播

        Args:
            x: [B×...] 输入批（Tensor 或数组）
            training: 训练模式（影响 BatchNorm）
            ctx: 计算上下文，默认按模型精度新建

        Returns:
            (Tensor, ForwardCache, NumericEvents): 概率批、缓存、事件计数
        """
        ctx = ctx or FloatContext.for_precision(self.precision)
        out, caches = self.forward_arrays(ctx, x, training)
        probs = out.astype(self.precision.storage_dtype)
        cache = ForwardCache(layer_caches=caches, probs=out, version=self.version,
                             training=training, events=copy.copy(ctx.events))
        return Tensor(probs, self.precision), cache, ctx.events

    def backward(self, cache: ForwardCache, labels, ctx: Optional[FloatContext] = None):
        """
        反向传播，输出层必须是 Softmax（与交叉熵融合求梯度）

        Args:
            cache: 同一参数版本下 forward 返回的缓存
            labels: 类别下标
            ctx: 计算上下文

        Returns:
            (Dict[ParamKey, np.ndarray], NumericEvents): 各可训练参数的梯度与事件计数

        Raises:
            ContractViolationError: 缓存过期或输出层不是 Softmax
        """
        if cache.version != self.version:
            error_msg = f"前向缓存已过期（缓存版本 {cache.version}，模型版本 {self.version}）"
            logger.error(error_msg)
            raise ContractViolationError(error_msg)
        if not self.layers or not isinstance(self.layers[-1], Softmax):
            raise ContractViolationError("反向传播要求最后一层为 Softmax")

        ctx = ctx or FloatContext.for_precision(self.precision)
        storage = self.precision.storage_dtype
        dy = softmax_cross_entropy_grad(ctx, cache.probs, labels)
        grads: Dict[ParamKey, np.ndarray] = {}
        for index in range(len(self.layers) - 2, -1, -1):
            layer = self.layers[index]
            dy, layer_grads = layer.backward(ctx, dy, cache.layer_caches[index])
            for name, grad in layer_grads.items():
                grad = np.asarray(grad).astype(storage)
                layer.grads[name] = grad
                grads[(index, name)] = grad
        return grads, ctx.events

    def predict_proba(self, x, batch_size: int = 256) -> Tuple[np.ndarray, NumericEvents]:
        """推理模式下分批计算概率，返回存储宽度的 [N×classes] 数组"""
        x = self._prepare_input(x)
        ctx = FloatContext.for_precision(self.precision)
        parts = []
        for start in range(0, x.shape[0], batch_size):
            out, _ = self.forward_arrays(ctx, x[start:start + batch_size], training=False)
            parts.append(out.astype(self.precision.storage_dtype))
        if not parts:
            return np.zeros((0,) + self.output_shape, dtype=self.precision.storage_dtype), ctx.events
        return np.concatenate(parts, axis=0), ctx.events

    # ------------------------------------------------------------------
    # 复制与精度转换
    # ------------------------------------------------------------------
    def architecture(self) -> List[Dict[str, Any]]:
        return [layer.config() for layer in self.layers]

    def cast(self, precision: Union[Precision, str]) -> 'Model':
        """
        复制为另一精度的模型，参数就近偶数舍入到目标存储宽度

        源模型有 binary32 主副本时以主副本为准；目标为 MIXED 时
        主副本取源值的 binary32 表示。
        """
        precision = Precision.parse(precision)
        target = Model([layer_from_extents(l.kind_id, l.extents()) for l in self.layers],
                       precision, self.input_shape, self.seed)
        for index, name, array in self.parameters():
            source = array
            if self.master_params is not None and (index, name) in self.master_params:
                source = self.master_params[(index, name)]
            with np.errstate(over='ignore'):
                target.layers[index].params[name] = source.astype(precision.storage_dtype)
            if precision is Precision.MIXED and name in target.layers[index].trainable:
                if target.master_params is None:
                    target.master_params = {}
                target.master_params[(index, name)] = source.astype(np.float32)
        return target

    def copy(self) -> 'Model':
        return copy.deepcopy(self)

    def summary(self) -> List[Dict[str, Any]]:
        """逐层的结构摘要（类型、结构参数、输出形状、参数形状、参数个数）"""
        rows = []
        for layer, shape in zip(self.layers, self.layer_shapes):
            shapes = layer.param_shapes()
            rows.append({
                'kind': layer.kind,
                'extents': list(layer.extents()),
                'output_shape': list(shape),
                'param_shapes': {name: list(s) for name, s in shapes.items()},
                'param_count': int(sum(np.prod(s) for s in shapes.values())),
            })
        return rows

    def __repr__(self) -> str:
        return f"Model({self.precision.value}, layers={self.layers})"


def init_params(model: Model, seed: int) -> Model:
    """
    确定性地初始化参数

    Dense/Conv2D 权重按 ±sqrt(6/(fan_in+fan_out)) 均匀分布，在 binary32 上抽样后舍入到
    存储宽度，并截断到不超过界限的最大可表示值；偏置为 0；BatchNorm γ=1、β=0、
    滑动均值 0、滑动方差 1。每层使用由 SeedSequence 派生的独立 PCG64 流。

    Args:
        model: 待初始化的模型（就地修改）
        seed: 64 位种子

    Returns:
        Model: 同一个模型对象
    """
    storage = model.precision.storage_dtype
    streams = np.random.SeedSequence(int(seed)).spawn(max(len(model.layers), 1))
    master = {} if model.precision is Precision.MIXED else None

    for index, (layer, stream) in enumerate(zip(model.layers, streams)):
        rng = np.random.Generator(np.random.PCG64(stream))
        fans = layer.fans()
        for name, shape in layer.param_shapes().items():
            if name == 'weight' and fans is not None:
                limit = math.sqrt(6.0 / (fans[0] + fans[1]))
                bound = np.asarray(limit, dtype=np.float64).astype(storage)
                if float(bound) > limit:
                    bound = np.nextafter(bound, storage.type(0))
                bound32 = np.float32(bound)
                draws = rng.random(shape, dtype=np.float32)
                values = (draws * np.float32(2.0) - np.float32(1.0)) * np.float32(limit)
                values = np.clip(values, -bound32, bound32).astype(np.float32)
            elif name in ('gamma', 'running_var'):
                values = np.ones(shape, dtype=np.float32)
            else:
                values = np.zeros(shape, dtype=np.float32)
            layer.params[name] = values.astype(storage)
            if master is not None and name in layer.trainable:
                master[(index, name)] = values
        layer.grads = {}

    model.master_params = master
    model.seed = int(seed)
    model.mark_updated()
    logger.debug(f"参数初始化完成: seed={seed}, 参数个数={model.num_parameters()}")
    return model


def create_model(architecture: Sequence[Dict[str, Any]], input_shape: Sequence[int],
                 precision: Union[Precision, str] = Precision.PURE16, seed: int = 42,
                 initialize: bool = True) -> Model:
    """
    根据结构配置创建模型

    Args:
        architecture: 层配置列表，缺省的输入尺寸按前一层输出推断
        input_shape: 单个样本的输入形状，例如 [1, 28, 28]
        precision: 精度模式
        seed: 初始化种子
        initialize: 是否立即初始化参数

    Returns:
        Model: 新建模型
    """
    layers = []
    shape = tuple(input_shape)
    for entry in architecture:
        layer = create_layer(entry, shape)
        shape = layer.output_shape(shape)
        layers.append(layer)
    model = Model(layers, precision, input_shape, seed)
    if initialize:
        init_params(model, seed)
    logger.info(f"创建模型: {len(layers)} 层, 精度 {model.precision.value}, 输出形状 {model.output_shape}")
    return model


def forward(model: Model, x, training: bool = False):
    """模型前向传播，见 Model.forward"""
    return model.forward(x, training=training)


def backward(model: Model, cache: ForwardCache, labels):
    """模型反向传播，见 Model.backward"""
    grads, _ = model.backward(cache, labels)
    return grads


def batchnorm_forward(layer: BatchNorm, x, training: bool = False,
                      precision: Union[Precision, str] = Precision.PURE16):
    """
    单独执行 BatchNorm 层的前向

    Returns:
        (np.ndarray, tuple, NumericEvents): 输出（存储宽度）、缓存、事件计数
    """
    precision = Precision.parse(precision)
    ctx = FloatContext.for_precision(precision)
    data = x.data if isinstance(x, Tensor) else np.asarray(x)
    y, cache = layer.forward(ctx, data, training=training)
    return y.astype(precision.storage_dtype), cache, ctx.events
