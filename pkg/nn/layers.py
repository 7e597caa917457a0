#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
网络层模块
实现 Dense、ReLU、Softmax、Conv2D、MaxPool2D、Flatten、BatchNorm 的前向与反向传播

每一层的前向和反向都通过 FloatContext 完成算术，因此在 PURE16 下
没有任何跨运算保留的宽中间值。层本身只保存参数和最近一次的梯度，
前向缓存由调用方持有并传回反向传播。
"""

from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from tensor.kernels import col2im, conv2d_arrays, conv_output_size
from tensor.precision import FloatContext
from utils.exceptions import ContractViolationError
from utils.logger import get_logger

logger = get_logger('nn.layers')

# BatchNorm 常量
BN_EPSILON = 1e-3
BN_MOMENTUM = 0.9

Shape = Tuple[int, ...]


def _contract_error(error_msg: str) -> ContractViolationError:
    logger.error(error_msg)
    return ContractViolationError(error_msg)


class Layer:
    """
    层的基类

    子类需要定义 kind、kind_id，并实现 output_shape、forward、backward。
    """
    kind = ''
    kind_id = 0
    trainable: Tuple[str, ...] = ()

    def __init__(self):
        self.params: Dict[str, np.ndarray] = {}
        self.grads: Dict[str, np.ndarray] = {}

    # 结构信息 -----------------------------------------------------------
    def extents(self) -> Tuple[int, ...]:
        """描述层结构的整数序列（写入模型文件）"""
        return ()

    def config(self) -> Dict[str, Any]:
        """对应的结构配置项"""
        return {'kind': self.kind}

    def output_shape(self, input_shape: Shape) -> Shape:
        return tuple(input_shape)

    def fans(self) -> Optional[Tuple[int, int]]:
        """需要随机初始化的层返回 (fan_in, fan_out)"""
        return None

    def param_shapes(self) -> Dict[str, Shape]:
        return {}

    # 计算 ---------------------------------------------------------------
    def forward(self, ctx: FloatContext, x: np.ndarray, training: bool = False):
        raise NotImplementedError

    def backward(self, ctx: FloatContext, dy: np.ndarray, cache) -> Tuple[np.ndarray, Dict[str, np.ndarray]]:
        raise NotImplementedError

    def __repr__(self) -> str:
        args = ', '.join(str(e) for e in self.extents())
        return f"{type(self).__name__}({args})"


class Dense(Layer):
    """全连接层 y = x·W + b，W 形状 [in×out]"""
    kind = 'dense'
    kind_id = 1
    trainable = ('weight', 'bias')

    def __init__(self, in_features: int, out_features: int):
        super().__init__()
        self.in_features = int(in_features)
        self.out_features = int(out_features)

    def extents(self):
        return (self.in_features, self.out_features)

    def config(self):
        return {'kind': self.kind, 'in': self.in_features, 'out': self.out_features}

    def output_shape(self, input_shape):
        if tuple(input_shape) != (self.in_features,):
            raise _contract_error(f"Dense({self.in_features},{self.out_features}) 的输入形状不匹配: {input_shape}")
        return (self.out_features,)

    def fans(self):
        return (self.in_features, self.out_features)

    def param_shapes(self):
        return {'weight': (self.in_features, self.out_features), 'bias': (self.out_features,)}

    def forward(self, ctx, x, training=False):
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise _contract_error(f"Dense 输入形状 {x.shape} 与 in={self.in_features} 不符")
        z = ctx.matmul(x, self.params['weight'])
        return ctx.add(z, self.params['bias']), x

    def backward(self, ctx, dy, cache):
        x = cache
        grads = {
            'weight': ctx.matmul(ctx.cast(x).T, dy),
            'bias': ctx.sum(dy, axis=0),
        }
        dx = ctx.matmul(dy, ctx.cast(self.params['weight']).T)
        return dx, grads


class ReLU(Layer):
    kind = 'relu'
    kind_id = 2

    def forward(self, ctx, x, training=False):
        x = ctx.cast(x)
        mask = x > 0
        return np.where(mask, x, ctx.dtype.type(0)), mask

    def backward(self, ctx, dy, cache):
        return np.where(cache, ctx.cast(dy), ctx.dtype.type(0)), {}


class Softmax(Layer):
    """
    按最后一维做 softmax，先减去每行最大值

    减去最大值后 exp 的参数都不大于 0，binary16 下不会上溢。
    """
    kind = 'softmax'
    kind_id = 3

    def output_shape(self, input_shape):
        if len(input_shape) != 1:
            raise _contract_error(f"Softmax 需要一维的样本形状，实际为 {input_shape}")
        return tuple(input_shape)

    def forward(self, ctx, x, training=False):
        x = ctx.cast(x)
        shifted = ctx.sub(x, np.max(x, axis=1, keepdims=True))
        e = ctx.exp(shifted)
        total = ctx.sum(e, axis=1)
        p = ctx.div(e, total[:, None])
        return p, p

    def backward(self, ctx, dy, cache):
        # dx = p ⊙ (dy − Σ dy⊙p)
        p = cache
        inner = ctx.sum(ctx.mul(dy, p), axis=1)
        return ctx.mul(p, ctx.sub(dy, inner[:, None])), {}


class Conv2D(Layer):
    """二维卷积层，W 形状 [F×C×k×k]"""
    kind = 'conv2d'
    kind_id = 4
    trainable = ('weight', 'bias')

    def __init__(self, in_channels: int, filters: int, kernel: int, stride: int = 1, padding: int = 0):
        super().__init__()
        self.in_channels = int(in_channels)
        self.filters = int(filters)
        self.kernel = int(kernel)
        self.stride = int(stride)
        self.padding = int(padding)

    def extents(self):
        return (self.in_channels, self.filters, self.kernel, self.stride, self.padding)

    def config(self):
        return {'kind': self.kind, 'channels': self.in_channels, 'filters': self.filters,
                'kernel': self.kernel, 'stride': self.stride, 'padding': self.padding}

    def output_shape(self, input_shape):
        if len(input_shape) != 3 or input_shape[0] != self.in_channels:
            raise _contract_error(f"Conv2D 需要 {self.in_channels} 通道的 C×H×W 输入，实际为 {input_shape}")
        _, h, w = input_shape
        oh = conv_output_size(h, self.kernel, self.stride, self.padding)
        ow = conv_output_size(w, self.kernel, self.stride, self.padding)
        if oh < 1 or ow < 1:
            raise _contract_error(f"输入 {h}×{w} 对 {self.kernel}×{self.kernel} 卷积核过小")
        return (self.filters, oh, ow)

    def fans(self):
        area = self.kernel * self.kernel
        return (self.in_channels * area, self.filters * area)

    def param_shapes(self):
        return {'weight': (self.filters, self.in_channels, self.kernel, self.kernel),
                'bias': (self.filters,)}

    def forward(self, ctx, x, training=False):
        out, cols = conv2d_arrays(ctx, x, self.params['weight'], self.stride, self.padding)
        y = ctx.add(out, ctx.cast(self.params['bias'])[None, :, None, None])
        return y, (x.shape, cols)

    def backward(self, ctx, dy, cache):
        x_shape, cols = cache
        n, f, oh, ow = dy.shape
        dy2 = ctx.cast(dy).transpose(0, 2, 3, 1).reshape(n * oh * ow, f)
        w_mat = ctx.cast(self.params['weight']).reshape(f, -1)
        grads = {
            'weight': ctx.matmul(dy2.T, cols).reshape(self.params['weight'].shape),
            'bias': ctx.sum(dy2, axis=0),
        }
        dcols = ctx.matmul(dy2, w_mat)
        dx = col2im(ctx, dcols, x_shape, self.kernel, self.kernel, self.stride, self.padding)
        return dx, grads


class MaxPool2D(Layer):
    """最大池化，多个最大值时取扫描顺序中的第一个"""
    kind = 'maxpool2d'
    kind_id = 5

    def __init__(self, size: int = 2, stride: Optional[int] = None):
        super().__init__()
        self.size = int(size)
        self.stride = int(stride) if stride else self.size

    def extents(self):
        return (self.size, self.stride)

    def config(self):
        return {'kind': self.kind, 'size': self.size, 'stride': self.stride}

    def output_shape(self, input_shape):
        if len(input_shape) != 3:
            raise _contract_error(f"MaxPool2D 需要 C×H×W 输入，实际为 {input_shape}")
        c, h, w = input_shape
        oh = conv_output_size(h, self.size, self.stride, 0)
        ow = conv_output_size(w, self.size, self.stride, 0)
        if oh < 1 or ow < 1:
            raise _contract_error(f"输入 {h}×{w} 对 {self.size}×{self.size} 池化窗口过小")
        return (c, oh, ow)

    def _windows(self, x):
        n, c, h, w = x.shape
        oh = conv_output_size(h, self.size, self.stride, 0)
        ow = conv_output_size(w, self.size, self.stride, 0)
        windows = sliding_window_view(x, (self.size, self.size), axis=(2, 3))
        windows = windows[:, :, ::self.stride, ::self.stride][:, :, :oh, :ow]
        return windows.reshape(n, c, oh, ow, self.size * self.size)

    def forward(self, ctx, x, training=False):
        x = ctx.cast(x)
        windows = self._windows(x)
        argmax = np.argmax(windows, axis=-1)
        y = np.take_along_axis(windows, argmax[..., None], axis=-1)[..., 0]
        return np.ascontiguousarray(y), (x.shape, argmax)

    def backward(self, ctx, dy, cache):
        x_shape, argmax = cache
        dy = ctx.cast(dy)
        n, c, h, w = x_shape
        oh, ow = argmax.shape[2], argmax.shape[3]
        dx = np.zeros(x_shape, dtype=ctx.dtype)
        zero = ctx.dtype.type(0)
        for i in range(self.size):
            for j in range(self.size):
                routed = np.where(argmax == i * self.size + j, dy, zero)
                region = (slice(None), slice(None),
                          slice(i, i + self.stride * oh, self.stride),
                          slice(j, j + self.stride * ow, self.stride))
                dx[region] = ctx.add(dx[region], routed)
        return dx, {}


class Flatten(Layer):
    kind = 'flatten'
    kind_id = 6

    def output_shape(self, input_shape):
        return (int(np.prod(input_shape)),)

    def forward(self, ctx, x, training=False):
        return ctx.cast(x).reshape(x.shape[0], -1), x.shape

    def backward(self, ctx, dy, cache):
        return ctx.cast(dy).reshape(cache), {}


class BatchNorm(Layer):
    """
    批归一化，支持 [N×C] 与 [N×C×H×W] 输入

    训练模式使用批均值和有偏批方差，并以动量 0.9 更新滑动统计量；
    推理模式使用滑动统计量。全部运算在 FloatContext 的宽度上完成。
    """
    kind = 'batchnorm'
    kind_id = 7
    trainable = ('gamma', 'beta')

    def __init__(self, channels: int):
        super().__init__()
        self.channels = int(channels)

    def extents(self):
        return (self.channels,)

    def config(self):
        return {'kind': self.kind, 'channels': self.channels}

    def output_shape(self, input_shape):
        if len(input_shape) not in (1, 3) or input_shape[0] != self.channels:
            raise _contract_error(f"BatchNorm({self.channels}) 的输入形状不匹配: {input_shape}")
        return tuple(input_shape)

    def param_shapes(self):
        shape = (self.channels,)
        return {'gamma': shape, 'beta': shape, 'running_mean': shape, 'running_var': shape}

    def _to_rows(self, x):
        if x.ndim == 4:
            return x.transpose(0, 2, 3, 1).reshape(-1, x.shape[1])
        return x

    def _from_rows(self, rows, shape):
        if len(shape) == 4:
            n, c, h, w = shape
            return np.ascontiguousarray(rows.reshape(n, h, w, c).transpose(0, 3, 1, 2))
        return rows

    def forward(self, ctx, x, training=False):
        if x.ndim not in (2, 4) or x.shape[1] != self.channels:
            raise _contract_error(f"BatchNorm({self.channels}) 输入形状 {x.shape} 不符")
        if x.shape[0] == 0:
            raise _contract_error("BatchNorm 的批大小不能为 0")
        rows = self._to_rows(ctx.cast(x))
        eps = ctx.const(BN_EPSILON)
        if training:
            mean = ctx.mean(rows, axis=0)
            centered = ctx.sub(rows, mean)
            var = ctx.mean(ctx.mul(centered, centered), axis=0)
            self._update_running(ctx, mean, var)
        else:
            mean = ctx.cast(self.params['running_mean'])
            var = ctx.cast(self.params['running_var'])
            centered = ctx.sub(rows, mean)
        den = ctx.sqrt(ctx.add(var, eps))
        xhat = ctx.div(centered, den)
        y = ctx.add(ctx.mul(self.params['gamma'], xhat), self.params['beta'])
        return self._from_rows(y, x.shape), (x.shape, xhat, den, training)

    def _update_running(self, ctx, mean, var):
        momentum = ctx.const(BN_MOMENTUM)
        complement = ctx.const(1.0 - BN_MOMENTUM)
        storage = self.params['running_mean'].dtype
        self.params['running_mean'] = ctx.add(
            ctx.mul(momentum, self.params['running_mean']), ctx.mul(complement, mean)).astype(storage)
        self.params['running_var'] = ctx.add(
            ctx.mul(momentum, self.params['running_var']), ctx.mul(complement, var)).astype(storage)

    def backward(self, ctx, dy, cache):
        x_shape, xhat, den, training = cache
        dy_rows = self._to_rows(ctx.cast(dy))
        grads = {
            'gamma': ctx.sum(ctx.mul(dy_rows, xhat), axis=0),
            'beta': ctx.sum(dy_rows, axis=0),
        }
        dxhat = ctx.mul(dy_rows, self.params['gamma'])
        if training:
            # dx = (dxhat − mean(dxhat) − xhat·mean(dxhat·xhat)) / den
            mean_dxhat = ctx.mean(dxhat, axis=0)
            mean_proj = ctx.mean(ctx.mul(dxhat, xhat), axis=0)
            numerator = ctx.sub(ctx.sub(dxhat, mean_dxhat), ctx.mul(xhat, mean_proj))
            dx_rows = ctx.div(numerator, den)
        else:
            dx_rows = ctx.div(dxhat, den)
        return self._from_rows(dx_rows, x_shape), grads


LAYER_CLASSES = {cls.kind: cls for cls in (Dense, ReLU, Softmax, Conv2D, MaxPool2D, Flatten, BatchNorm)}
LAYER_KIND_IDS = {cls.kind_id: cls for cls in LAYER_CLASSES.values()}


def create_layer(entry: Dict[str, Any], input_shape: Sequence[int]) -> Layer:
    """
    根据结构配置项创建层，缺省的输入尺寸从 input_shape 推断

    Args:
        entry: 结构配置项，例如 {'kind': 'dense', 'out': 256}
        input_shape: 单个样本的输入形状

    Returns:
        Layer: 新建的层（尚未初始化参数）

    Raises:
        ContractViolationError: 配置项与输入形状不一致
    """
    kind = entry.get('kind')
    input_shape = tuple(int(e) for e in input_shape)
    if kind == 'dense':
        if 'out' not in entry:
            raise _contract_error("dense 层需要 out")
        in_features = entry.get('in', input_shape[0] if len(input_shape) == 1 else None)
        if in_features is None:
            raise _contract_error(f"dense 层前需要 flatten，当前输入形状 {input_shape}")
        return Dense(in_features, entry['out'])
    if kind == 'conv2d':
        if 'filters' not in entry or 'kernel' not in entry:
            raise _contract_error("conv2d 层需要 filters 与 kernel")
        channels = entry.get('channels', input_shape[0])
        return Conv2D(channels, entry['filters'], entry['kernel'],
                      entry.get('stride', 1), entry.get('padding', 0))
    if kind == 'maxpool2d':
        return MaxPool2D(entry.get('size', 2), entry.get('stride'))
    if kind == 'batchnorm':
        return BatchNorm(entry.get('channels', input_shape[0]))
    if kind in LAYER_CLASSES:
        return LAYER_CLASSES[kind]()
    raise _contract_error(f"未知的层类型: {kind}")


def layer_from_extents(kind_id: int, extents: Sequence[int]) -> Layer:
    """由模型文件中的类型编号和结构整数重建层"""
    if kind_id not in LAYER_KIND_IDS:
        raise ContractViolationError(f"未知的层类型编号: {kind_id}")
    cls = LAYER_KIND_IDS[kind_id]
    try:
        return cls(*extents)
    except TypeError:
        raise ContractViolationError(f"{cls.kind} 层的结构整数个数不正确: {list(extents)}")
