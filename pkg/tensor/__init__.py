# Tensor module for the half-precision training lab
# This module contains precision modes, numeric event accounting and deterministic kernels

from .precision import Precision, NumericEvents, FloatContext, kernel_threads, THREADS_ENV_VAR
from .tensor import Tensor
from .kernels import (
    matmul,
    conv2d,
    reduce_sum,
    map_elementwise,
    zip_elementwise,
    apply_op,
    im2col,
    col2im,
    conv2d_arrays,
    conv_output_size,
)

__version__ = '0.1.0'

__all__ = [
    'Precision', 'NumericEvents', 'FloatContext', 'kernel_threads', 'THREADS_ENV_VAR',
    'Tensor',
    'matmul', 'conv2d', 'reduce_sum', 'map_elementwise', 'zip_elementwise', 'apply_op',
    'im2col', 'col2im', 'conv2d_arrays', 'conv_output_size',
]
