# -*- coding: utf-8 -*-
"""张量与内核：顺序累加、事件计数、与逐标量参照逐位一致、线程数无关"""

import numpy as np
import pytest

from tensor.kernels import conv2d, im2col, map_elementwise, matmul, reduce_sum, zip_elementwise
from tensor.precision import THREADS_ENV_VAR, FloatContext, NumericEvents, Precision, kernel_threads
from tensor.tensor import Tensor
from utils.exceptions import ContractViolationError
from tests.scalar_reference import scalar_conv2d, scalar_matmul, scalar_sum


def _small_values(rng, shape, scale=1.0):
    return (rng.standard_normal(shape) * scale).astype(np.float16)


class TestPrecision:

    def test_widths(self):
        assert Precision.PURE16.storage_dtype == np.float16
        assert Precision.PURE16.compute_dtype == np.float16
        assert Precision.PURE32.storage_dtype == np.float32
        assert Precision.MIXED.storage_dtype == np.float16
        assert Precision.MIXED.compute_dtype == np.float32
        assert Precision.MIXED.master_dtype == np.float32
        assert Precision.PURE16.machine_epsilon == 2.0 ** -10

    def test_tag_bytes(self):
        for precision in Precision:
            assert Precision.from_tag_byte(precision.tag_byte) is precision
        assert Precision.PURE16.tag_byte == 0x10
        with pytest.raises(ContractViolationError):
            Precision.from_tag_byte(0x40)

    def test_parse(self):
        assert Precision.parse('PURE32') is Precision.PURE32
        with pytest.raises(ContractViolationError):
            Precision.parse('bfloat16')

    def test_kernel_threads(self, monkeypatch):
        monkeypatch.delenv(THREADS_ENV_VAR, raising=False)
        assert kernel_threads() == 1
        monkeypatch.setenv(THREADS_ENV_VAR, '4')
        assert kernel_threads() == 4
        monkeypatch.setenv(THREADS_ENV_VAR, 'many')
        assert kernel_threads() == 1

    def test_events_merge(self):
        a = NumericEvents(1, 2, 3)
        total = a + NumericEvents(overflow_count=1)
        assert total.to_dict() == {'overflow_count': 2, 'underflow_to_zero_count': 2, 'nan_count': 3}
        assert a.total == 6 and a.any()
        assert not NumericEvents().any()


class TestTensor:

    def test_from_values_rounds(self):
        t = Tensor.from_values([0.1, 65520.0], Precision.PURE16)
        assert t.data[0] == np.float16(0.0999755859375)
        assert np.isinf(t.data[1])
        assert t.bits().tolist() == [0x2E66, 0x7C00]

    def test_immutable(self):
        t = Tensor.full((2, 3), 1.0, 'pure16')
        with pytest.raises(ValueError):
            t.data[0, 0] = 2
        copy = t.numpy()
        copy[0, 0] = 2
        assert t.data[0, 0] == 1

    def test_dtype_must_match_tag(self):
        with pytest.raises(ContractViolationError):
            Tensor(np.zeros((2,), dtype=np.float32), Precision.PURE16)

    def test_extents_must_be_positive(self):
        with pytest.raises(ContractViolationError):
            Tensor(np.zeros((0, 3), dtype=np.float16), Precision.PURE16)

    def test_astype_and_equals(self):
        t32 = Tensor.from_values([1.0, 1.0 + 2.0 ** -12], Precision.PURE32)
        t16 = t32.astype(Precision.PURE16)
        assert t16.data.tolist() == [1.0, 1.0]
        assert t16.equals(Tensor.full((2,), 1.0, Precision.PURE16))
        assert not t16.equals(t32)
        assert t32.flat().shape == (2,)


class TestSum:

    def test_exact_sum(self):
        total, events = reduce_sum(Tensor.full((384,), 0.25, 'pure16'))
        assert total.shape == (1,)
        assert float(total.data[0]) == 96.0
        assert not events.any()

    def test_sequential_saturation(self):
        ones16 = Tensor.full((4096,), 1.0, 'pure16')
        ones32 = Tensor.full((4096,), 1.0, 'pure32')
        assert float(reduce_sum(ones16)[0].data[0]) == 2048.0
        assert float(reduce_sum(ones32)[0].data[0]) == 4096.0

    def test_axis(self):
        x = Tensor.from_values(np.arange(6).reshape(2, 3), 'pure16')
        assert reduce_sum(x, axis=0)[0].data.tolist() == [3.0, 5.0, 7.0]
        assert reduce_sum(x, axis=1)[0].data.tolist() == [3.0, 12.0]

    def test_overflow_counted(self):
        big = Tensor.full((3,), 30000.0, 'pure16')
        total, events = reduce_sum(big)
        assert np.isinf(total.data[0])
        assert events.overflow_count == 1

    def test_matches_scalar_reference(self, rng):
        values = _small_values(rng, (257,), scale=3.0)
        total, _ = reduce_sum(Tensor(values, 'pure16'))
        assert int(total.bits()[0]) == scalar_sum(values).bits

    def test_empty_axis_rejected(self):
        ctx = FloatContext.for_precision('pure16')
        with pytest.raises(ContractViolationError):
            ctx.sum(np.zeros((2, 0), dtype=np.float16), axis=1)


class TestMatmul:

    def test_matches_scalar_reference(self, rng):
        a = _small_values(rng, (5, 13))
        b = _small_values(rng, (13, 4))
        out, _ = matmul(Tensor(a, 'pure16'), Tensor(b, 'pure16'))
        expected = scalar_matmul(a, b)
        assert np.array_equal(out.bits(), expected.view(np.uint16))

    def test_pure32_differs_from_pure16(self):
        a = np.full((1, 4096), 1.0)
        b = np.ones((4096, 1))
        out16, _ = matmul(Tensor.from_values(a, 'pure16'), Tensor.from_values(b, 'pure16'))
        out32, _ = matmul(Tensor.from_values(a, 'pure32'), Tensor.from_values(b, 'pure32'))
        assert float(out16.data[0, 0]) == 2048.0
        assert float(out32.data[0, 0]) == 4096.0

    def test_shape_and_tag_checks(self):
        a = Tensor.full((2, 3), 1.0, 'pure16')
        with pytest.raises(ContractViolationError):
            matmul(a, Tensor.full((2, 3), 1.0, 'pure16'))
        with pytest.raises(ContractViolationError):
            matmul(a, Tensor.full((3, 2), 1.0, 'pure32'))

    def test_overflow_and_underflow_events(self):
        big = Tensor.full((1, 2), 300.0, 'pure16')
        out, events = matmul(big, Tensor.full((2, 1), 300.0, 'pure16'))
        assert np.isinf(out.data[0, 0])
        assert events.overflow_count == 1

        tiny = Tensor.full((1, 3), 2.0 ** -14, 'pure16')
        out, events = matmul(tiny, Tensor.full((3, 1), 2.0 ** -12, 'pure16'))
        assert float(out.data[0, 0]) == 0.0
        assert events.underflow_to_zero_count == 3

    def test_nonfinite_inputs_are_not_counted(self):
        ctx = FloatContext.for_precision('pure16')
        a = np.array([[np.inf, 1], [300, 300], [1, 1], [np.nan, 1]], dtype=np.float16)
        b = np.array([[1, 300], [1, 300]], dtype=np.float16)
        out = ctx.matmul(a, b)
        assert np.isinf(out[0]).all() and np.isnan(out[3]).all()
        assert np.isinf(out[1, 1])
        # 只有第 1 行第 1 列由有限输入上溢
        assert ctx.events.overflow_count == 1
        assert ctx.events.nan_count == 0

    def test_zero_operands_are_not_underflow(self):
        a = Tensor.from_values([[0.0, 1.0]], 'pure16')
        _, events = matmul(a, Tensor.from_values([[5.0], [2.0]], 'pure16'))
        assert events.underflow_to_zero_count == 0

    def test_result_independent_of_thread_count(self, rng, monkeypatch):
        a = _small_values(rng, (64, 40))
        b = _small_values(rng, (40, 9))
        monkeypatch.setenv(THREADS_ENV_VAR, '1')
        single, _ = matmul(Tensor(a, 'pure16'), Tensor(b, 'pure16'))
        monkeypatch.setenv(THREADS_ENV_VAR, '4')
        threaded, _ = matmul(Tensor(a, 'pure16'), Tensor(b, 'pure16'))
        assert single.equals(threaded)

    def test_mixed_rounds_once_to_storage(self):
        ctx = FloatContext.for_precision(Precision.MIXED)
        a = np.full((1, 4096), 1.0, dtype=np.float16)
        out = ctx.matmul(a, np.ones((4096, 1), dtype=np.float16))
        # binary32 累加到 4096，再舍入到 binary16（4096 可精确表示）
        assert out.dtype == np.float32
        assert float(out[0, 0]) == 4096.0


class TestConv2d:

    def test_accumulation_into_sixteen_bits(self):
        x = Tensor.full((1, 1, 5, 5), 1.0, 'pure16')
        w = Tensor.full((1, 1, 3, 3), 256.0, 'pure16')
        out, events = conv2d(x, w)
        assert out.shape == (1, 1, 3, 3)
        assert np.all(out.data == 2304.0)
        assert not events.any()

    def test_matches_scalar_reference(self, rng):
        x = _small_values(rng, (2, 2, 5, 5))
        w = _small_values(rng, (3, 2, 3, 3))
        for stride, padding in ((1, 0), (2, 1)):
            out, _ = conv2d(Tensor(x, 'pure16'), Tensor(w, 'pure16'), stride=stride, padding=padding)
            expected = scalar_conv2d(x, w, stride=stride, padding=padding)
            assert out.shape == expected.shape
            assert np.array_equal(out.bits(), expected.view(np.uint16))

    def test_output_size(self):
        x = Tensor.full((1, 1, 7, 7), 1.0, 'pure32')
        w = Tensor.full((4, 1, 3, 3), 1.0, 'pure32')
        out, _ = conv2d(x, w, stride=2, padding=1)
        assert out.shape == (1, 4, 4, 4)

    def test_kernel_larger_than_input(self):
        with pytest.raises(ContractViolationError):
            conv2d(Tensor.full((1, 1, 2, 2), 1.0, 'pure16'), Tensor.full((1, 1, 3, 3), 1.0, 'pure16'))

    def test_channel_mismatch(self):
        with pytest.raises(ContractViolationError):
            conv2d(Tensor.full((1, 2, 4, 4), 1.0, 'pure16'), Tensor.full((1, 1, 3, 3), 1.0, 'pure16'))

    def test_im2col_column_order(self):
        x = np.arange(2 * 3 * 3, dtype=np.float32).reshape(1, 2, 3, 3)
        cols, oh, ow = im2col(x, 2, 2)
        assert (oh, ow) == (2, 2)
        # 第一行：通道 0 的 2×2 窗口，接着通道 1 的 2×2 窗口
        assert cols[0].tolist() == [0, 1, 3, 4, 9, 10, 12, 13]


class TestElementwise:

    def test_map(self):
        x = Tensor.from_values([1.0, 4.0, -1.0], 'pure16')
        out, events = map_elementwise(x, 'sqrt')
        assert out.data[:2].tolist() == [1.0, 2.0]
        assert np.isnan(out.data[2])
        assert events.nan_count == 1

    def test_map_exp_overflow(self):
        out, events = map_elementwise(Tensor.from_values([12.0, 0.0], 'pure16'), 'exp')
        assert np.isinf(out.data[0]) and out.data[1] == 1.0
        assert events.overflow_count == 1

    def test_zip(self):
        x = Tensor.from_values([1.0, 2048.0], 'pure16')
        y = Tensor.from_values([2.0 ** -11, 1.0], 'pure16')
        out, _ = zip_elementwise(x, y, 'add')
        assert out.data.tolist() == [1.0, 2048.0]
        out, events = zip_elementwise(Tensor.from_values([1.0], 'pure16'),
                                      Tensor.from_values([1e-7], 'pure16'), 'div')
        assert np.isinf(out.data[0]) and events.overflow_count == 1

    def test_zip_shape_mismatch(self):
        with pytest.raises(ContractViolationError):
            zip_elementwise(Tensor.full((2,), 1.0, 'pure16'), Tensor.full((3,), 1.0, 'pure16'), 'add')

    def test_wrong_arity(self):
        with pytest.raises(ContractViolationError):
            map_elementwise(Tensor.full((2,), 1.0, 'pure16'), 'add')
        with pytest.raises(ContractViolationError):
            zip_elementwise(Tensor.full((2,), 1.0, 'pure16'), Tensor.full((2,), 1.0, 'pure16'), 'exp')

    def test_mul_underflow_counted(self):
        x = Tensor.from_values([2.0 ** -14, 0.0], 'pure16')
        y = Tensor.from_values([2.0 ** -12, 5.0], 'pure16')
        out, events = zip_elementwise(x, y, 'mul')
        assert out.data.tolist() == [0.0, 0.0]
        assert events.underflow_to_zero_count == 1

    def test_compare_and_max(self):
        x = Tensor.from_values([1.0, 2.0, 3.0], 'pure16')
        y = Tensor.from_values([2.0, 2.0, 1.0], 'pure16')
        assert zip_elementwise(x, y, 'compare')[0].data.tolist() == [-1.0, 0.0, 1.0]
        assert zip_elementwise(x, y, 'max')[0].data.tolist() == [2.0, 2.0, 3.0]
        assert zip_elementwise(x, y, 'min')[0].data.tolist() == [1.0, 2.0, 1.0]
