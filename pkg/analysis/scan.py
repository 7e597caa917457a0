#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
binary16 全值域函数扫描

对全部有限 binary16 输入，分别在纯 binary16 和参照精度（binary32 或 binary64，
输入精确上转）上逐步求值同一个函数，统计绝对误差、相对误差和数值事件。
"""

import json
import os
from dataclasses import dataclass, asdict, field
from typing import Callable, Dict, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from b16core.half import bits_to_array, finite_bit_patterns
from tensor.precision import FloatContext, NumericEvents, kernel_threads
from utils.exceptions import ContractViolationError
from utils.logger import get_logger

logger = get_logger('analysis.scan')

ORACLE_DTYPES = {'binary32': np.float32, 'binary64': np.float64}


def _sigmoid(ctx: FloatContext, x: np.ndarray) -> np.ndarray:
    # neg → exp → +1 → 1/x，每步单独舍入
    one = ctx.const(1.0)
    return ctx.div(one, ctx.add(one, ctx.exp(ctx.neg(x))))


def _tanh(ctx: FloatContext, x: np.ndarray) -> np.ndarray:
    # (1 − e^{−2x}) / (1 + e^{−2x})
    one = ctx.const(1.0)
    e = ctx.exp(ctx.mul(ctx.const(-2.0), x))
    return ctx.div(ctx.sub(one, e), ctx.add(one, e))


SCAN_FUNCTIONS: Dict[str, Callable[[FloatContext, np.ndarray], np.ndarray]] = {
    'identity': lambda ctx, x: ctx.cast(x),
    'neg': lambda ctx, x: ctx.neg(x),
    'abs': lambda ctx, x: ctx.abs(x),
    'sqrt': lambda ctx, x: ctx.sqrt(x),
    'exp': lambda ctx, x: ctx.exp(x),
    'log': lambda ctx, x: ctx.log(x),
    'sigmoid': _sigmoid,
    'tanh': _tanh,
}


@dataclass
class ScanReport:
    """
    扫描结果

    相对误差为 |a − b| / |b|（b 为参照结果）；b = 0 且 a = 0 的输入计 0 并记入
    zero_reference_count，b = 0 而 a ≠ 0 的输入不参与相对误差平均，记入
    undefined_relative_count。任一结果非有限的输入不参与误差统计，记入 nonfinite_count。
    """
    function: str
    oracle: str
    count: int
    mean_abs_error: float
    max_abs_error: float
    mean_rel_error: float
    max_rel_error: float
    zero_reference_count: int
    undefined_relative_count: int
    nonfinite_count: int
    overflow_count: int
    underflow_count: int
    nan_count: int
    table: pd.DataFrame = field(default=None, repr=False)

    def summary(self) -> Dict:
        result = asdict(self)
        result.pop('table')
        return result

    def write(self, output_dir: str) -> Dict[str, str]:
        """写出逐输入 CSV 与 JSON 汇总"""
        os.makedirs(output_dir, exist_ok=True)
        csv_path = os.path.join(output_dir, f'scan_{self.function}.csv')
        json_path = os.path.join(output_dir, f'scan_{self.function}_summary.json')
        if self.table is not None:
            self.table.to_csv(csv_path, index=False, encoding='utf-8')
        with open(json_path, 'w', encoding='utf-8') as f:
            json.dump(self.summary(), f, indent=2, ensure_ascii=False)
        logger.info(f"扫描结果已保存至: {csv_path} 和 {json_path}")
        return {'csv': csv_path, 'json': json_path}


def _evaluate_chunk(func, x16: np.ndarray, oracle_dtype) -> Tuple[np.ndarray, np.ndarray, NumericEvents]:
    ctx16 = FloatContext.for_dtype(np.float16)
    low = func(ctx16, x16)
    ctx_ref = FloatContext.for_dtype(oracle_dtype)
    reference = func(ctx_ref, x16.astype(oracle_dtype))
    return np.asarray(low), np.asarray(reference), ctx16.events


def scan_function(name: str, oracle: str = 'binary32', dedupe_signed_zero: bool = True) -> ScanReport:
    """
    在全部有限 binary16 值上扫描函数误差

    Args:
        name: 已登记的函数名（见 SCAN_FUNCTIONS）
        oracle: 参照精度，'binary32' 或 'binary64'
        dedupe_signed_zero: 是否合并 ±0（合并后 63487 个输入）

    Returns:
        ScanReport: 误差与事件统计

    Raises:
        ContractViolationError: 函数名或参照精度未登记
    """
    if name not in SCAN_FUNCTIONS:
        error_msg = f"未登记的扫描函数: {name}，可选 {sorted(SCAN_FUNCTIONS)}"
        logger.error(error_msg)
        raise ContractViolationError(error_msg)
    if oracle not in ORACLE_DTYPES:
        raise ContractViolationError(f"未知的参照精度: {oracle}")

    func = SCAN_FUNCTIONS[name]
    oracle_dtype = ORACLE_DTYPES[oracle]
    x16 = bits_to_array(finite_bit_patterns(dedupe_signed_zero))

    threads = kernel_threads()
    if threads > 1:
        chunks = np.array_split(x16, threads)
        parts = Parallel(n_jobs=threads, prefer='threads')(
            delayed(_evaluate_chunk)(func, chunk, oracle_dtype) for chunk in chunks
        )
    else:
        parts = [_evaluate_chunk(func, x16, oracle_dtype)]
    low = np.concatenate([p[0] for p in parts]).astype(np.float64)
    reference = np.concatenate([p[1] for p in parts]).astype(np.float64)
    events = NumericEvents()
    for part in parts:
        events.merge(part[2])

    finite = np.isfinite(low) & np.isfinite(reference)
    abs_error = np.where(finite, np.abs(low - reference), np.nan)
    zero_reference = finite & (reference == 0)
    undefined = zero_reference & (low != 0)
    with np.errstate(divide='ignore', invalid='ignore'):
        rel_error = np.where(finite & ~zero_reference, abs_error / np.abs(reference), 0.0)
    rel_error = np.where(finite & ~undefined, rel_error, np.nan)

    valid_abs = abs_error[finite]
    valid_rel = rel_error[finite & ~undefined]
    report = ScanReport(
        function=name,
        oracle=oracle,
        count=int(x16.size),
        mean_abs_error=float(valid_abs.mean()) if valid_abs.size else 0.0,
        max_abs_error=float(valid_abs.max()) if valid_abs.size else 0.0,
        mean_rel_error=float(valid_rel.mean()) if valid_rel.size else 0.0,
        max_rel_error=float(valid_rel.max()) if valid_rel.size else 0.0,
        zero_reference_count=int(np.count_nonzero(zero_reference & ~undefined)),
        undefined_relative_count=int(np.count_nonzero(undefined)),
        nonfinite_count=int(np.count_nonzero(~finite)),
        overflow_count=events.overflow_count,
        underflow_count=events.underflow_to_zero_count,
        nan_count=events.nan_count,
        table=pd.DataFrame({
            'x': x16.astype(np.float64),
            'half': low,
            'reference': reference,
            'abs_error': abs_error,
            'rel_error': rel_error,
        }),
    )
    logger.info(f"扫描 {name}: {report.count} 个输入, 平均相对误差 {report.mean_rel_error:.3e}, "
                f"平均绝对误差 {report.mean_abs_error:.3e}, 上溢 {report.overflow_count}")
    return report
