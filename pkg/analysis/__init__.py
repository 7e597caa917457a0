#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Analysis模块
提供误差容限证书、全值域函数扫描与图表输出
"""

from .tolerance import (
    RECORD_COLUMNS,
    ToleranceRecord,
    ToleranceReport,
    pred,
    delta,
    gamma,
    is_guaranteed,
    lemma_certificate,
    certify_batch,
    describe_series,
    check_same_architecture,
    tolerance_report,
)

from .scan import (
    SCAN_FUNCTIONS,
    ORACLE_DTYPES,
    ScanReport,
    scan_function,
)

from .plots import plot_training_curves, plot_tolerance_histograms

__version__ = '0.1.0'

__all__ = [
    'RECORD_COLUMNS', 'ToleranceRecord', 'ToleranceReport', 'pred', 'delta', 'gamma', 'is_guaranteed',
    'lemma_certificate', 'certify_batch', 'describe_series', 'check_same_architecture', 'tolerance_report',
    'SCAN_FUNCTIONS', 'ORACLE_DTYPES', 'ScanReport', 'scan_function',
    'plot_training_curves', 'plot_tolerance_histograms',
]
