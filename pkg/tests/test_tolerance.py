# -*- coding: utf-8 -*-
"""δ、Γ、预测一致性证书与容限报告"""

import json
import math

import numpy as np
import pandas as pd
import pytest

import analysis.tolerance as tolerance
from analysis.tolerance import (RECORD_COLUMNS, ToleranceReport, certify_batch, check_same_architecture, delta,
                                describe_series, gamma, is_guaranteed, lemma_certificate, pred, tolerance_report)
from nn.model import create_model
from tests.conftest import SYNTHETIC_SIDE, small_architecture
from utils.exceptions import ArchitectureMismatchError, ContractViolationError, TheoryViolationError

M32 = (0.8, 0.1, 0.05, 0.05)
M16 = (0.7, 0.15, 0.1, 0.05)


class TestPred:

    def test_argmax(self):
        assert pred(M16) == 0
        assert pred((0.1, 0.8, 0.1)) == 1

    def test_ties_go_to_lowest_index(self):
        assert pred((0.5, 0.5)) == 0
        assert pred((0.1, 0.3, 0.3)) == 1

    def test_empty_vector(self):
        with pytest.raises(ContractViolationError):
            pred([])


class TestDelta:

    def test_identical_vectors(self):
        assert delta(M32, M32) == 0.0

    def test_max_norm(self):
        assert delta(M32, M16) == pytest.approx(0.1)

    def test_matches_elementwise_maximum(self, rng):
        a, b = rng.random(10), rng.random(10)
        assert delta(a, b) == max(abs(x - y) for x, y in zip(a, b))

    def test_half_vector_is_upcast_exactly(self):
        p16 = np.asarray(M16, dtype=np.float16)
        expected = max(abs(x - float(y)) for x, y in zip(M32, p16))
        assert delta(M32, p16) == expected
        assert delta(M32, p16) == delta(M32, p16.astype(np.float32))

    def test_length_mismatch(self):
        with pytest.raises(ContractViolationError):
            delta((0.5, 0.5), (0.2, 0.3, 0.5))


class TestGamma:

    def test_gap_between_top_two(self):
        assert gamma(M32) == pytest.approx(0.7)
        assert gamma((1, 0, 0)) == 1.0

    def test_duplicate_maxima(self):
        assert gamma((0.25, 0.25, 0.25, 0.25)) == 0.0
        assert gamma((0.4, 0.1, 0.4)) == 0.0

    def test_needs_two_classes(self):
        with pytest.raises(ContractViolationError):
            gamma((1.0,))


class TestCertificate:

    def test_documented_pair(self):
        record = lemma_certificate(M32, M16, input_id=3)
        assert record.id == 3
        assert record.delta == pytest.approx(0.1)
        assert record.gamma == pytest.approx(0.7)
        assert record.guaranteed and record.agree

    def test_condition_fails(self):
        record = lemma_certificate((0.5, 0.45, 0.05), (0.4, 0.5, 0.1))
        assert record.gamma == pytest.approx(0.05)
        assert record.delta == pytest.approx(0.1)
        assert not record.guaranteed
        assert not record.agree

    def test_zero_delta_is_guaranteed(self):
        record = lemma_certificate((0.5, 0.5), (0.5, 0.5))
        assert record.gamma == 0.0
        assert record.guaranteed

    def test_exact_boundary_is_not_certified(self):
        # Γ = 2δ = 0.5，16 位模型恰好出现并列
        record = lemma_certificate((0.75, 0.25), (0.5, 0.5))
        assert not record.guaranteed
        assert is_guaranteed(0.5, 0.25) is False
        assert is_guaranteed(0.5001, 0.25) is True

    def test_violation_raises(self, monkeypatch):
        monkeypatch.setattr(tolerance, 'is_guaranteed', lambda *args: True)
        with pytest.raises(TheoryViolationError):
            lemma_certificate((0.6, 0.4), (0.4, 0.6))

    def test_random_perturbations_never_violate(self, rng):
        # 10^5 组随机 (p32, 每个分量扰动不超过 δ) 的配对
        total = 0
        for classes in (2, 3, 4, 10):
            count = 25_000
            p32 = rng.dirichlet(np.ones(classes), size=count)
            bound = rng.uniform(0, 0.2, size=(count, 1))
            p16 = p32 + rng.uniform(-1, 1, size=p32.shape) * bound
            records = certify_batch(p32, p16, ids=np.arange(total, total + count))
            guaranteed = records[records['guaranteed']]
            assert guaranteed['agree'].all()
            assert (records['delta'] <= bound[:, 0] + 1e-12).all()
            total += count
        assert total == 100_000


class TestCertifyBatch:

    def test_columns_and_values(self):
        records = certify_batch(np.array([M32, M16]), np.array([M16, M16]), ids=np.array([10, 11]))
        assert list(records.columns) == RECORD_COLUMNS
        assert records['id'].tolist() == [10, 11]
        assert records['delta'].iloc[1] == 0.0
        assert records['guaranteed'].all()
        assert records['agree'].all()

    def test_matches_single_records(self, rng):
        p32 = rng.dirichlet(np.ones(5), size=200)
        p16 = (p32 + rng.normal(0, 0.05, size=p32.shape)).astype(np.float16)
        records = certify_batch(p32, p16)
        for i in range(0, 200, 17):
            single = lemma_certificate(p32[i], p16[i], input_id=i)
            row = records.iloc[i]
            assert row['delta'] == single.delta
            assert row['gamma'] == single.gamma
            assert bool(row['guaranteed']) == single.guaranteed
            assert bool(row['agree']) == single.agree

    def test_shape_checks(self):
        with pytest.raises(ContractViolationError):
            certify_batch(np.ones((2, 3)), np.ones((3, 3)))
        with pytest.raises(ContractViolationError):
            certify_batch(np.ones((2, 1)), np.ones((2, 1)))


class TestReport:

    def test_describe_series(self):
        summary = describe_series([1.0, 2.0, 3.0])
        assert summary == {'min': 1.0, 'max': 3.0, 'mean': 2.0, 'var': pytest.approx(2 / 3)}
        assert all(math.isnan(v) for v in describe_series([]).values())

    def test_from_records(self):
        records = certify_batch(np.array([M32, (0.5, 0.45, 0.04, 0.01)]),
                                np.array([M16, (0.4, 0.5, 0.05, 0.05)]))
        report = ToleranceReport.from_records(records, labels=np.array([0, 0]), num_classes=4)
        assert report.guaranteed_fraction == 0.5
        assert report.agree_fraction == 0.5
        assert report.accuracy32 == 1.0
        assert report.accuracy16 == 0.5
        assert report.accuracy_gap == 0.5
        assert report.confusion[0] == [1, 1, 0, 0]
        summary = report.summary()
        assert summary['count'] == 2
        assert summary['lemma_lower_bound_holds']

    def test_epoch_row(self):
        records = certify_batch(np.array([M32]), np.array([M16]))
        row = ToleranceReport.from_records(records).epoch_row(4)
        assert row['epoch'] == 4
        assert row['delta_mean'] == pytest.approx(0.1)
        assert row['gamma_var'] == 0.0
        assert set(row) >= {'delta_min', 'gamma_max', 'guaranteed_fraction', 'agree_fraction'}

    def test_downcast_copy(self, datasets, tmp_path):
        _, test = datasets
        model32 = create_model(small_architecture(), [1, SYNTHETIC_SIDE, SYNTHETIC_SIDE], 'pure32', seed=7)
        model16 = model32.cast('pure16')
        report = tolerance_report(model32, model16, test, batch_size=5)
        assert len(report.records) == len(test)
        assert report.delta_stats['max'] < 5e-2
        assert report.guaranteed_fraction <= report.agree_fraction
        assert len(report.confusion) == 4

        paths = report.write(str(tmp_path / 'report'))
        frame = pd.read_csv(paths['csv'])
        assert list(frame.columns) == RECORD_COLUMNS
        with open(paths['json'], encoding='utf-8') as f:
            assert json.load(f)['count'] == len(test)

    def test_architecture_mismatch(self):
        model32 = create_model(small_architecture(), [1, SYNTHETIC_SIDE, SYNTHETIC_SIDE], 'pure32', seed=7)
        other = small_architecture()
        other[1]['out'] = 8
        model16 = create_model(other, [1, SYNTHETIC_SIDE, SYNTHETIC_SIDE], 'pure16', seed=7)
        with pytest.raises(ArchitectureMismatchError):
            check_same_architecture(model32, model16)
