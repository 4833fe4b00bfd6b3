import csv
import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from faultwarn.errors import EmptyInputError, InsufficientDataError, ParameterError, UndefinedMetricError
from faultwarn.metrics import (
    EwsRun,
    RunOutcome,
    bootstrap_ci,
    earliness_credit,
    early_warning_score,
    ece,
    far,
    km_estimator,
    km_from_outcomes,
    pr_auc,
    retention,
    roc_auc,
    write_csv,
    write_report,
)

FOUR = ([0.9, 0.8, 0.7, 0.1], [1, 0, 1, 0])


def roc_pairs(s, y):
    """Rank statistic: fraction of (pos, neg) pairs ordered correctly, ties half."""
    pos = [a for a, b in zip(s, y) if b]
    neg = [a for a, b in zip(s, y) if not b]
    wins = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p, n in itertools.product(pos, neg))
    return wins / (len(pos) * len(neg))


def ap_enumerate(s, y):
    """Average precision by walking every distinct threshold from the top."""
    total, prev_recall, n_pos = 0.0, 0.0, sum(y)
    for thr in sorted(set(s), reverse=True):
        sel = [b for a, b in zip(s, y) if a >= thr]
        recall = sum(sel) / n_pos
        total += (recall - prev_recall) * sum(sel) / len(sel)
        prev_recall = recall
    return total


class TestKaplanMeier:
    def test_uncensored(self):
        km = km_estimator([2, 4, 6], [True, True, True])
        assert km.restricted_mean == 4.0
        assert km.median == 4.0

    def test_censored_example(self):
        km = km_estimator([2, 4], [True, False], horizon=10)
        assert km(1.9) == 1.0 and km(2.0) == 0.5 and km(10.0) == 0.5
        assert km.restricted_mean == 6.0
        assert km.median == 2.0

    def test_all_censored(self):
        km = km_estimator([3, 5], [False, False], horizon=7)
        assert km.restricted_mean == 7.0
        assert km.median is None
        assert km.table() == [{"t": 0.0, "s": 1.0}]

    def test_errors(self):
        with pytest.raises(EmptyInputError):
            km_estimator([], [])
        with pytest.raises(ParameterError):
            km_estimator([1, 5], [True, True], horizon=3)

    def test_oracle_uncensored(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            d = rng.integers(0, 20, int(rng.integers(1, 12))).astype(float)
            km = km_estimator(d, np.ones(d.size, bool))
            assert km.restricted_mean == pytest.approx(d.mean(), abs=1e-12)
            assert km.median == pytest.approx(np.median(d), abs=1e-12)

    @settings(max_examples=100)
    @given(st.lists(st.tuples(st.floats(0, 50), st.booleans()), min_size=1, max_size=20))
    def test_survival_shape(self, data):
        d = [x for x, _ in data]
        km = km_estimator(d, [e for _, e in data], horizon=60.0)
        assert np.all(np.diff(np.r_[1.0, km.survival]) <= 1e-15)
        assert np.all((km.survival >= 0) & (km.survival <= 1))

    def test_from_outcomes(self):
        outs = [
            RunOutcome("a", 10.0, 30.0, t0=12.0),
            RunOutcome("b", 10.0, 20.0),
        ]
        assert outs[1].censored and outs[1].lead == 10.0
        km = km_from_outcomes(outs)
        assert km.horizon == 20.0
        assert km.restricted_mean == pytest.approx(2.0 + 18.0 * 0.5)

    def test_outcome_before_onset(self):
        with pytest.raises(ParameterError):
            RunOutcome("a", 10.0, 30.0, t0=5.0)


class TestFar:
    def test_examples(self):
        assert far(0, 10.0) == 0.0
        assert far(3, 1.5) == 2.0

    def test_zero_hours(self):
        with pytest.raises(ParameterError):
            far(1, 0.0)

    def test_inverse_hours(self):
        assert far(7, 2.0) * 2.0 == far(7, 4.0) * 4.0


class TestRanking:
    def test_four_points(self):
        assert roc_auc(*FOUR) == 0.75
        assert pr_auc(*FOUR) == pytest.approx(5 / 6, abs=1e-15)
        assert ap_enumerate(*FOUR) == pytest.approx(5 / 6, abs=1e-15)

    def test_separated(self):
        s = [0.1, 0.2, 0.8, 0.9]
        assert roc_auc(s, [0, 0, 1, 1]) == 1.0
        assert pr_auc(s, [0, 0, 1, 1]) == 1.0

    def test_single_class(self):
        with pytest.raises(UndefinedMetricError):
            roc_auc([0.1, 0.2], [1, 1])
        with pytest.raises(UndefinedMetricError):
            pr_auc([0.1, 0.2], [0, 0])

    @settings(max_examples=200)
    @given(st.lists(st.tuples(st.integers(0, 6), st.booleans()), min_size=2, max_size=30))
    def test_enumeration_oracle(self, data):
        s = [float(a) for a, _ in data]
        y = [int(b) for _, b in data]
        if 0 < sum(y) < len(y):
            assert roc_auc(s, y) == pytest.approx(roc_pairs(s, y), abs=1e-12)
            assert pr_auc(s, y) == pytest.approx(ap_enumerate(s, y), abs=1e-12)

    def test_random_scores(self):
        rng = np.random.default_rng(1)
        s = rng.random(100_000)
        y = np.zeros(100_000, bool)
        y[rng.choice(100_000, 1000, replace=False)] = True
        assert abs(roc_auc(s, y) - 0.5) < 0.01
        assert abs(pr_auc(s, y) - 0.01) < 0.005

    def test_monotone_invariance(self):
        rng = np.random.default_rng(2)
        s = rng.standard_normal(2000)
        y = rng.random(2000) < 1 / (1 + np.exp(-s))
        t = np.exp(3 * s) + 1.0
        assert roc_auc(t, y) == pytest.approx(roc_auc(s, y), abs=1e-12)
        assert pr_auc(t, y) == pytest.approx(pr_auc(s, y), abs=1e-12)


class TestEce:
    def test_all_positive(self):
        assert ece(np.ones(10), np.ones(10))[0] == 0.0

    def test_balanced_half(self):
        assert ece(np.full(10, 0.5), [0, 1] * 5)[0] == 0.0

    def test_balanced_overconfident(self):
        assert ece(np.full(10, 0.9), [0, 1] * 5)[0] == pytest.approx(0.4, abs=1e-15)

    def test_table(self):
        _, table = ece([0.05, 0.95, 0.97], [0, 1, 1], n_bins=10)
        assert len(table) == 10
        assert table[0]["count"] == 1 and table[9]["count"] == 2
        assert math.isnan(table[5]["conf"]) and table[5]["count"] == 0

    def test_matched_bins(self):
        s = np.r_[np.full(4, 0.25), np.full(4, 0.75)]
        y = [1, 0, 0, 0, 1, 1, 1, 0]
        assert ece(s, y, n_bins=4)[0] == pytest.approx(0.0, abs=1e-15)

    def test_errors(self):
        with pytest.raises(ParameterError):
            ece([0.5], [1], n_bins=1)
        with pytest.raises(ParameterError):
            ece([1.5], [1])


class TestBootstrap:
    def test_identical(self):
        est, lo, hi = bootstrap_ci([3.0] * 10)
        assert est == lo == hi == 3.0

    def test_deterministic(self):
        x = np.random.default_rng(0).standard_normal(30)
        assert bootstrap_ci(x, seed=4) == bootstrap_ci(x, seed=4)
        assert bootstrap_ci(x, seed=4) != bootstrap_ci(x, seed=5)

    def test_custom_statistic(self):
        runs = [(0.9, 1), (0.8, 0), (0.7, 1), (0.1, 0), (0.6, 1), (0.2, 0)]

        def stat(rs):
            return roc_auc([r[0] for r in rs], [r[1] for r in rs])

        est, lo, hi = bootstrap_ci(runs, stat, n_boot=500, seed=1)
        assert est == stat(runs)
        assert 0.0 <= lo <= hi <= 1.0

    def test_errors(self):
        with pytest.raises(InsufficientDataError):
            bootstrap_ci([1.0])
        with pytest.raises(ParameterError):
            bootstrap_ci([1.0, 2.0], n_boot=100)

    @pytest.mark.slow
    def test_coverage(self):
        rng = np.random.default_rng(123)
        hits = 0
        for k in range(500):
            x = rng.standard_normal(100)
            _, lo, hi = bootstrap_ci(x, n_boot=2000, level=0.95, seed=k)
            hits += lo <= 0.0 <= hi
        assert abs(hits / 500 - 0.95) <= 0.02


class TestEarlyWarning:
    def test_perfect(self):
        runs = [EwsRun(100.0, (100.0,)), EwsRun(50.0, (50.0,)), EwsRun(None, ())]
        assert early_warning_score(runs, 60.0) == 1.0

    def test_null(self):
        runs = [EwsRun(100.0, ()), EwsRun(None, ())]
        assert early_warning_score(runs, 60.0) == 0.0

    def test_false_only(self):
        # raw = -1 - 0.11 against anchors null = -1 and perfect = tanh(2.5)
        score = early_warning_score([EwsRun(100.0, (10.0,))], 60.0)
        assert score == pytest.approx(-0.11 / (math.tanh(2.5) + 1.0), rel=1e-12)
        assert score < 0

    def test_credit_shape(self):
        assert earliness_credit(0.0, 60.0) == pytest.approx(math.tanh(2.5), rel=1e-15)
        assert earliness_credit(60.0, 60.0) == 0.0
        assert earliness_credit(10.0, 60.0) > earliness_credit(30.0, 60.0)

    def test_late_alarm_is_missed(self):
        late = early_warning_score([EwsRun(0.0, (100.0,))], 60.0)
        assert late < 0.0


class TestRetention:
    def test_examples(self):
        r = retention(0.9, 0.9, 0.9, 30.0, 60.0, 30.0)
        assert r["retention_auc"] == 1.0
        assert r["gain_auc"] == 0.0
        assert r["retention_mttd"] == 0.5
        assert r["gain_mttd"] == 0.0

    def test_zero_denominator(self):
        with pytest.raises(ParameterError):
            retention(0.0, 0.5, 0.5, 1.0, 1.0, 1.0)


class TestReportIo:
    def test_json_stable(self, tmp_path):
        rep = {"b": np.float64(0.5), "a": [1, float("nan")], "n": np.int64(3)}
        write_report(rep, tmp_path / "a.json")
        write_report(dict(reversed(list(rep.items()))), tmp_path / "b.json")
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
        assert json.loads((tmp_path / "a.json").read_text()) == {"a": [1, None], "b": 0.5, "n": 3}

    def test_csv(self, tmp_path):
        write_csv([{"t": 0.0, "s": 1.0}, {"t": 2.0, "s": 0.5}], tmp_path / "km.csv")
        rows = list(csv.DictReader(open(tmp_path / "km.csv")))
        assert rows == [{"t": "0.0", "s": "1.0"}, {"t": "2.0", "s": "0.5"}]
