import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from oracles import count_confusion, formula_metrics, pairwise_auc

from dbfga.metrics import (
    REPORT_KEYS,
    EvalReport,
    classification_metrics,
    confusion_matrix,
    roc_auc,
    roc_curve,
    trapezoid_auc,
)


def test_confusion_examples():
    assert np.array_equal(confusion_matrix([0, 1, 2], [0, 1, 2], 3).counts, np.eye(3, dtype=int))
    cm = confusion_matrix([0], [1], 2).counts
    assert cm.tolist() == [[0, 1], [0, 0]]
    with pytest.raises(ValueError):
        confusion_matrix([0, 3], [0, 1], 3)


def test_confusion_1000_oracle(rng):
    t, p = rng.integers(0, 4, 1000), rng.integers(0, 4, 1000)
    cm = confusion_matrix(t, p, 4)
    assert np.array_equal(cm.counts, count_confusion(t, p, 4))
    assert cm.total == 1000


def test_binary_hand_arithmetic():
    # class 1 positive: TP=90, FP=10, FN=10
    cm = confusion_matrix([1] * 90 + [0] * 10 + [1] * 10, [1] * 90 + [1] * 10 + [0] * 10, 2)
    m = classification_metrics(cm)
    assert abs(m.precision[1] - 0.9) < 1e-15 and abs(m.recall[1] - 0.9) < 1e-15 and abs(m.f1[1] - 0.9) < 1e-15


def test_perfect_is_all_ones():
    m = classification_metrics(confusion_matrix([0, 1, 2, 2], [0, 1, 2, 2], 3))
    assert m.accuracy == 1.0 and all(v == 1.0 for v in m.macro.values())


def test_degenerate_ratios_zero_and_flagged():
    m = classification_metrics(confusion_matrix([0, 0], [0, 0], 2))
    assert m.precision[1] == 0.0 and m.recall[1] == 0.0 and m.degenerate
    with pytest.raises(ValueError):
        classification_metrics(confusion_matrix([], [], 2))


@given(st.integers(0, 2**31), st.integers(2, 5), st.integers(1, 60))
def test_metrics_formula_oracle(seed, c, n):
    rng = np.random.default_rng(seed)
    t, p = rng.integers(0, c, n), rng.integers(0, c, n)
    m = classification_metrics(confusion_matrix(t, p, c))
    acc, prec, rec, f1 = formula_metrics(count_confusion(t, p, c))
    assert abs(m.accuracy - acc) < 1e-12
    assert np.max(np.abs(m.precision - prec)) < 1e-12
    assert np.max(np.abs(m.recall - rec)) < 1e-12
    assert np.max(np.abs(m.f1 - f1)) < 1e-12
    assert min(f1) - 1e-12 <= m.macro["f1"] <= max(f1) + 1e-12
    perm = rng.permutation(n)
    m2 = classification_metrics(confusion_matrix(t[perm], p[perm], c))
    assert m2.macro == m.macro


def test_weighted_average():
    m = classification_metrics(confusion_matrix([0, 0, 0, 1], [0, 0, 1, 1], 2))
    w = m.average("weighted")
    assert abs(w["recall"] - (0.75 * (2 / 3) + 0.25 * 1.0)) < 1e-15


def test_roc_perfect_and_endpoints():
    fpr, tpr, _ = roc_curve([0.9, 0.8, 0.3, 0.1], [1, 1, 0, 0])
    assert (fpr[0], tpr[0]) == (0.0, 0.0) and (fpr[-1], tpr[-1]) == (1.0, 1.0)
    assert trapezoid_auc(fpr, tpr) == 1.0


def test_roc_ties_grouped():
    fpr, tpr, thr = roc_curve([0.5, 0.5, 0.5, 0.5], [1, 0, 1, 0])
    assert fpr.tolist() == [0.0, 1.0] and tpr.tolist() == [0.0, 1.0]
    assert trapezoid_auc(fpr, tpr) == 0.5


def test_roc_random_scores_half():
    rng = np.random.default_rng(0)
    y = rng.integers(0, 2, 20000)
    fpr, tpr, _ = roc_curve(rng.random(20000), y == 1)
    assert abs(trapezoid_auc(fpr, tpr) - 0.5) < 0.05


@given(st.integers(0, 2**31))
def test_auc_pairwise_oracle(seed):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 3, 50)
    scores = np.round(rng.random((50, 3)), 1)  # coarse rounding forces ties
    for curve in roc_auc(scores, y):
        pos = y == curve.class_index
        if not pos.any() or pos.all():
            assert curve.auc is None
            continue
        assert abs(curve.auc - pairwise_auc(scores[:, curve.class_index], pos)) < 1e-12
        assert np.all(np.diff(curve.fpr) >= 0)


@given(st.integers(0, 2**31))
def test_auc_monotone_transform_invariant(seed):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, 40)
    s = rng.random(40)
    if y.all() or not y.any():
        return
    a = trapezoid_auc(*roc_curve(s, y)[:2])
    b = trapezoid_auc(*roc_curve(np.exp(3 * s) - 7, y)[:2])
    assert a == b


def test_absent_class_undefined():
    curves = roc_auc(np.array([[0.7, 0.2, 0.1], [0.1, 0.8, 0.1]]), [0, 1])
    assert curves[2].auc is None and curves[0].auc == 1.0


def test_report_json_keys(tmp_path):
    probs = np.eye(3)[[0, 1, 2, 1]]
    report = EvalReport.build([0, 1, 2, 1], probs, ["a", "b", "c"])
    paths = report.write(tmp_path, "r")
    d = json.loads(paths[0].read_text())
    assert set(d) == REPORT_KEYS
    assert d["accuracy"] == 1.0 and d["confusion_matrix"] == [[1, 0, 0], [0, 2, 0], [0, 0, 1]]
    assert set(d["per_class"]["a"]) == {"precision", "recall", "f1", "accuracy", "support", "auc"}
    assert paths[1].read_text().splitlines()[0] == "true\\pred,a,b,c"
