"""Brute-force reference implementations used only by the tests."""

import numpy as np


def count_confusion(y_true, y_pred, classes):
    cm = [[0] * classes for _ in range(classes)]
    for t, p in zip(y_true, y_pred):
        cm[int(t)][int(p)] += 1
    return np.array(cm)


def formula_metrics(cm):
    cm = np.asarray(cm)
    c = cm.shape[0]
    total = sum(cm[i][j] for i in range(c) for j in range(c))
    prec, rec, f1 = [], [], []
    for k in range(c):
        tp = cm[k][k]
        fp = sum(cm[i][k] for i in range(c) if i != k)
        fn = sum(cm[k][j] for j in range(c) if j != k)
        p = tp / (tp + fp) if tp + fp else 0.0
        r = tp / (tp + fn) if tp + fn else 0.0
        prec.append(p)
        rec.append(r)
        f1.append(2 * p * r / (p + r) if p + r else 0.0)
    acc = sum(cm[k][k] for k in range(c)) / total
    return acc, prec, rec, f1


def pairwise_auc(scores, positive):
    """Mann-Whitney form: P(score_pos > score_neg) + 0.5 P(tie)."""
    pos = [s for s, y in zip(scores, positive) if y]
    neg = [s for s, y in zip(scores, positive) if not y]
    wins = 0.0
    for a in pos:
        for b in neg:
            wins += 1.0 if a > b else 0.5 if a == b else 0.0
    return wins / (len(pos) * len(neg))
