"""Confusion matrices, per-class/macro classification metrics and one-vs-rest ROC."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np


@dataclass
class ConfusionMatrix:
    """Counts with rows = true class, columns = predicted class."""

    counts: np.ndarray
    class_names: list[str]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def classes(self) -> int:
        return self.counts.shape[0]


def confusion_matrix(y_true, y_pred, classes: int, class_names: Optional[Sequence[str]] = None) -> ConfusionMatrix:
    y_true = np.asarray(y_true, dtype=np.int64).reshape(-1)
    y_pred = np.asarray(y_pred, dtype=np.int64).reshape(-1)
    if y_true.shape != y_pred.shape:
        raise ValueError(f"{y_true.size} true labels vs {y_pred.size} predictions")
    for name, arr in (("true", y_true), ("predicted", y_pred)):
        if arr.size and (arr.min() < 0 or arr.max() >= classes):
            raise ValueError(f"{name} label out of range [0, {classes})")
    counts = np.zeros((classes, classes), dtype=np.int64)
    np.add.at(counts, (y_true, y_pred), 1)
    names = list(class_names) if class_names is not None else [str(i) for i in range(classes)]
    return ConfusionMatrix(counts, names)


def _ratio(num: np.ndarray, den: np.ndarray) -> tuple[np.ndarray, bool]:
    out = np.divide(num, den, out=np.zeros(num.shape, dtype=np.float64), where=den > 0)
    return out, bool(np.any(den == 0))


@dataclass
class ClassificationMetrics:
    accuracy: float
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    class_accuracy: np.ndarray
    support: np.ndarray
    degenerate: bool = False

    def average(self, kind: str = "macro") -> dict[str, float]:
        if kind == "macro":
            weights = np.full(self.support.shape, 1.0 / self.support.size)
        elif kind == "weighted":
            weights = self.support / self.support.sum()
        else:
            raise ValueError(f"unknown averaging {kind!r}")
        return {
            "accuracy": self.accuracy,
            "precision": float(np.dot(weights, self.precision)),
            "recall": float(np.dot(weights, self.recall)),
            "f1": float(np.dot(weights, self.f1)),
        }

    @property
    def macro(self) -> dict[str, float]:
        return self.average("macro")


def classification_metrics(cm: ConfusionMatrix) -> ClassificationMetrics:
    """One-vs-rest precision/recall/F1 per class; 0/0 ratios are 0 and flagged."""
    counts = cm.counts.astype(np.float64)
    total = counts.sum()
    if total <= 0:
        raise ValueError("confusion matrix is empty")
    tp = np.diag(counts)
    fp = counts.sum(axis=0) - tp
    fn = counts.sum(axis=1) - tp
    tn = total - tp - fp - fn
    precision, d1 = _ratio(tp, tp + fp)
    recall, d2 = _ratio(tp, tp + fn)
    f1, d3 = _ratio(2 * precision * recall, precision + recall)
    return ClassificationMetrics(
        accuracy=float(tp.sum() / total),
        precision=precision,
        recall=recall,
        f1=f1,
        class_accuracy=(tp + tn) / total,
        support=counts.sum(axis=1),
        degenerate=d1 or d2 or d3,
    )


@dataclass
class RocCurve:
    class_index: int
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray
    auc: Optional[float]

    @property
    def defined(self) -> bool:
        return self.auc is not None


def roc_curve(scores, positive) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Binary ROC with one step per distinct score (ties grouped)."""
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    positive = np.asarray(positive, dtype=bool).reshape(-1)
    order = np.argsort(-scores, kind="mergesort")
    s = scores[order]
    p = positive[order]
    last_of_group = np.r_[np.nonzero(np.diff(s))[0], s.size - 1]
    tps = np.cumsum(p)[last_of_group]
    fps = np.cumsum(~p)[last_of_group]
    n_pos, n_neg = p.sum(), (~p).sum()
    tpr = np.r_[0.0, tps / n_pos] if n_pos else np.r_[0.0, np.zeros(tps.size)]
    fpr = np.r_[0.0, fps / n_neg] if n_neg else np.r_[0.0, np.zeros(fps.size)]
    return fpr, tpr, np.r_[np.inf, s[last_of_group]]


def trapezoid_auc(fpr: np.ndarray, tpr: np.ndarray) -> float:
    return float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))


def roc_auc(scores, y_true) -> list[RocCurve]:
    """One-vs-rest ROC per class from N x C scores; classes without both
    positives and negatives get an undefined curve (auc None)."""
    scores = np.asarray(scores, dtype=np.float64)
    y_true = np.asarray(y_true, dtype=np.int64).reshape(-1)
    curves = []
    for k in range(scores.shape[1]):
        pos = y_true == k
        if not pos.any() or pos.all():
            curves.append(RocCurve(k, np.array([]), np.array([]), np.array([]), None))
            continue
        fpr, tpr, thr = roc_curve(scores[:, k], pos)
        curves.append(RocCurve(k, fpr, tpr, thr, trapezoid_auc(fpr, tpr)))
    return curves


@dataclass
class EvalReport:
    confusion: ConfusionMatrix
    metrics: ClassificationMetrics
    roc: list[RocCurve]
    extra: dict = field(default_factory=dict)

    @classmethod
    def build(cls, y_true, probs, class_names: Sequence[str], extra: Optional[dict] = None) -> "EvalReport":
        probs = np.asarray(probs, dtype=np.float64)
        y_pred = probs.argmax(axis=1)
        cm = confusion_matrix(y_true, y_pred, probs.shape[1], class_names)
        return cls(cm, classification_metrics(cm), roc_auc(probs, y_true), dict(extra or {}))

    def to_dict(self) -> dict:
        m = self.metrics
        names = self.confusion.class_names
        per_class = {
            name: {
                "precision": float(m.precision[i]),
                "recall": float(m.recall[i]),
                "f1": float(m.f1[i]),
                "accuracy": float(m.class_accuracy[i]),
                "support": int(m.support[i]),
                "auc": self.roc[i].auc,
            }
            for i, name in enumerate(names)
        }
        return {
            "classes": names,
            "samples": self.confusion.total,
            "accuracy": m.accuracy,
            "macro": m.average("macro"),
            "weighted": m.average("weighted"),
            "per_class": per_class,
            "confusion_matrix": self.confusion.counts.tolist(),
            "degenerate_ratios": m.degenerate,
            **self.extra,
        }

    def write(self, out_dir: Path, stem: str = "report") -> list[Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        paths = [out_dir / f"{stem}.json", out_dir / f"{stem}.confusion.csv", out_dir / f"{stem}.roc.csv"]
        paths[0].write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        with paths[1].open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["true\\pred", *self.confusion.class_names])
            for name, row in zip(self.confusion.class_names, self.confusion.counts):
                w.writerow([name, *row.tolist()])
        with paths[2].open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["class", "threshold", "fpr", "tpr"])
            for curve in self.roc:
                name = self.confusion.class_names[curve.class_index]
                for t, f, r in zip(curve.thresholds, curve.fpr, curve.tpr):
                    w.writerow([name, repr(float(t)), repr(float(f)), repr(float(r))])
        return paths


REPORT_KEYS = frozenset(
    {"classes", "samples", "accuracy", "macro", "weighted", "per_class", "confusion_matrix", "degenerate_ratios"}
)
