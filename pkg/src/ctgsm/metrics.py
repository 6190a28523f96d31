"""Confusion-matrix metrics and one-vs-rest ROC analysis."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """``counts[i, j]`` = rows of true class i predicted as class j."""

    counts: np.ndarray
    class_names: tuple

    @property
    def n_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["true\\pred", *self.class_names])
            for name, row in zip(self.class_names, self.counts):
                w.writerow([name, *(int(v) for v in row)])


def confusion(y_true, y_pred, n_classes: int, class_names=None) -> ConfusionMatrix:
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape:
        raise ValueError("y_true and y_pred differ in length")
    for arr in (y_true, y_pred):
        if arr.size and (arr.min() < 0 or arr.max() >= n_classes):
            raise ValueError("class id outside [0, n_classes)")
    counts = np.bincount(y_true * n_classes + y_pred, minlength=n_classes * n_classes)
    names = tuple(class_names) if class_names is not None else tuple(str(c) for c in range(n_classes))
    return ConfusionMatrix(counts.reshape(n_classes, n_classes), names)


def _ratio(num, den):
    ok = den > 0
    return np.where(ok, num / np.where(ok, den, 1), 0.0), ~ok


def per_class_metrics(cm: ConfusionMatrix) -> dict:
    """One-vs-rest precision, recall, F1 and accuracy per class, plus macro and micro averages.

    A metric whose denominator is zero is reported as 0 and listed under ``undefined``.
    """
    if cm.total == 0:
        raise ValueError("empty confusion matrix")
    c = cm.counts.astype(np.float64)
    tp = np.diag(c)
    fp = c.sum(axis=0) - tp
    fn = c.sum(axis=1) - tp
    tn = cm.total - tp - fp - fn
    precision, p_bad = _ratio(tp, tp + fp)
    recall, r_bad = _ratio(tp, tp + fn)
    f1, f_bad = _ratio(2 * tp, 2 * tp + fp + fn)
    acc = (tp + tn) / cm.total

    per_class = {}
    for i, name in enumerate(cm.class_names):
        undefined = [m for m, bad in (("precision", p_bad), ("recall", r_bad), ("f1", f_bad)) if bad[i]]
        per_class[name] = {
            "precision": float(precision[i]),
            "recall": float(recall[i]),
            "f1": float(f1[i]),
            "accuracy": float(acc[i]),
            "support": int(tp[i] + fn[i]),
            "tp": int(tp[i]), "fp": int(fp[i]), "fn": int(fn[i]), "tn": int(tn[i]),
            "undefined": undefined,
        }
    support = tp + fn
    micro_p, _ = _ratio(tp.sum(), tp.sum() + fp.sum())
    micro_r, _ = _ratio(tp.sum(), tp.sum() + fn.sum())
    micro_f, _ = _ratio(2 * tp.sum(), 2 * tp.sum() + fp.sum() + fn.sum())
    weights = support / support.sum()
    return {
        "accuracy": float(tp.sum() / cm.total),
        "per_class": per_class,
        "macro": {
            "precision": float(precision.mean()),
            "recall": float(recall.mean()),
            "f1": float(f1.mean()),
        },
        "weighted": {
            "precision": float((precision * weights).sum()),
            "recall": float((recall * weights).sum()),
            "f1": float((f1 * weights).sum()),
        },
        "micro": {"precision": float(micro_p), "recall": float(micro_r), "f1": float(micro_f)},
    }


@dataclass(frozen=True, eq=False)
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray
    auc: float

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["fpr", "tpr", "threshold"])
            for f, t, th in zip(self.fpr, self.tpr, self.thresholds):
                w.writerow([repr(float(f)), repr(float(t)), repr(float(th))])


def roc_auc(scores, labels) -> RocCurve:
    """Threshold sweep over distinct scores, high to low; tied scores move together.

    The first point (0, 0) carries threshold +inf. AUC by the trapezoid rule.
    """
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels).reshape(-1).astype(bool)
    if scores.shape != labels.shape:
        raise ValueError("scores and labels differ in length")
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC needs both positive and negative labels")
    order = np.argsort(-scores, kind="stable")
    s, l = scores[order], labels[order]
    last_of_group = np.r_[np.flatnonzero(np.diff(s) != 0), s.size - 1]
    tps = np.cumsum(l)[last_of_group]
    fps = (last_of_group + 1) - tps
    tpr = np.r_[0.0, tps / n_pos]
    fpr = np.r_[0.0, fps / n_neg]
    thresholds = np.r_[np.inf, s[last_of_group]]
    auc = float(np.sum((fpr[1:] - fpr[:-1]) * (tpr[1:] + tpr[:-1]) / 2.0))
    return RocCurve(fpr, tpr, thresholds, auc)


def roc_one_vs_rest(probs, y_true, class_names) -> dict:
    """Per-class ROC; classes absent from (or filling) ``y_true`` are skipped."""
    probs = np.asarray(probs)
    y_true = np.asarray(y_true)
    curves = {}
    for c, name in enumerate(class_names):
        pos = y_true == c
        if pos.all() or not pos.any():
            continue
        curves[name] = roc_auc(probs[:, c], pos)
    return curves


def write_metrics_json(report: dict, path) -> None:
    Path(path).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
