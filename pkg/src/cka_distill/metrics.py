"""UA / WA / macro-F1 and the confusion matrix."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np


@dataclass
class MetricsReport:
    """Classification summary.

    ``ua`` is the mean per-class recall over *all* ``num_classes`` classes; a class
    with no true instances contributes recall 0. ``wa`` is plain accuracy.
    ``confusion[i, j]`` counts samples of true class ``i`` predicted as ``j``.
    """

    ua: float
    wa: float
    macro_f1: float
    confusion: np.ndarray
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray

    @property
    def num_classes(self) -> int:
        return self.confusion.shape[0]

    def to_dict(self) -> dict:
        return {
            "ua": self.ua,
            "wa": self.wa,
            "macro_f1": self.macro_f1,
            "confusion": self.confusion.astype(int).tolist(),
            "precision": self.precision.tolist(),
            "recall": self.recall.tolist(),
            "f1": self.f1.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_text(self) -> str:
        lines = [
            f"ua={self.ua:.10f}",
            f"wa={self.wa:.10f}",
            f"macro_f1={self.macro_f1:.10f}",
        ]
        for i, row in enumerate(self.confusion.astype(int)):
            lines.append(f"confusion[{i}]=" + ",".join(str(v) for v in row))
        return "\n".join(lines) + "\n"


def _safe_div(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    out = np.zeros_like(num, dtype=np.float64)
    np.divide(num, den, out=out, where=den > 0)
    return out


def compute_metrics(true_labels, pred_labels, num_classes: int) -> MetricsReport:
    y_true = np.asarray(true_labels, dtype=np.int64).reshape(-1)
    y_pred = np.asarray(pred_labels, dtype=np.int64).reshape(-1)
    if y_true.shape != y_pred.shape:
        raise ValueError(f"length mismatch: {y_true.shape[0]} true vs {y_pred.shape[0]} predicted labels")
    if y_true.size == 0:
        raise ValueError("empty label list: need at least one sample")
    if num_classes < 1:
        raise ValueError("num_classes must be positive")
    for name, arr in (("true", y_true), ("predicted", y_pred)):
        if arr.min() < 0 or arr.max() >= num_classes:
            raise ValueError(f"{name} label out of range [0, {num_classes})")

    confusion = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(confusion, (y_true, y_pred), 1)
    tp = np.diag(confusion).astype(np.float64)
    support = confusion.sum(axis=1).astype(np.float64)
    predicted = confusion.sum(axis=0).astype(np.float64)

    recall = _safe_div(tp, support)
    precision = _safe_div(tp, predicted)
    f1 = _safe_div(2 * precision * recall, precision + recall)
    return MetricsReport(
        ua=float(recall.mean()),
        wa=float(tp.sum() / y_true.size),
        macro_f1=float(f1.mean()),
        confusion=confusion,
        precision=precision,
        recall=recall,
        f1=f1,
    )
