"""Binary-classification metrics and the evaluation/report protocol.

Alarm is the positive class throughout. AUC is computed by the rank method with
half credit for ties; a single-class score set has no defined AUC and raises.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .ingest import Dataset

log = logging.getLogger(__name__)


class UndefinedAUCError(ValueError):
    """AUC needs at least one positive and one negative example."""


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    @property
    def sensitivity(self) -> float:
        denom = self.tp + self.fn
        return self.tp / denom if denom else 0.0

    @property
    def specificity(self) -> float:
        denom = self.tn + self.fp
        return self.tn / denom if denom else 0.0


def _as_binary(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=int)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    if arr.size and not np.isin(arr, (0, 1)).all():
        raise ValueError(f"{name} must contain only 0 and 1")
    return arr


def confusion(labels, predictions) -> ConfusionMatrix:
    y = _as_binary(labels, "labels")
    p = _as_binary(predictions, "predictions")
    if len(y) != len(p):
        raise ValueError(f"length mismatch: {len(y)} labels vs {len(p)} predictions")
    if len(y) == 0:
        raise ValueError("confusion matrix needs at least one example")
    return ConfusionMatrix(
        tp=int(((y == 1) & (p == 1)).sum()),
        fp=int(((y == 0) & (p == 1)).sum()),
        fn=int(((y == 1) & (p == 0)).sum()),
        tn=int(((y == 0) & (p == 0)).sum()),
    )


def mcc(cm: ConfusionMatrix) -> float:
    """Matthews correlation; 0.0 when any marginal is empty."""
    denom = (cm.tp + cm.fp) * (cm.tp + cm.fn) * (cm.tn + cm.fp) * (cm.tn + cm.fn)
    if denom == 0:
        return 0.0
    return float((cm.tp * cm.tn - cm.fp * cm.fn) / math.sqrt(denom))


def auc(labels, scores) -> float:
    """Rank-based AUC with average ranks for tied scores."""
    y = _as_binary(labels, "labels")
    s = np.asarray(scores, dtype=float)
    if s.shape != y.shape:
        raise ValueError(f"length mismatch: {y.shape} labels vs {s.shape} scores")
    n_pos = int((y == 1).sum())
    n_neg = int((y == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise UndefinedAUCError(f"AUC undefined with {n_pos} positives and {n_neg} negatives")
    order = np.argsort(s, kind="mergesort")
    ranks = np.empty(len(s))
    sorted_scores = s[order]
    i = 0
    while i < len(s):
        j = i
        while j + 1 < len(s) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0  # mean of ranks i+1 .. j+1
        i = j + 1
    u = ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def weighted_f1(labels, predictions) -> float:
    """Per-class F1 averaged with class-prevalence weights; absent classes weigh 0."""
    y = _as_binary(labels, "labels")
    p = _as_binary(predictions, "predictions")
    if len(y) != len(p):
        raise ValueError(f"length mismatch: {len(y)} labels vs {len(p)} predictions")
    if len(y) == 0:
        raise ValueError("weighted F1 needs at least one example")
    total = 0.0
    for cls in (0, 1):
        support = int((y == cls).sum())
        if support == 0:
            continue
        tp = int(((y == cls) & (p == cls)).sum())
        predicted = int((p == cls).sum())
        precision = tp / predicted if predicted else 0.0
        recall = tp / support
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        total += (support / len(y)) * f1
    return float(total)


@dataclass
class EvalReport:
    confusion: ConfusionMatrix
    sensitivity: float
    specificity: float
    auc: float
    mcc: float
    weighted_f1: float
    epoch: int = 0

    def to_json_obj(self) -> dict:
        return {
            "epoch": self.epoch,
            "confusion": {"tp": self.confusion.tp, "fp": self.confusion.fp,
                          "fn": self.confusion.fn, "tn": self.confusion.tn},
            "sensitivity": self.sensitivity,
            "specificity": self.specificity,
            "auc": self.auc,
            "mcc": self.mcc,
            "weighted_f1": self.weighted_f1,
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "EvalReport":
        cm = ConfusionMatrix(**{k: int(v) for k, v in obj["confusion"].items()})
        return cls(
            confusion=cm,
            sensitivity=float(obj["sensitivity"]),
            specificity=float(obj["specificity"]),
            auc=float(obj["auc"]),
            mcc=float(obj["mcc"]),
            weighted_f1=float(obj["weighted_f1"]),
            epoch=int(obj["epoch"]),
        )


def evaluate(model, dataset: Dataset, epoch: int = 0) -> EvalReport:
    """Greedy predictions and alarm scores over a dataset; never mutates the model."""
    if len(dataset) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    matrix = dataset.vitals_matrix()
    y = dataset.labels()
    predictions = np.asarray(model.predict(matrix), dtype=int)
    scores = np.asarray(model.alarm_scores(matrix), dtype=float)
    cm = confusion(y, predictions)
    return EvalReport(
        confusion=cm,
        sensitivity=cm.sensitivity,
        specificity=cm.specificity,
        auc=auc(y, scores),
        mcc=mcc(cm),
        weighted_f1=weighted_f1(y, predictions),
        epoch=epoch,
    )


def top_k_reports(reports: Sequence[EvalReport], k: int) -> list[EvalReport]:
    """Best k reports by AUC; ties go to higher MCC, then the earlier epoch."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    ranked = sorted(reports, key=lambda r: (-r.auc, -r.mcc, r.epoch))
    if len(ranked) < k:
        log.warning("requested top %d reports but only %d are available", k, len(ranked))
    return ranked[:k]


def roc_points(labels, scores) -> tuple[np.ndarray, np.ndarray]:
    """(false positive rate, true positive rate) sweep from the highest threshold down."""
    y = _as_binary(labels, "labels")
    s = np.asarray(scores, dtype=float)
    n_pos = int((y == 1).sum())
    n_neg = int((y == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise UndefinedAUCError(f"ROC undefined with {n_pos} positives and {n_neg} negatives")
    order = np.argsort(-s, kind="mergesort")
    sorted_y = y[order]
    sorted_s = s[order]
    tps = np.cumsum(sorted_y == 1)
    fps = np.cumsum(sorted_y == 0)
    # keep only the last point of each tied-score run
    keep = np.append(sorted_s[1:] != sorted_s[:-1], True)
    tpr = np.concatenate([[0.0], tps[keep] / n_pos])
    fpr = np.concatenate([[0.0], fps[keep] / n_neg])
    return fpr, tpr
