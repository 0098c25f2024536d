"""Confusion-matrix statistics and rank-based ROC AUC (anomaly is the
positive class). Zero-denominator metrics are defined as 0 so reports stay
serializable; the convention is noted in report output.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .data import Label
from .errors import MetricsError

ZERO_DENOMINATOR_NOTE = "metrics with a zero denominator are reported as 0"
REPORT_CSV_HEADER = "approach,tp,tn,fp,fn,recall,f1,auc"


class Approach(Enum):
    IMBALANCED = "imbalanced"
    SMOTE = "smote"
    CYCLEGAN = "cyclegan"


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    tn: int
    fp: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.tn, self.fp, self.fn) < 0:
            raise MetricsError("confusion counts must be non-negative")


def confusion(truth: Sequence[Label], predicted: Sequence[Label]) -> ConfusionMatrix:
    if len(truth) != len(predicted):
        raise MetricsError(f"length mismatch: {len(truth)} truths vs {len(predicted)} predictions")
    tp = tn = fp = fn = 0
    for t, p in zip(truth, predicted):
        if t is Label.ANOMALY:
            if p is Label.ANOMALY:
                tp += 1
            else:
                fn += 1
        else:
            if p is Label.ANOMALY:
                fp += 1
            else:
                tn += 1
    return ConfusionMatrix(tp, tn, fp, fn)


def recall(cm: ConfusionMatrix) -> float:
    denom = cm.tp + cm.fn
    return cm.tp / denom if denom else 0.0


def precision(cm: ConfusionMatrix) -> float:
    denom = cm.tp + cm.fp
    return cm.tp / denom if denom else 0.0


def f1(cm: ConfusionMatrix) -> float:
    denom = 2 * cm.tp + cm.fp + cm.fn
    return 2 * cm.tp / denom if denom else 0.0


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with ties averaged (midranks)."""
    n = len(values)
    order = np.argsort(values, kind="stable")
    sv = values[order]
    boundary = np.r_[True, sv[1:] != sv[:-1]]
    group = np.cumsum(boundary) - 1
    starts = np.flatnonzero(boundary)
    counts = np.diff(np.r_[starts, n])
    midrank = starts + 0.5 * (counts - 1) + 1.0
    ranks = np.empty(n, np.float64)
    ranks[order] = midrank[group]
    return ranks


def roc_auc(truth: Sequence[Label], scores: Sequence[float]) -> float:
    """Probability that a random anomaly outscores a random normal, ties
    counted one half (the rank-sum formulation, equal to trapezoidal ROC
    integration)."""
    if len(truth) != len(scores):
        raise MetricsError(f"length mismatch: {len(truth)} truths vs {len(scores)} scores")
    y = np.array([1 if t is Label.ANOMALY else 0 for t in truth])
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricsError("AUC undefined: truth contains a single class")
    ranks = _average_ranks(np.asarray(scores, np.float64))
    return float((ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


@dataclass(frozen=True)
class EvaluationReport:
    approach: Approach
    cm: ConfusionMatrix
    recall: float
    precision: float
    f1: float
    auc: float


def make_report(approach: Approach, truth: Sequence[Label],
                predicted: Sequence[Label], scores: Sequence[float]) -> EvaluationReport:
    cm = confusion(truth, predicted)
    return EvaluationReport(approach, cm, recall(cm), precision(cm), f1(cm),
                            roc_auc(truth, scores))


def reports_to_csv(reports: Sequence[EvaluationReport]) -> str:
    """Summary table; recall, f1, and auc are percentages to two decimals."""
    lines = [REPORT_CSV_HEADER]
    for r in reports:
        lines.append(
            f"{r.approach.value},{r.cm.tp},{r.cm.tn},{r.cm.fp},{r.cm.fn},"
            f"{100.0 * r.recall:.2f},{100.0 * r.f1:.2f},{100.0 * r.auc:.2f}"
        )
    return "\n".join(lines) + "\n"


def reports_to_json(reports: Sequence[EvaluationReport]) -> str:
    payload = {
        r.approach.value: {
            "confusion": {"tp": r.cm.tp, "tn": r.cm.tn, "fp": r.cm.fp, "fn": r.cm.fn},
            "recall": r.recall,
            "precision": r.precision,
            "f1": r.f1,
            "auc": r.auc,
        }
        for r in reports
    }
    payload["note"] = ZERO_DENOMINATOR_NOTE
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"
