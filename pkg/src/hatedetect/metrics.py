"""Evaluation suite: confusion matrix, per-class and support-weighted
precision/recall/F1, accuracy, and ROC AUC, for in-process models or for
externally produced prediction files.

The hate class is the positive class throughout. AUC is the pairwise
concordance probability (ties get half credit), computed from midranks.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .corpus import BINARY_LABELS, HATE, NON_HATE

log = logging.getLogger(__name__)

PER_CLASS = "per-class"
WEIGHTED = "weighted"


class Prf(NamedTuple):
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def to_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn}


def _check_labels(labels):
    for label in labels:
        if label not in BINARY_LABELS:
            raise ValueError(f"non-binary label {label!r}; expected one of {BINARY_LABELS}")


def confusion(predicted, actual) -> ConfusionMatrix:
    """Count tp/fp/fn/tn with hate as the positive class."""
    predicted = list(predicted)
    actual = list(actual)
    if len(predicted) != len(actual):
        raise ValueError(f"length mismatch: {len(predicted)} predictions, {len(actual)} labels")
    if not predicted:
        raise ValueError("empty input")
    _check_labels(predicted)
    _check_labels(actual)
    tp = fp = fn = tn = 0
    for p, a in zip(predicted, actual):
        if p == HATE and a == HATE:
            tp += 1
        elif p == HATE:
            fp += 1
        elif a == HATE:
            fn += 1
        else:
            tn += 1
    return ConfusionMatrix(tp, fp, fn, tn)


def _safe_prf(tp, fp, fn) -> Prf:
    # Zero-denominator convention: precision/recall are 0, F1 is 0 at P+R=0.
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2.0 * precision * recall / (precision + recall) if precision + recall else 0.0
    return Prf(precision, recall, f1)


def prf(data, average: str = WEIGHTED):
    """Precision/recall/F1 from a ConfusionMatrix or a (predicted, actual) pair.

    average="per-class" returns {hate: Prf, nonhate: Prf}; "weighted"
    returns one Prf averaged with true-class supports as weights.
    """
    cm = data if isinstance(data, ConfusionMatrix) else confusion(*data)
    hate_scores = _safe_prf(cm.tp, cm.fp, cm.fn)
    nonhate_scores = _safe_prf(cm.tn, cm.fn, cm.fp)
    if average == PER_CLASS:
        return {HATE: hate_scores, NON_HATE: nonhate_scores}
    if average != WEIGHTED:
        raise ValueError(f"unknown averaging {average!r}")
    support_hate = cm.tp + cm.fn
    support_nonhate = cm.tn + cm.fp
    total = support_hate + support_nonhate
    return Prf(
        *(
            (support_hate * h + support_nonhate * n) / total
            for h, n in zip(hate_scores, nonhate_scores)
        )
    )


def _midranks(values: np.ndarray) -> np.ndarray:
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(len(values), dtype=np.float64)
    sorted_values = values[order]
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and sorted_values[j + 1] == sorted_values[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def roc_auc(scores, labels) -> float:
    """Probability that a random hate example outscores a random non-hate
    example, ties counted half. Equals the trapezoidal ROC area."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = list(labels)
    if len(scores) != len(labels):
        raise ValueError(f"length mismatch: {len(scores)} scores, {len(labels)} labels")
    _check_labels(labels)
    positive = np.array([label == HATE for label in labels])
    n_pos = int(positive.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC is undefined when only one class is present")
    ranks = _midranks(scores)
    rank_sum = float(ranks[positive].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


@dataclass(frozen=True)
class MetricsReport:
    per_class: dict
    weighted: Prf
    accuracy: float
    auc: float | None
    supports: dict
    confusion_matrix: ConfusionMatrix

    def to_dict(self) -> dict:
        return {
            "per_class": {
                label: {"precision": s.precision, "recall": s.recall, "f1": s.f1}
                for label, s in self.per_class.items()
            },
            "weighted": {
                "precision": self.weighted.precision,
                "recall": self.weighted.recall,
                "f1": self.weighted.f1,
            },
            "accuracy": self.accuracy,
            "auc": self.auc,
            "supports": dict(self.supports),
            "confusion_matrix": self.confusion_matrix.to_dict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def to_text(self) -> str:
        """Aligned plain-text table plus the confusion matrix."""
        cm = self.confusion_matrix
        auc = f"{self.auc:.4f}" if self.auc is not None else "n/a"
        header = f"{'P':>8} {'R':>8} {'F1-hate':>8} {'F1-nonhate':>11} {'weighted-F1':>12} {'AUC':>8}"
        row = (
            f"{self.weighted.precision:8.4f} {self.weighted.recall:8.4f} "
            f"{self.per_class[HATE].f1:8.4f} {self.per_class[NON_HATE].f1:11.4f} "
            f"{self.weighted.f1:12.4f} {auc:>8}"
        )
        lines = [
            header,
            row,
            "",
            f"accuracy: {self.accuracy:.4f}   support hate={self.supports[HATE]} "
            f"nonhate={self.supports[NON_HATE]}",
            "confusion matrix (rows=actual, cols=predicted):",
            f"{'':>10}{'hate':>8}{'nonhate':>9}",
            f"{'hate':>10}{cm.tp:>8}{cm.fn:>9}",
            f"{'nonhate':>10}{cm.fp:>8}{cm.tn:>9}",
        ]
        return "\n".join(lines) + "\n"


def evaluate_predictions(scores, predicted, actual) -> MetricsReport:
    """Assemble the full report from scores, hard predictions, and truth.

    If only one class is present AUC is omitted with a warning; everything
    else is still reported.
    """
    cm = confusion(predicted, actual)
    per_class = prf(cm, PER_CLASS)
    weighted = prf(cm, WEIGHTED)
    accuracy = (cm.tp + cm.tn) / cm.total
    supports = {HATE: cm.tp + cm.fn, NON_HATE: cm.tn + cm.fp}
    try:
        auc = roc_auc(scores, actual)
    except ValueError:
        log.warning("single-class input: AUC omitted from the report")
        auc = None
    return MetricsReport(per_class, weighted, accuracy, auc, supports, cm)


def report(model, examples, threshold: float | None = None) -> MetricsReport:
    """Score a model over labeled examples and compute the full suite."""
    examples = list(examples)
    if not examples:
        raise ValueError("empty evaluation split")
    actual = []
    for example in examples:
        if example.binary_label is None:
            raise ValueError(f"example {example.id} has no binary label")
        actual.append(example.binary_label)
    texts = [example.text for example in examples]
    scores = model.predict(texts)
    predicted = model.classify(texts, threshold=threshold)
    return evaluate_predictions(scores, predicted, actual)


def write_predictions_csv(path, ids, scores) -> None:
    """CSV "id,score" with full-precision scores (round-trips exactly)."""
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["id", "score"])
        for example_id, score in zip(ids, scores):
            writer.writerow([example_id, repr(float(score))])


def write_labels_csv(path, ids, labels) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["id", "label"])
        for example_id, label in zip(ids, labels):
            writer.writerow([example_id, label])


def _read_two_column_csv(path, value_column):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"file not found: {path}")
    rows = {}
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        fields = reader.fieldnames or []
        if "id" not in fields or value_column not in fields:
            raise ValueError(f"{path} must have columns 'id' and {value_column!r}, has {fields}")
        for row in reader:
            if row["id"] in rows:
                raise ValueError(f"{path}: duplicate id {row['id']!r}")
            rows[row["id"]] = row[value_column]
    if not rows:
        raise ValueError(f"{path} has no data rows")
    return rows


def score_external(predictions_path, labels_path, threshold: float = 0.5) -> MetricsReport:
    """Score an externally produced predictions file against a labels file.

    Files align by id; scores must lie in [0, 1]; hard labels use the same
    >= threshold rule as the classifier.
    """
    score_rows = _read_two_column_csv(predictions_path, "score")
    label_rows = _read_two_column_csv(labels_path, "label")
    unknown = sorted(set(score_rows) ^ set(label_rows))
    if unknown:
        raise ValueError(f"prediction/label ids do not align; first mismatch: {unknown[0]!r}")
    ids = sorted(score_rows)
    scores = []
    for example_id in ids:
        score = float(score_rows[example_id])
        if not 0.0 <= score <= 1.0:
            raise ValueError(f"score out of range for id {example_id!r}: {score!r}")
        scores.append(score)
    actual = [label_rows[example_id] for example_id in ids]
    _check_labels(actual)
    predicted = [HATE if s >= threshold else NON_HATE for s in scores]
    return evaluate_predictions(np.asarray(scores), predicted, actual)
