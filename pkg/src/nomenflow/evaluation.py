"""Classification metrics: accuracy, macro/weighted F1, per-label scores,
confusion matrices and taxonomy consistency between model levels."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass
from typing import Hashable, Sequence

import numpy as np

from nomenflow.taxonomy import TaxonomyTable

__all__ = [
    "ConfusionMatrix",
    "ConsistencyReport",
    "EvalReport",
    "LabelScores",
    "confusion",
    "evaluate",
    "hierarchy_consistency",
]


def _check(truths: Sequence, predictions: Sequence) -> None:
    if len(truths) != len(predictions):
        raise ValueError(f"length_mismatch: {len(truths)} truths vs {len(predictions)} predictions")
    if len(truths) == 0:
        raise ValueError("empty_input: nothing to evaluate")


@dataclass(frozen=True)
class ConfusionMatrix:
    """Counts with rows = true label, columns = predicted label."""

    counts: np.ndarray
    labels: tuple[str, ...]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def row_normalized(self) -> np.ndarray:
        """Each row with support sums to 1; rows without support stay 0."""
        sums = self.counts.sum(axis=1, keepdims=True)
        return np.divide(self.counts, sums, out=np.zeros(self.counts.shape), where=sums > 0)

    def to_csv(self, normalized: bool = False) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["true\\predicted", *self.labels])
        data = self.row_normalized() if normalized else self.counts
        for lab, row in zip(self.labels, data):
            w.writerow([lab, *(f"{v:.6f}" if normalized else int(v) for v in row)])
        return buf.getvalue()


def confusion(truths: Sequence[Hashable], predictions: Sequence[Hashable],
              labels: Sequence[str] | None = None) -> ConfusionMatrix:
    """Confusion matrix over ``labels`` (default: sorted union of observed labels)."""
    _check(truths, predictions)
    if labels is None:
        labels = sorted(set(truths) | set(predictions))
    index = {lab: i for i, lab in enumerate(labels)}
    counts = np.zeros((len(labels), len(labels)), dtype=np.int64)
    t = np.fromiter((index[x] for x in truths), dtype=np.int64, count=len(truths))
    p = np.fromiter((index[x] for x in predictions), dtype=np.int64, count=len(predictions))
    np.add.at(counts, (t, p), 1)
    return ConfusionMatrix(counts, tuple(labels))


@dataclass(frozen=True)
class LabelScores:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class EvalReport:
    accuracy: float
    macro_f1: float
    weighted_f1: float
    per_label: dict[str, LabelScores]
    confusion: ConfusionMatrix

    @property
    def total(self) -> int:
        return self.confusion.total

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "macro_f1": self.macro_f1,
            "weighted_f1": self.weighted_f1,
            "total": self.total,
            "per_label": {k: asdict(v) for k, v in self.per_label.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_text(self) -> str:
        width = max([len("label")] + [len(k) for k in self.per_label])
        lines = [f"{'label':<{width}}  precision  recall      f1  support"]
        for k, v in self.per_label.items():
            lines.append(f"{k:<{width}}  {v.precision:9.4f}  {v.recall:6.4f}  {v.f1:6.4f}  {v.support:7d}")
        lines.append("")
        lines.append(f"accuracy     {self.accuracy:.5f}")
        lines.append(f"macro F1     {self.macro_f1:.5f}")
        lines.append(f"weighted F1  {self.weighted_f1:.5f}")
        lines.append(f"n            {self.total}")
        return "\n".join(lines)


def evaluate(truths: Sequence[str], predictions: Sequence[str]) -> EvalReport:
    """Score predictions against true labels.

    Per label, precision is TP/(TP+FP) and recall TP/(TP+FN), each 0 when its
    denominator is 0; F1 is their harmonic mean, computed as
    2TP/(2TP+FP+FN) (0 when TP is 0). The macro average runs over the union
    of labels seen in either sequence; the weighted average weights each
    label by its true support.

    Raises:
        ValueError: ``length_mismatch`` or ``empty_input``.
    """
    cm = confusion(truths, predictions)
    c = cm.counts
    tp = np.diag(c)
    support = c.sum(axis=1)
    predicted = c.sum(axis=0)
    fp = predicted - tp
    fn = support - tp
    per_label = {}
    f1s = np.zeros(len(cm.labels))
    for i, lab in enumerate(cm.labels):
        prec = tp[i] / predicted[i] if predicted[i] else 0.0
        rec = tp[i] / support[i] if support[i] else 0.0
        denom = 2 * tp[i] + fp[i] + fn[i]
        f1 = 2 * tp[i] / denom if tp[i] else 0.0
        f1s[i] = f1
        per_label[lab] = LabelScores(float(prec), float(rec), float(f1), int(support[i]))
    total = int(support.sum())
    return EvalReport(
        accuracy=float(tp.sum() / total),
        macro_f1=float(f1s.sum() / len(f1s)),
        weighted_f1=float((f1s * support).sum() / total),
        per_label=per_label,
        confusion=cm,
    )


@dataclass(frozen=True)
class ConsistencyReport:
    """Agreement between rolled-up fine predictions and a coarse model."""

    consistency: float
    total: int
    per_label: dict[str, tuple[int, int]]
    level: int

    def fraction(self, label: str) -> float:
        agree, n = self.per_label[label]
        return agree / n if n else 0.0

    def to_dict(self) -> dict:
        return {
            "level": self.level,
            "consistency": self.consistency,
            "total": self.total,
            "per_label": {k: {"agree": a, "total": n, "fraction": a / n if n else 0.0}
                          for k, (a, n) in self.per_label.items()},
        }


def hierarchy_consistency(level3_predictions: Sequence[str], coarse_predictions: Sequence[str],
                          taxonomy: TaxonomyTable, level: int = 1) -> ConsistencyReport:
    """Fraction of examples where the country prediction, rolled up to
    ``level``, equals the coarse model's prediction.

    The breakdown is keyed by the coarse model's predicted label. Country
    predictions outside the taxonomy never agree.
    """
    if len(level3_predictions) != len(coarse_predictions):
        raise ValueError(
            f"length_mismatch: {len(level3_predictions)} vs {len(coarse_predictions)} predictions")
    per: dict[str, list[int]] = {}
    agree_total = 0
    for fine, coarse in zip(level3_predictions, coarse_predictions):
        rolled = taxonomy.rollup(fine, level) if fine in taxonomy else None
        ok = int(rolled == coarse)
        agree_total += ok
        slot = per.setdefault(coarse, [0, 0])
        slot[0] += ok
        slot[1] += 1
    n = len(level3_predictions)
    return ConsistencyReport(
        consistency=agree_total / n if n else 0.0,
        total=n,
        per_label={k: (a, t) for k, (a, t) in sorted(per.items())},
        level=level,
    )
