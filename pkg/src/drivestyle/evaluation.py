"""Per-class precision/recall, macro-F1 and accuracy."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import InputError
from .labeling import LABEL_NAMES

STYLE_CLASSES = (1, 2, 3)


@dataclass
class ConfusionCounts:
    classes: tuple[int, ...]
    n_true: dict[int, int]
    n_pred: dict[int, int]
    n_correct: dict[int, int]
    matrix: np.ndarray  # rows: true class, cols: predicted class
    n: int


def confusion(y_true: Sequence[int], y_pred: Sequence[int],
              classes: tuple[int, ...] = STYLE_CLASSES) -> ConfusionCounts:
    y_true = np.asarray(y_true, dtype=int)
    y_pred = np.asarray(y_pred, dtype=int)
    if y_true.shape != y_pred.shape:
        raise InputError("y_true and y_pred must have equal length")
    valid = set(classes)
    bad = set(np.unique(np.concatenate([y_true, y_pred]))) - valid if len(y_true) else set()
    if bad:
        raise InputError(f"labels outside the class set {sorted(valid)}: {sorted(bad)}")
    index = {c: k for k, c in enumerate(classes)}
    matrix = np.zeros((len(classes), len(classes)), dtype=int)
    for t, p in zip(y_true, y_pred):
        matrix[index[t], index[p]] += 1
    return ConfusionCounts(
        classes=tuple(classes),
        n_true={c: int(matrix[index[c]].sum()) for c in classes},
        n_pred={c: int(matrix[:, index[c]].sum()) for c in classes},
        n_correct={c: int(matrix[index[c], index[c]]) for c in classes},
        matrix=matrix,
        n=len(y_true),
    )


def f1_score(precision: float, recall: float) -> float:
    """Harmonic mean; 0 when both rates vanish."""
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def macro_f1_from_precision_recall(pairs: Sequence[tuple[float, float]]) -> float:
    """Unweighted mean of per-class harmonic means of (precision, recall)."""
    return float(np.mean([f1_score(p, r) for p, r in pairs]))


@dataclass
class MetricsReport:
    precision: dict[int, float]
    recall: dict[int, float]
    f1: dict[int, float]
    macro_f1: float
    accuracy: float
    counts: ConfusionCounts
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "per_class": {
                str(c): {
                    "precision": self.precision[c],
                    "recall": self.recall[c],
                    "f1": self.f1[c],
                }
                for c in self.counts.classes
            },
            "macro_f1": self.macro_f1,
            "accuracy": self.accuracy,
            "confusion_matrix": self.counts.matrix.tolist(),
            "warnings": self.warnings,
        }


def metrics(counts: ConfusionCounts) -> MetricsReport:
    """Standard rates from the counts; zero denominators yield 0 plus a warning."""
    if counts.n == 0:
        raise InputError("cannot compute metrics over zero samples")
    warnings_list = []
    precision, recall, f1 = {}, {}, {}
    for c in counts.classes:
        if counts.n_pred[c] == 0:
            precision[c] = 0.0
            warnings_list.append(f"class {c}: nothing predicted, precision set to 0")
        else:
            precision[c] = counts.n_correct[c] / counts.n_pred[c]
        recall[c] = counts.n_correct[c] / counts.n_true[c] if counts.n_true[c] else 0.0
        if counts.n_true[c] == 0:
            warnings_list.append(f"class {c}: no ground-truth samples, recall set to 0")
        if precision[c] + recall[c] == 0:
            warnings_list.append(f"class {c}: degenerate precision+recall, F1 set to 0")
        f1[c] = f1_score(precision[c], recall[c])
    return MetricsReport(
        precision=precision,
        recall=recall,
        f1=f1,
        macro_f1=float(np.mean([f1[c] for c in counts.classes])),
        accuracy=sum(counts.n_correct.values()) / counts.n,
        counts=counts,
        warnings=warnings_list,
    )


def render_table(report: MetricsReport, title: str = "") -> str:
    """Plain-text metrics table, one row per style class."""
    lines = []
    if title:
        lines.append(title)
    lines.append(f"{'Driving style':<14} {'Precision':>10} {'Recall':>10} {'F1':>10}")
    for c in report.counts.classes:
        name = LABEL_NAMES.get(c, str(c)).capitalize()
        lines.append(
            f"{name:<14} {report.precision[c] * 100:>9.1f}% {report.recall[c] * 100:>9.1f}% "
            f"{report.f1[c] * 100:>9.1f}%"
        )
    lines.append(f"{'Accuracy':<14} {report.accuracy * 100:>9.1f}%")
    lines.append(f"{'Macro F1':<14} {report.macro_f1 * 100:>9.1f}%")
    return "\n".join(lines) + "\n"


def save_report(path: str | Path, report: MetricsReport) -> None:
    Path(path).write_text(
        json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n", encoding="utf-8")
