"""Confusion-matrix metrics for the binary detector (class 1 = malicious = positive)."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    tn: int
    fp: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.tn, self.fp, self.fn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def n(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    @property
    def supports(self) -> tuple[int, int]:
        """Number of truly benign and truly malicious samples."""
        return self.tn + self.fp, self.tp + self.fn


def confusion(predictions, truth) -> ConfusionMatrix:
    p = np.asarray(predictions).reshape(-1)
    t = np.asarray(truth).reshape(-1)
    if p.shape != t.shape:
        raise ValueError(f"{p.size} predictions but {t.size} labels")
    for name, arr in (("predictions", p), ("truth", t)):
        if arr.size and not np.all((arr == 0) | (arr == 1)):
            raise ValueError(f"{name} must contain only 0 and 1")
    p = p.astype(bool)
    t = t.astype(bool)
    return ConfusionMatrix(
        tp=int(np.count_nonzero(p & t)),
        tn=int(np.count_nonzero(~p & ~t)),
        fp=int(np.count_nonzero(p & ~t)),
        fn=int(np.count_nonzero(~p & t)),
    )


def _ratio(num, den):
    return (num / den, False) if den > 0 else (0.0, True)


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int
    degenerate: bool = False  # some ratio had a zero denominator and was reported as 0


def _class_metrics(tp, fp, fn, support) -> ClassMetrics:
    precision, d1 = _ratio(tp, tp + fp)
    recall, d2 = _ratio(tp, tp + fn)
    f1, d3 = _ratio(2 * precision * recall, precision + recall)
    return ClassMetrics(precision, recall, f1, support, d1 or d2 or d3)


@dataclass(frozen=True)
class Averages:
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class EvaluationReport:
    confusion: ConfusionMatrix
    per_class: tuple[ClassMetrics, ClassMetrics]
    accuracy: float
    macro_avg: Averages
    weighted_avg: Averages
    fp_rate: float
    fn_rate: float
    evasion_rate: float | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["per_class"] = {"0": asdict(self.per_class[0]), "1": asdict(self.per_class[1])}
        return d

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    def table(self, title: str | None = None) -> str:
        """Per-class rows, accuracy, macro and weighted averages, 4 decimals."""
        lines = []
        if title:
            lines.append(title)
        lines.append(f"{'':>16} {'Precision':>9} {'Recall':>9} {'F1 Score':>9} {'Support':>9}")
        for c, m in enumerate(self.per_class):
            lines.append(f"{c:>16} {m.precision:9.4f} {m.recall:9.4f} {m.f1:9.4f} {m.support:9d}")
        n = self.confusion.n
        lines.append(f"{'Accuracy':>16} {'':>9} {'':>9} {self.accuracy:9.4f} {n:9d}")
        for name, a in (("Macro average", self.macro_avg), ("Weighted average", self.weighted_avg)):
            lines.append(f"{name:>16} {a.precision:9.4f} {a.recall:9.4f} {a.f1:9.4f} {n:9d}")
        cm = self.confusion
        lines.append(f"confusion: tn={cm.tn} fp={cm.fp} fn={cm.fn} tp={cm.tp}")
        lines.append(f"FP rate {self.fp_rate:.4%}  FN rate {self.fn_rate:.4%}")
        if self.evasion_rate is not None:
            lines.append(f"evasion rate {self.evasion_rate:.4f}")
        return "\n".join(lines) + "\n"


def compute_report(cm: ConfusionMatrix, per_class_supports=None, evasion_rate=None) -> EvaluationReport:
    """Accuracy, per-class precision/recall/F1 and their macro/weighted averages.

    Class 0 metrics swap the positive and negative roles. ``per_class_supports``
    defaults to the true-class counts implied by ``cm``.
    """
    if cm.n == 0:
        raise ValueError("confusion matrix is empty")
    supports = cm.supports
    if per_class_supports is not None and tuple(int(s) for s in per_class_supports) != supports:
        raise ValueError(f"supports {tuple(per_class_supports)} disagree with the confusion matrix {supports}")
    benign = _class_metrics(cm.tn, cm.fn, cm.fp, supports[0])
    malicious = _class_metrics(cm.tp, cm.fp, cm.fn, supports[1])
    per_class = (benign, malicious)
    macro = Averages(*(sum(getattr(m, k) for m in per_class) / 2 for k in ("precision", "recall", "f1")))
    weighted = Averages(*(sum(m.support * getattr(m, k) for m in per_class) / cm.n for k in ("precision", "recall", "f1")))
    fp_rate, _ = _ratio(cm.fp, cm.fp + cm.tn)
    fn_rate, _ = _ratio(cm.fn, cm.fn + cm.tp)
    return EvaluationReport(cm, per_class, (cm.tp + cm.tn) / cm.n, macro, weighted, fp_rate, fn_rate, evasion_rate)


def evaluate(model, data, threshold: float = 0.5, evasion_rate=None) -> EvaluationReport:
    pred = model.predict_class(data.x, threshold)
    return compute_report(confusion(pred, data.y), evasion_rate=evasion_rate)


def evasion_rate(model, adversarial, threshold: float = 0.5) -> float:
    """Share of adversarial samples the model calls benign."""
    samples = getattr(adversarial, "samples", adversarial)
    if len(samples) == 0:
        raise ValueError("adversarial set is empty")
    pred = model.predict_class(samples.x, threshold)
    return float(np.count_nonzero(pred == 0)) / len(samples)
