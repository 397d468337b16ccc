"""Confusion matrices, weighted/micro/macro F1 and the k-fold evaluation runner."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .corpus import kfold_partitions, stratified_parts
from .errors import ArgumentError, DivergenceError

METRICS = ("weighted_f1", "micro_f1", "macro_f1", "accuracy")


@dataclass(frozen=True)
class ConfusionMatrix:
    counts: np.ndarray  # rows = gold, columns = predicted
    label_space: object

    @property
    def total(self):
        return int(self.counts.sum())


@dataclass(frozen=True)
class MetricsReport:
    labels: tuple
    precision: tuple
    recall: tuple
    f1: tuple
    support: tuple
    macro_f1: float
    micro_f1: float
    weighted_f1: float
    accuracy: float

    def metric(self, name):
        if name not in METRICS:
            raise ArgumentError(f"unknown metric {name!r}; choose from {METRICS}")
        return getattr(self, name)

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), ensure_ascii=False, indent=2)

    def to_text(self):
        width = max(12, *(len(l) for l in self.labels))
        lines = [f"{'label':<{width}} {'precision':>9} {'recall':>9} {'f1':>9} {'support':>8}"]
        for row in zip(self.labels, self.precision, self.recall, self.f1, self.support):
            lines.append(f"{row[0]:<{width}} {row[1]:>9.4f} {row[2]:>9.4f} {row[3]:>9.4f} {row[4]:>8d}")
        lines.append("")
        for name in ("accuracy", "macro_f1", "micro_f1", "weighted_f1"):
            lines.append(f"{name:<{width}} {getattr(self, name):>9.4f}")
        return "\n".join(lines)


def confusion_matrix(gold, pred, label_space):
    gold = np.asarray(gold, dtype=np.int64)
    pred = np.asarray(pred, dtype=np.int64)
    k = len(label_space)
    if gold.shape != pred.shape or gold.ndim != 1:
        raise ArgumentError(f"gold and predicted label lists differ in length ({gold.shape} vs {pred.shape})")
    if gold.size == 0:
        raise ArgumentError("cannot build a confusion matrix from zero examples")
    for name, arr in (("gold", gold), ("predicted", pred)):
        if arr.min() < 0 or arr.max() >= k:
            raise ArgumentError(f"{name} label index out of range [0, {k})")
    counts = np.zeros((k, k), dtype=np.int64)
    np.add.at(counts, (gold, pred), 1)
    return ConfusionMatrix(counts, label_space)


def _ratio(num, den):
    # zero denominator -> 0 by convention
    return np.divide(num, den, out=np.zeros_like(num, dtype=np.float64), where=den > 0)


def f1_report(cm):
    counts = cm.counts.astype(np.float64)
    if counts.sum() <= 0:
        raise ArgumentError("confusion matrix is empty")
    tp = np.diag(counts)
    predicted = counts.sum(axis=0)
    support = counts.sum(axis=1)
    precision = _ratio(tp, predicted)
    recall = _ratio(tp, support)
    f1 = _ratio(2 * precision * recall, precision + recall)
    total = counts.sum()
    tp_all = tp.sum()
    fp_all = (predicted - tp).sum()
    fn_all = (support - tp).sum()
    micro_p = tp_all / (tp_all + fp_all)
    micro_r = tp_all / (tp_all + fn_all)
    if micro_p == micro_r:
        micro_f1 = float(micro_p)  # harmonic mean of equal values, without rounding drift
    else:
        micro_f1 = float(2 * micro_p * micro_r / (micro_p + micro_r)) if tp_all > 0 else 0.0
    labels = tuple(getattr(cm.label_space, "labels", None) or [str(i) for i in range(len(tp))])
    return MetricsReport(
        labels=labels,
        precision=tuple(float(x) for x in precision),
        recall=tuple(float(x) for x in recall),
        f1=tuple(float(x) for x in f1),
        support=tuple(int(x) for x in support),
        macro_f1=float(f1.mean()),
        micro_f1=micro_f1,
        weighted_f1=float((support * f1).sum() / total),
        accuracy=float(tp_all / total),
    )


def evaluate(gold, pred, label_space):
    return f1_report(confusion_matrix(gold, pred, label_space))


def score_table(scores, fmt="{:.2f}", scale=100.0):
    """Render a model x dataset grid of scores as an aligned plain-text table."""
    models = list(scores)
    datasets = []
    for row in scores.values():
        for d in row:
            if d not in datasets:
                datasets.append(d)
    width = max([len("Model")] + [len(m) for m in models])
    cols = [max(len(d), 7) for d in datasets]
    lines = ["  ".join([f"{'Model':<{width}}"] + [f"{d:>{c}}" for d, c in zip(datasets, cols)])]
    for m in models:
        cells = []
        for d, c in zip(datasets, cols):
            v = scores[m].get(d)
            cells.append(f"{'-' if v is None else fmt.format(v * scale):>{c}}")
        lines.append("  ".join([f"{m:<{width}}"] + cells))
    return "\n".join(lines)


@dataclass(frozen=True)
class CrossValidationResult:
    fold_scores: tuple
    mean: float
    std: float
    metric: str
    reports: tuple = ()

    def to_text(self):
        lines = [f"{'fold':<6} {self.metric:>12}"]
        lines += [f"{i:<6} {s:>12.4f}" for i, s in enumerate(self.fold_scores)]
        lines.append(f"{'mean':<6} {self.mean:>12.4f} +/- {self.std:.4f}")
        return "\n".join(lines)


def crossvalidate(dataset, label_space, k, fit, metric="macro_f1", seed=0, stratify=True, validation_fraction=0.1):
    """Score a learner over ``k`` folds.

    ``fit(train, validation, fold_seed)`` must return a callable mapping a
    list of examples to predicted label indices.  Each fold carves a
    stratified validation slice from its train part and uses the seed
    ``seed + fold``.
    """
    if metric not in METRICS:
        raise ArgumentError(f"unknown metric {metric!r}; choose from {METRICS}")
    scores = []
    reports = []
    for fold, (train, test) in enumerate(kfold_partitions(dataset, k, seed, stratify=stratify, label_space=label_space)):
        fold_seed = seed + fold
        fit_part, val_part = stratified_parts(train, (1.0 - validation_fraction, validation_fraction), fold_seed)
        if not val_part:
            val_part = fit_part
        try:
            predict = fit(fit_part, val_part, fold_seed)
        except DivergenceError as exc:
            raise DivergenceError(f"fold {fold}: {exc}") from exc
        report = evaluate([ex.label for ex in test], predict(test), label_space)
        reports.append(report)
        scores.append(report.metric(metric))
    arr = np.asarray(scores)
    return CrossValidationResult(tuple(float(s) for s in scores), float(arr.mean()), float(arr.std()), metric, tuple(reports))
