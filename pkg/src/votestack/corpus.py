"""Labeled datasets, label spaces, stratified splits and k-fold partitions."""

from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import List

import numpy as np

from .errors import ArgumentError, EmptyDatasetError, FormatError, RecordError, StratificationError


@dataclass(frozen=True)
class LabeledExample:
    id: int
    text: str
    label: int


@dataclass(frozen=True)
class LabelSpace:
    labels: tuple

    def __post_init__(self):
        labels = tuple(self.labels)
        object.__setattr__(self, "labels", labels)
        if any(not isinstance(l, str) or not l for l in labels):
            raise ArgumentError("labels must be non-empty strings")
        if len(set(labels)) != len(labels):
            raise ArgumentError(f"duplicate labels in {labels}")

    def __len__(self):
        return len(self.labels)

    def index(self, label):
        try:
            return self.labels.index(label)
        except ValueError:
            raise ArgumentError(f"unknown label {label!r}") from None

    def name(self, index):
        return self.labels[index]


@dataclass(frozen=True)
class DatasetSplit:
    train: list
    validation: list
    test: list


def _read_rows(path, fmt):
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if fmt == "tsv":
        if not lines:
            raise EmptyDatasetError(f"{path} is empty")
        if lines[0].rstrip("\r") != "text\tlabel":
            raise FormatError("missing header 'text<TAB>label'", line=1)
        for lineno, line in enumerate(lines[1:], start=2):
            line = line.rstrip("\r")
            if not line:
                continue
            cols = line.split("\t")
            if len(cols) != 2:
                raise FormatError(f"expected 2 tab-separated columns, found {len(cols)}", line=lineno)
            yield lineno, cols[0], cols[1]
    elif fmt == "jsonl":
        for lineno, line in enumerate(lines, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"invalid JSON: {exc.msg}", line=lineno) from None
            if not isinstance(obj, dict):
                raise FormatError("expected a JSON object", line=lineno)
            for key in ("text", "label"):
                if not isinstance(obj.get(key), str):
                    raise FormatError(f"missing string field {key!r}", line=lineno)
            yield lineno, obj["text"], obj["label"]
    else:
        raise ArgumentError(f"unknown dataset format {fmt!r}; expected 'tsv' or 'jsonl'")


def load_dataset(path, format="tsv"):
    """Read a TSV or JSONL dataset.

    Returns ``(examples, label_space)``.  Ids are assigned 0..n-1 in file
    order and labels are indexed by first appearance.
    """
    examples = []
    labels: List[str] = []
    seen = {}
    for lineno, text, label in _read_rows(path, format):
        ex_id = len(examples)
        if not text.strip():
            raise RecordError(f"row {lineno} (id {ex_id}): empty text")
        if not label.strip():
            raise RecordError(f"row {lineno} (id {ex_id}): empty label")
        label = label.strip()
        if label not in seen:
            seen[label] = len(labels)
            labels.append(label)
        examples.append(LabeledExample(ex_id, text, seen[label]))
    if not examples:
        raise EmptyDatasetError(f"{path} contains no examples")
    return examples, LabelSpace(tuple(labels))


def write_dataset(path, examples, label_space, format="tsv"):
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        if format == "tsv":
            fh.write("text\tlabel\n")
            for ex in examples:
                fh.write(f"{ex.text}\t{label_space.name(ex.label)}\n")
        else:
            for ex in examples:
                fh.write(json.dumps({"text": ex.text, "label": label_space.name(ex.label)}, ensure_ascii=False) + "\n")


def _by_class(examples):
    groups = defaultdict(list)
    for ex in sorted(examples, key=lambda e: e.id):
        groups[ex.label].append(ex)
    return dict(sorted(groups.items()))


def allocate(n, ratios):
    """Split ``n`` items into integer parts each within 1 of ``ratio * n`` (largest remainder)."""
    exact = [r * n for r in ratios]
    counts = [math.floor(x) for x in exact]
    left = n - sum(counts)
    order = sorted(range(len(ratios)), key=lambda i: (-(exact[i] - counts[i]), i))
    for i in order[:left]:
        counts[i] += 1
    return counts


def stratified_parts(examples, ratios, seed):
    """Partition examples into ``len(ratios)`` parts with per-class proportions kept."""
    rng = np.random.default_rng(seed)
    parts = [[] for _ in ratios]
    for label, items in _by_class(examples).items():
        order = rng.permutation(len(items))
        start = 0
        for part, count in zip(parts, allocate(len(items), ratios)):
            part.extend(items[j] for j in order[start:start + count])
            start += count
    return [sorted(p, key=lambda e: e.id) for p in parts]


def stratified_split(dataset, ratios=(0.8, 0.1, 0.1), seed=0, label_space=None):
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r <= 0 for r in ratios) or not math.isclose(sum(ratios), 1.0, abs_tol=1e-9):
        raise ArgumentError(f"ratios must be three positive fractions summing to 1, got {ratios}")
    for label, items in _by_class(dataset).items():
        if len(items) < 3:
            name = label_space.name(label) if label_space else label
            raise StratificationError(f"class {name!r} has {len(items)} examples; at least 3 are needed")
    return DatasetSplit(*stratified_parts(dataset, ratios, seed))


def kfold_partitions(dataset, k=5, seed=0, stratify=True, label_space=None):
    """Return ``k`` (train, test) pairs whose test folds partition the dataset.

    Stratified folding deals each class's shuffled members round-robin,
    carrying the fold cursor across classes so total fold sizes also stay
    within one of each other.
    """
    n = len(dataset)
    if k < 2:
        raise ArgumentError(f"k must be at least 2, got {k}")
    if k > n:
        raise ArgumentError(f"k={k} exceeds dataset size {n}")
    rng = np.random.default_rng(seed)
    folds = [[] for _ in range(k)]
    if stratify:
        groups = _by_class(dataset)
        for label, items in groups.items():
            if len(items) < k:
                name = label_space.name(label) if label_space else label
                raise StratificationError(f"class {name!r} has {len(items)} examples; stratified {k}-fold needs {k}")
        cursor = 0
        for items in groups.values():
            for j in rng.permutation(len(items)):
                folds[cursor % k].append(items[j])
                cursor += 1
    else:
        items = sorted(dataset, key=lambda e: e.id)
        for pos, j in enumerate(rng.permutation(n)):
            folds[pos % k].append(items[j])
    out = []
    for fold in folds:
        test_ids = {ex.id for ex in fold}
        train = sorted((ex for ex in dataset if ex.id not in test_ids), key=lambda e: e.id)
        out.append((train, sorted(fold, key=lambda e: e.id)))
    return out
