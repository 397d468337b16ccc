"""Hard-voting ensemble with priority-based tie resolution.

Each member casts one label.  A unique most-voted label wins outright.
Equal-vote ties go first to the label whose best supporting member has the
highest validation F1 on that label, then to the label backed by the
highest-priority member.  When every member disagrees, the top-priority
member decides.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional

import numpy as np

from .errors import ArgumentError, ContractError
from .evalkit import METRICS, evaluate
from .models import fingerprint_id, predict

MAJORITY = "majority"
PER_LABEL = "per_label_tiebreak"
GLOBAL_PRIORITY = "global_priority_tiebreak"
ALL_DISTINCT = "all_distinct_fallback"


@dataclass(frozen=True)
class EnsembleConfig:
    members: tuple  # global priority order, best first
    per_label_f1: Optional[Mapping[str, tuple]] = None

    def __post_init__(self):
        members = tuple(self.members)
        object.__setattr__(self, "members", members)
        if not members:
            raise ArgumentError("an ensemble needs at least one member")
        if len(set(members)) != len(members):
            raise ArgumentError(f"duplicate member ids in {members}")
        if self.per_label_f1 is not None:
            table = {m: tuple(float(x) for x in self.per_label_f1[m]) for m in members if m in self.per_label_f1}
            missing = [m for m in members if m not in table]
            if missing:
                raise ArgumentError(f"per_label_f1 lacks members {missing}")
            widths = {len(v) for v in table.values()}
            if len(widths) != 1:
                raise ArgumentError("per_label_f1 rows must all cover the same labels")
            if any(not 0.0 <= x <= 1.0 for v in table.values() for x in v):
                raise ArgumentError("per_label_f1 values must lie in [0, 1]")
            object.__setattr__(self, "per_label_f1", table)

    @property
    def n_labels(self):
        if self.per_label_f1 is None:
            return None
        return len(next(iter(self.per_label_f1.values())))

    def to_dict(self, label_space=None):
        out = {"members": list(self.members)}
        if self.per_label_f1 is not None:
            names = label_space.labels if label_space is not None else [str(i) for i in range(self.n_labels)]
            out["per_label_f1"] = {m: dict(zip(names, row)) for m, row in self.per_label_f1.items()}
        return out

    @classmethod
    def from_dict(cls, d, label_space=None):
        table = d.get("per_label_f1")
        if table is not None:
            def row(scores):
                if label_space is None:
                    return tuple(scores[str(i)] for i in range(len(scores)))
                missing = [l for l in label_space.labels if l not in scores]
                if missing:
                    raise ArgumentError(f"per_label_f1 lacks labels {missing}")
                return tuple(scores[l] for l in label_space.labels)
            table = {m: row(scores) for m, scores in table.items()}
        return cls(tuple(d["members"]), table)

    def save(self, path, label_space=None):
        Path(path).write_text(json.dumps(self.to_dict(label_space), ensure_ascii=False, indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path, label_space=None):
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")), label_space)


@dataclass(frozen=True)
class VoteRecord:
    example_id: Optional[int]
    member_labels: dict  # member id -> label, in priority order
    tally: dict  # label -> votes, in order of first vote
    chosen: int
    resolution: str

    def to_dict(self, label_space=None):
        name = (lambda l: label_space.name(l)) if label_space is not None else (lambda l: l)
        return {
            "id": self.example_id,
            "members": {m: name(l) for m, l in self.member_labels.items()},
            "tally": {str(name(l)): c for l, c in self.tally.items()},
            "chosen": name(self.chosen),
            "resolution": self.resolution,
        }


def vote(member_labels, config, example_id=None):
    """Combine one label per member into the ensemble decision.

    ``member_labels`` is either a sequence aligned with ``config.members``
    or a mapping from member id to label.
    """
    m = len(config.members)
    if isinstance(member_labels, Mapping):
        if set(member_labels) != set(config.members):
            raise ArgumentError(f"votes from {sorted(member_labels)} do not match members {sorted(config.members)}")
        by_member = {mid: int(member_labels[mid]) for mid in config.members}
    else:
        labels = [int(l) for l in member_labels]
        if len(labels) != m:
            raise ArgumentError(f"{len(labels)} votes for {m} members")
        by_member = dict(zip(config.members, labels))
    if m < 2:
        raise ArgumentError(f"voting needs at least 2 members, got {m}")
    k = config.n_labels
    for label in by_member.values():
        if label < 0 or (k is not None and label >= k):
            raise ArgumentError(f"label {label} outside the per-label F1 table of {k} labels")

    tally = Counter()
    for label in by_member.values():
        tally[label] += 1
    tally = dict(tally)

    if len(tally) == m:
        chosen, how = by_member[config.members[0]], ALL_DISTINCT
    else:
        top = max(tally.values())
        tied = [l for l, c in tally.items() if c == top]
        how = MAJORITY
        if len(tied) > 1 and config.per_label_f1 is not None:
            score = {
                l: max(config.per_label_f1[mid][l] for mid, v in by_member.items() if v == l)
                for l in tied
            }
            best = max(score.values())
            tied = [l for l in tied if score[l] == best]
            how = PER_LABEL
        if len(tied) > 1:
            how = GLOBAL_PRIORITY
            tied = [next(by_member[mid] for mid in config.members if by_member[mid] in tied)]
        chosen = tied[0]
    return VoteRecord(example_id, by_member, tally, chosen, how)


def _align(members, config):
    by_name = {}
    for clf in members:
        if clf.name in by_name:
            raise ArgumentError(f"two members named {clf.name!r}")
        by_name[clf.name] = clf
    if set(by_name) != set(config.members):
        raise ArgumentError(f"members {sorted(by_name)} do not match ensemble config {list(config.members)}")
    prints = {fingerprint_id(c.fingerprint) for c in by_name.values() if c.fingerprint is not None}
    if len(prints) > 1:
        raise ContractError(f"ensemble members were trained under different pipelines: {sorted(prints)}")
    return [by_name[mid] for mid in config.members]


def ensemble_predict(members, batch, config):
    """Vote over every example of ``batch``; returns ``(labels, records)`` in input order."""
    ordered = _align(members, config)
    votes = np.stack([predict(clf, batch).labels for clf in ordered], axis=1)
    records = [vote(row, config, example_id=int(i)) for i, row in zip(batch.ids, votes)]
    return np.asarray([r.chosen for r in records], dtype=np.int64), records


def derive_priority(members, batch, gold, label_space, metric="weighted_f1"):
    """Order members by validation ``metric`` (stable) and record their per-class F1."""
    if len(batch) == 0:
        raise ArgumentError("validation set is empty")
    if metric not in METRICS:
        raise ArgumentError(f"unknown metric {metric!r}")
    scored = []
    per_label = {}
    for pos, clf in enumerate(members):
        report = evaluate(gold, predict(clf, batch).labels, label_space)
        scored.append((-report.metric(metric), pos, clf.name))
        per_label[clf.name] = report.f1
    order = tuple(name for _, _, name in sorted(scored))
    return EnsembleConfig(order, per_label)


def write_vote_records(path, records, label_space=None):
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for r in records:
            fh.write(json.dumps(r.to_dict(label_space), ensure_ascii=False) + "\n")
