"""Turning the base station's access history into labeled training samples.

Each successful access becomes one sample: the accessing node is the label,
and the feature vector collects every node that also accessed the BS inside
a symmetric time window and is either of the same sensing type or within a
small distance radius.  A node accessing k times inside the window
contributes k feature tokens (multinomial event counts).
"""

from __future__ import annotations

import csv
from bisect import bisect_left, bisect_right
from dataclasses import dataclass
from enum import Enum
from math import hypot
from typing import Iterable, Sequence

from .topology import Node


class AccessPath(Enum):
    PRE_ALLOCATED = "pre_allocated"
    CONVENTIONAL = "conventional"


class DataError(ValueError):
    """Raised when access records are inconsistent with the node population."""


@dataclass(frozen=True)
class AccessRecord:
    node_id: int
    access_tti: int
    path: AccessPath
    latency: int
    trigger_tti: int | None = None
    conv_delay: int | None = None  # what the SR path drew for this trigger

    def __post_init__(self) -> None:
        if self.latency < 0:
            raise DataError(f"negative latency for node {self.node_id}")
        if (self.path is AccessPath.PRE_ALLOCATED and self.conv_delay is not None
                and self.latency >= self.conv_delay):
            raise DataError("a pre-allocated access must beat its conventional draw")


@dataclass(frozen=True)
class AccessSample:
    label: int
    features: tuple[int, ...]
    tti: int


@dataclass
class SampleConfig:
    time_window: int = 25          # TTIs either side of the label access
    distance_radius: float = 0.5   # metres
    epoch_length: int = 5          # trials between retrainings
    retention_epochs: int = 4      # epochs of samples kept for training

    def __post_init__(self) -> None:
        if self.time_window <= 0:
            raise ValueError("time_window must be positive")
        if self.distance_radius <= 0:
            raise ValueError("distance_radius must be positive")
        if self.epoch_length < 1:
            raise ValueError("epoch_length must be >= 1")
        if self.retention_epochs < 1:
            raise ValueError("retention_epochs must be >= 1")


#: a corpus is a chronological list of per-epoch sample batches
Corpus = list[list[AccessSample]]


def extract_samples(records: Sequence[AccessRecord], nodes: Sequence[Node],
                    cfg: SampleConfig,
                    label_range: tuple[int, int] | None = None) -> list[AccessSample]:
    """One sample per access record, with window/type/distance feature selection.

    `records` must be sorted by access TTI.  `label_range` optionally narrows
    which records become labels (half-open TTI interval) while still drawing
    features from the full record list; the simulator uses it to avoid
    duplicating samples across epoch boundaries.
    """
    by_id = {n.id: n for n in nodes}
    for rec in records:
        if rec.node_id not in by_id:
            raise DataError(f"access record references unknown node {rec.node_id}")
    ttis = [r.access_tti for r in records]
    if any(a > b for a, b in zip(ttis, ttis[1:])):
        raise DataError("records must be sorted by access_tti")

    out: list[AccessSample] = []
    for i, rec in enumerate(records):
        if label_range is not None and not (label_range[0] <= rec.access_tti < label_range[1]):
            continue
        node = by_id[rec.node_id]
        lo = bisect_left(ttis, rec.access_tti - cfg.time_window)
        hi = bisect_right(ttis, rec.access_tti + cfg.time_window)
        feats: list[int] = []
        for j in range(lo, hi):
            if j == i:
                continue
            other = by_id[records[j].node_id]
            if other.id == node.id:
                continue  # the label's own other accesses are not features
            if other.sensing_type is node.sensing_type or _dist(other, node) <= cfg.distance_radius:
                feats.append(other.id)
        out.append(AccessSample(node.id, tuple(feats), rec.access_tti))
    return out


def _dist(a: Node, b: Node) -> float:
    return hypot(a.x - b.x, a.y - b.y)


def update_corpus(corpus: Corpus, new_samples: Iterable[AccessSample],
                  cfg: SampleConfig) -> Corpus:
    """Append one epoch's samples and evict batches beyond the retention horizon."""
    updated = list(corpus)
    updated.append(list(new_samples))
    if len(updated) > cfg.retention_epochs:
        updated = updated[-cfg.retention_epochs:]
    return updated


def flatten_corpus(corpus: Corpus) -> list[AccessSample]:
    return [s for batch in corpus for s in batch]


def corpus_to_csv(corpus: Corpus, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["label", "tti", "feature_ids"])
        for sample in flatten_corpus(corpus):
            w.writerow([sample.label, sample.tti,
                        ";".join(str(f) for f in sample.features)])


def corpus_from_csv(path) -> list[AccessSample]:
    samples = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            feats = tuple(int(f) for f in row["feature_ids"].split(";") if f)
            samples.append(AccessSample(int(row["label"]), feats, int(row["tti"])))
    return samples
