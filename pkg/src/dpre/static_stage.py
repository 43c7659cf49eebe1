"""Slow-loop selection of reservation candidates and their static reservation sets.

Run once per epoch: retrain the Bayes model on the current corpus, then for
every observed label score its feature nodes with the active correlation
metric.  Labels whose best feature score clears the metric's threshold
become reservation candidates; each keeps its top-k features as the static
reservation set that the dynamic stage draws arms from.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .correlation import BayesModel, CorrelationMetric, score, train
from .samples import AccessSample


class StaticConfigError(ValueError):
    """Raised when the static stage is misconfigured."""


# chi-square threshold per the reference operating point; posterior and MI
# thresholds calibrated at desk scale to sit inside the band separating
# interference labels from plate-correlated ones (see tests).
DEFAULT_THRESHOLDS: dict[CorrelationMetric, float] = {
    CorrelationMetric.CHI_SQUARE: 50.0,
    CorrelationMetric.POSTERIOR: 0.2,
    CorrelationMetric.MUTUAL_INFORMATION: 0.05,
}


@dataclass
class StaticConfig:
    thresholds: dict[CorrelationMetric, float] = field(
        default_factory=lambda: dict(DEFAULT_THRESHOLDS))
    set_size: int = 8

    def __post_init__(self) -> None:
        if self.set_size < 1:
            raise StaticConfigError("set_size must be >= 1")
        if any(a < 0 for a in self.thresholds.values()):
            raise StaticConfigError("thresholds must be non-negative")

    def threshold_for(self, metric: CorrelationMetric) -> float:
        try:
            return self.thresholds[metric]
        except KeyError:
            raise StaticConfigError(f"no threshold configured for {metric}") from None


@dataclass(frozen=True)
class StaticPlan:
    """Admitted candidates and their scored reservation sets.

    `reservation_sets[y]` is a (node, score) list in descending score order,
    ties broken by ascending node id, at most `set_size` long.
    """
    candidates: frozenset[int]
    reservation_sets: dict[int, tuple[tuple[int, float], ...]]

    def members(self, y: int) -> tuple[int, ...]:
        return tuple(node for node, _ in self.reservation_sets[y])

    def score_sum(self, y: int) -> float:
        return sum(s for _, s in self.reservation_sets[y])


def observed_features(corpus: Iterable[AccessSample]) -> dict[int, set[int]]:
    """Distinct feature nodes seen with each label."""
    obs: dict[int, set[int]] = {}
    for sample in corpus:
        obs.setdefault(sample.label, set()).update(sample.features)
    return obs


def build_plan(model: BayesModel, corpus: Sequence[AccessSample],
               metric: CorrelationMetric, cfg: StaticConfig) -> StaticPlan:
    """Threshold admission plus top-k selection over each label's feature nodes."""
    alpha = cfg.threshold_for(metric)
    candidates = set()
    sets: dict[int, tuple[tuple[int, float], ...]] = {}
    for y, feats in sorted(observed_features(corpus).items()):
        if not feats:
            continue
        scored = [(x, score(model, metric, x, y)) for x in sorted(feats)]
        best = max(s for _, s in scored)
        if best < alpha:
            continue
        scored.sort(key=lambda ns: (-ns[1], ns[0]))
        candidates.add(y)
        sets[y] = tuple(scored[:cfg.set_size])
    return StaticPlan(frozenset(candidates), sets)


def epoch_step(corpus: Sequence[AccessSample], vocab: Sequence[int],
               metric: CorrelationMetric, cfg: StaticConfig) -> tuple[BayesModel, StaticPlan]:
    """One pass of the slow loop: retrain, then rebuild the plan."""
    model = train(corpus, vocab)
    return model, build_plan(model, corpus, metric, cfg)


def plan_to_csv(plan: StaticPlan, metric: CorrelationMetric,
                cfg: StaticConfig, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["candidate", "rank", "node", "score", "metric", "alpha", "xi"])
        alpha = cfg.threshold_for(metric)
        for y in sorted(plan.reservation_sets):
            for rank, (node, s) in enumerate(plan.reservation_sets[y], start=1):
                w.writerow([y, rank, node, f"{s:.12g}", metric.value, alpha, cfg.set_size])
