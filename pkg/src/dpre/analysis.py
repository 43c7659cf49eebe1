"""Static-stage threshold analysis: score distributions and error-ratio curves.

Collects an access corpus under conventional-only access (so the traffic is
unbiased by reservations), trains one model on all of it, and reports each
label's best feature score per metric.  Sweeping an admission threshold over
those maxima yields the interference false-admit and correlated false-reject
curves.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .correlation import BayesModel, CorrelationMetric, score, train
from .samples import AccessSample, SampleConfig, extract_samples
from .simulator import RunConfig
from .static_stage import observed_features
from .topology import (
    STREAM_DELAY,
    Node,
    SensingType,
    build_topology,
    conventional_access_delay,
    generate_triggers,
    stream_rng,
)
from .samples import AccessPath, AccessRecord


def collect_conventional_corpus(cfg: RunConfig, n_trials: int
                                ) -> tuple[list[Node], list[AccessSample]]:
    """Access history of `n_trials` plate traversals with no pre-allocation."""
    nodes = build_topology(cfg.traffic)
    triggers = generate_triggers(nodes, cfg.traffic, n_trials)
    rng = stream_rng(cfg.seed, STREAM_DELAY)
    records = []
    for ev in triggers:
        delay = conventional_access_delay(rng, cfg.traffic.conventional_delay_range)
        records.append(AccessRecord(ev.node_id, ev.trigger_tti + delay,
                                    AccessPath.CONVENTIONAL, delay, ev.trigger_tti))
    records.sort(key=lambda r: (r.access_tti, r.node_id))
    return nodes, extract_samples(records, nodes, cfg.samples)


def best_feature_scores(model: BayesModel, corpus: Sequence[AccessSample],
                        metric: CorrelationMetric) -> dict[int, float]:
    """Each observed label's maximum feature score under `metric`."""
    out = {}
    for y, feats in sorted(observed_features(corpus).items()):
        if feats:
            out[y] = max(score(model, metric, x, y) for x in sorted(feats))
    return out


@dataclass(frozen=True)
class ThresholdPoint:
    alpha: float
    interference_admit_rate: float
    correlated_reject_rate: float


def threshold_curve(cfg: RunConfig, n_trials: int, alphas: Sequence[float],
                    metric: CorrelationMetric | None = None) -> list[ThresholdPoint]:
    """Admission error ratios over a threshold sweep for one metric."""
    metric = metric or cfg.metric
    nodes, corpus = collect_conventional_corpus(cfg, n_trials)
    model = train(corpus, sorted(n.id for n in nodes))
    best = best_feature_scores(model, corpus, metric)
    kind = {n.id: n.sensing_type for n in nodes}
    noise = [v for y, v in best.items() if kind[y] is SensingType.INTERFERENCE]
    signal = [v for y, v in best.items() if kind[y] is not SensingType.INTERFERENCE]
    points = []
    for alpha in alphas:
        admit = sum(1 for v in noise if v >= alpha) / len(noise) if noise else 0.0
        reject = sum(1 for v in signal if v < alpha) / len(signal) if signal else 0.0
        points.append(ThresholdPoint(float(alpha), admit, reject))
    return points


def separation_band(cfg: RunConfig, n_trials: int,
                    metric: CorrelationMetric | None = None,
                    max_admit: float = 0.05, max_reject: float = 0.05
                    ) -> tuple[float, float]:
    """Widest threshold interval keeping both error ratios at or below the caps.

    Returns (low, high); empty band collapses to (nan, nan).
    """
    metric = metric or cfg.metric
    nodes, corpus = collect_conventional_corpus(cfg, n_trials)
    model = train(corpus, sorted(n.id for n in nodes))
    best = best_feature_scores(model, corpus, metric)
    kind = {n.id: n.sensing_type for n in nodes}
    noise = sorted(v for y, v in best.items() if kind[y] is SensingType.INTERFERENCE)
    signal = sorted(v for y, v in best.items() if kind[y] is not SensingType.INTERFERENCE)
    if not noise or not signal:
        return (float("nan"), float("nan"))
    # the lowest alpha admitting at most max_admit of the noise labels
    k = int(np.ceil(len(noise) * (1.0 - max_admit)))
    low = noise[k - 1] if k > 0 else 0.0
    # the highest alpha rejecting at most max_reject of the correlated labels
    j = int(np.floor(len(signal) * max_reject))
    high = signal[j]
    if high <= low:
        return (float("nan"), float("nan"))
    return (float(low), float(high))


def threshold_curve_to_csv(points: Sequence[ThresholdPoint],
                           metric: CorrelationMetric, path,
                           cfg_hash: str = "") -> None:
    with open(path, "w", newline="") as fh:
        if cfg_hash:
            fh.write(f"# config_hash={cfg_hash}\n")
        w = csv.writer(fh)
        w.writerow(["alpha", "metric", "interference_admit_rate",
                    "correlated_reject_rate"])
        for p in points:
            w.writerow([f"{p.alpha:.6g}", metric.value,
                        f"{p.interference_admit_rate:.6f}",
                        f"{p.correlated_reject_rate:.6f}"])
