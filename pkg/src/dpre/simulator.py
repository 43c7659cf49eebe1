"""Per-TTI simulation of the pre-allocation loop, plus the adjacency baselines.

Every TTI the base station collects the previous TTI's accessors that are
reservation candidates, splits the reserved RBs over them, lets each
candidate's bandit pick which reservation-set members to pre-allocate, and
broadcasts the result.  Triggered nodes take a reservation when it beats
their own conventional-access draw, otherwise they fall back to the
SR/SG/BSR path.  Reservations stay open for a short window; when a window
closes the owning bandit receives its feedback.
"""

from __future__ import annotations

import csv
import hashlib
import json
from bisect import bisect_left
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from math import hypot
from typing import Mapping, Sequence

import numpy as np

from .correlation import BayesModel, CorrelationMetric
from .dynamic_stage import (
    DEFAULT_QOS,
    Arm,
    DrpState,
    UtilityParams,
    allocate_reserved,
    arm_prior,
    arm_space,
    drp_estimate_others,
    drp_reward,
    drp_update,
    exp3_select,
    exp3_update,
    largest_remainder,
    selection_probabilities,
    utility,
)
from .samples import (
    AccessPath,
    AccessRecord,
    Corpus,
    SampleConfig,
    extract_samples,
    flatten_corpus,
    update_corpus,
)
from .static_stage import StaticConfig, StaticPlan, epoch_step
from .topology import (
    STREAM_BANDIT,
    STREAM_DELAY,
    Node,
    SensingType,
    TrafficConfig,
    TriggerEvent,
    build_topology,
    conventional_access_delay,
    desk_traffic,
    generate_triggers,
    stream_rng,
)


class Algo(Enum):
    DPRE = "DPre"
    DPRE_WQOS = "DPre-wQoS"
    EXP3 = "EXP3"
    APRE = "APre"
    APRE_D = "APre-D"


#: algorithms that run the correlation-mining slow loop
LEARNING_ALGOS = (Algo.DPRE, Algo.DPRE_WQOS, Algo.EXP3)
#: algorithms that update bandit weights
BANDIT_ALGOS = (Algo.DPRE, Algo.DPRE_WQOS, Algo.EXP3, Algo.APRE_D)


@dataclass
class RunConfig:
    traffic: TrafficConfig = field(default_factory=desk_traffic)
    samples: SampleConfig = field(default_factory=SampleConfig)
    static: StaticConfig = field(default_factory=StaticConfig)
    qos: Mapping[SensingType, UtilityParams] = field(default_factory=lambda: dict(DEFAULT_QOS))
    algo: Algo = Algo.DPRE
    metric: CorrelationMetric = CorrelationMetric.CHI_SQUARE
    n_res: int = 6
    gamma: float = 0.3
    beta: float = 0.1
    n_trials: int = 40
    seed: int = 0
    reservation_window: int = 5   # TTIs a reserved RB stays open
    bootstrap_trials: int = 2     # conventional-only trials to seed the corpus
    theta_window: int = 1         # TTIs of accessors eligible as candidates
    reservation_period: int = 1   # TTIs between reservation rounds
    keep_tti_log: bool = True

    def __post_init__(self) -> None:
        if self.n_res < 0:
            raise ValueError("n_res must be non-negative")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must be in (0, 1]")
        if self.beta < 0:
            raise ValueError("beta must be non-negative")
        if self.n_trials < 1:
            raise ValueError("n_trials must be >= 1")
        if self.reservation_window < 1:
            raise ValueError("reservation_window must be >= 1")
        if self.bootstrap_trials < 1:
            raise ValueError("bootstrap_trials must be >= 1")
        if self.theta_window < 1:
            raise ValueError("theta_window must be >= 1")
        if self.reservation_period < 1:
            raise ValueError("reservation_period must be >= 1")

    def to_dict(self) -> dict:
        t = self.traffic
        return {
            "algo": self.algo.value,
            "metric": self.metric.value,
            "n_res": self.n_res,
            "gamma": self.gamma,
            "beta": self.beta,
            "n_trials": self.n_trials,
            "seed": self.seed,
            "reservation_window": self.reservation_window,
            "bootstrap_trials": self.bootstrap_trials,
            "theta_window": self.theta_window,
            "reservation_period": self.reservation_period,
            "xi": self.static.set_size,
            "thresholds": {m.value: a for m, a in sorted(
                self.static.thresholds.items(), key=lambda kv: kv[0].value)},
            "time_window": self.samples.time_window,
            "distance_radius": self.samples.distance_radius,
            "epoch_length": self.samples.epoch_length,
            "retention_epochs": self.samples.retention_epochs,
            "traffic": {
                "n_per_type": {st.value: n for st, n in sorted(
                    t.n_per_type.items(), key=lambda kv: kv[0].value)},
                "interference_prob": t.interference_prob,
                "dynamics_range": list(t.dynamics_range),
                "cells": t.cells,
                "plate_dwell_ttis": t.plate_dwell_ttis,
                "conventional_delay_range": list(t.conventional_delay_range),
                "seed": t.seed,
                "cell_length_m": t.cell_length_m,
                "cell_width_m": t.cell_width_m,
                "trigger_jitter_ttis": t.trigger_jitter_ttis,
            },
            "qos": {st.value: [p.criticality, p.delay_threshold]
                    for st, p in sorted(self.qos.items(), key=lambda kv: kv[0].value)},
        }


def config_hash(cfg: RunConfig) -> str:
    payload = json.dumps(cfg.to_dict(), sort_keys=True).encode()
    return hashlib.sha256(payload).hexdigest()[:16]


@dataclass(frozen=True)
class TtiState:
    """Snapshot of one TTI, shaped for assertions and logging."""
    tti: int
    theta: tuple[int, ...]
    omega: dict[int, int]          # reserved node -> owning candidate
    s_set: dict[int, int]          # pre-allocated accessors -> latency
    c_set: dict[int, int]          # conventional accessors -> latency
    pending: int                   # triggers waiting for service


@dataclass
class _Slot:
    node: int
    created: int
    expiry: int
    trial: int
    group: "_Group | None"
    consumed: bool = False


@dataclass
class _Group:
    """One arm selection awaiting feedback at the end of its window."""
    y: int
    arms: tuple[Arm, ...] | None    # None when no bandit runs (APre)
    probs: np.ndarray | None
    chosen_idx: int
    members: Arm
    delta: int
    created: int
    resolve_at: int
    own_hits: dict[int, int] = field(default_factory=dict)  # member -> latency


@dataclass
class TrialStats:
    trial: int
    slots: int
    hits: int
    qos_hits: int
    n_pre: int
    n_conv: int
    latency_sum: float
    utility_sum: float

    @property
    def accuracy(self) -> float:
        return self.hits / self.slots if self.slots else 0.0

    @property
    def qos_accuracy(self) -> float:
        return self.qos_hits / self.slots if self.slots else 0.0

    @property
    def mean_latency(self) -> float:
        n = self.n_pre + self.n_conv
        return self.latency_sum / n if n else 0.0

    @property
    def mean_utility(self) -> float:
        n = self.n_pre + self.n_conv
        return self.utility_sum / n if n else 0.0


@dataclass
class RunReport:
    config: dict
    config_hash: str
    trials: list[TrialStats]
    records: list[AccessRecord]
    tti_log: list[tuple]
    counters: dict


class Engine:
    """Owns all mutable per-TTI state; strictly sequential."""

    def __init__(self, cfg: RunConfig, nodes: Sequence[Node],
                 triggers: Sequence[TriggerEvent],
                 plan: StaticPlan | None = None,
                 model: BayesModel | None = None):
        self.cfg = cfg
        self.nodes = list(nodes)
        self.by_id = {n.id: n for n in self.nodes}
        self.plan = plan
        self.model = model
        self.rng_delay = stream_rng(cfg.seed, STREAM_DELAY)
        self.rng_bandit = stream_rng(cfg.seed, STREAM_BANDIT)
        self.drp = DrpState(gamma=cfg.gamma, penalty=cfg.beta)

        self.triggers_by_tti: dict[int, list[TriggerEvent]] = {}
        for ev in triggers:
            self.triggers_by_tti.setdefault(ev.trigger_tti, []).append(ev)

        self.tti = 0
        self.corpus: Corpus = []
        self.open_slots: dict[int, list[_Slot]] = {}
        self.groups: list[_Group] = []
        self.pending: dict[int, deque] = {}
        lookback = max(cfg.theta_window, cfg.reservation_period)
        self.recent_accessors: deque[set[int]] = deque(maxlen=lookback)
        self.s_history: deque[tuple[int, dict[int, int]]] = deque()
        self.records: list[AccessRecord] = []
        self.record_ttis: list[int] = []
        self.trial_stats: dict[int, TrialStats] = {}
        self.tti_log: list[tuple] = []
        self.counters = {"triggers": 0, "served_pre": 0, "served_conv": 0}
        self._adjacency: dict[int, tuple[int, ...]] = {}

    # -- helpers -------------------------------------------------------------

    def trial_of(self, tti: int) -> int:
        return tti // self.cfg.traffic.trial_ttis - self.cfg.bootstrap_trials

    def _stats(self, trial: int) -> TrialStats:
        if trial not in self.trial_stats:
            self.trial_stats[trial] = TrialStats(trial, 0, 0, 0, 0, 0, 0.0, 0.0)
        return self.trial_stats[trial]

    def adjacency(self, y: int) -> tuple[int, ...]:
        """All other nodes ordered by (distance, id); ties go to the lower id."""
        if y not in self._adjacency:
            me = self.by_id[y]
            others = sorted(
                (n for n in self.nodes if n.id != y),
                key=lambda n: (hypot(n.x - me.x, n.y - me.y), n.id))
            self._adjacency[y] = tuple(n.id for n in others)
        return self._adjacency[y]

    def deadline_of(self, node_id: int) -> float:
        return self.cfg.qos[self.by_id[node_id].sensing_type].delay_threshold

    def _utilities_for(self, ids) -> dict[int, UtilityParams]:
        return {x: self.cfg.qos[self.by_id[x].sensing_type] for x in ids}

    # -- the TTI loop ----------------------------------------------------------

    def step(self, allow_reservations: bool = True) -> TtiState:
        cfg = self.cfg
        t = self.tti
        theta: list[int] = []
        omega: dict[int, int] = {}

        if allow_reservations and cfg.n_res > 0 and t % cfg.reservation_period == 0:
            pool = set().union(*self.recent_accessors) if self.recent_accessors else set()
            if cfg.algo in LEARNING_ALGOS:
                if self.plan is not None:
                    theta = sorted(y for y in pool if y in self.plan.candidates)
            else:
                theta = sorted(pool)
            if theta:
                omega = self._reserve(theta, t)

        # new triggers arrive and draw their conventional-access delay
        for ev in self.triggers_by_tti.pop(t, ()):  # noqa: B909 - popped once
            delay = conventional_access_delay(self.rng_delay,
                                              cfg.traffic.conventional_delay_range)
            self.pending.setdefault(ev.node_id, deque()).append((t, delay))
            self.counters["triggers"] += 1

        s_now, c_now = self._serve(t)
        self.s_history.append((t, s_now))
        while self.s_history and self.s_history[0][0] <= t - cfg.reservation_window:
            self.s_history.popleft()

        # close expired reservations, then settle finished arm selections
        for node in sorted(self.open_slots):
            slots = self.open_slots[node]
            self.open_slots[node] = [s for s in slots if not s.consumed and s.expiry > t]
        self.open_slots = {n: s for n, s in self.open_slots.items() if s}
        self._settle_groups(t)

        self.recent_accessors.append(set(s_now) | set(c_now))
        self.tti += 1
        return TtiState(t, tuple(theta), omega, s_now, c_now,
                        sum(len(q) for q in self.pending.values()))

    def _reserve(self, theta: list[int], t: int) -> dict[int, int]:
        cfg = self.cfg
        if cfg.algo in LEARNING_ALGOS:
            alloc = allocate_reserved(theta, self.plan, cfg.n_res)
            pools = {y: self.plan.members(y) for y in theta}
        else:
            shares = largest_remainder([1.0] * len(theta), cfg.n_res)
            pools = {y: self.adjacency(y)[:cfg.static.set_size] for y in theta}
            alloc = {y: min(s, len(pools[y])) for y, s in zip(theta, shares)}

        omega: dict[int, int] = {}
        trial = self.trial_of(t)
        for y in theta:
            want = alloc.get(y, 0)
            if want <= 0:
                continue
            if cfg.algo is Algo.APRE:
                # nearest first, skipping nodes another candidate already took
                members = tuple(x for x in pools[y] if x not in omega)[:want]
                if not members:
                    continue
                group = _Group(y, None, None, -1, members, len(members), t,
                               t + cfg.reservation_window - 1)
            else:
                avail = tuple(sorted(x for x in pools[y] if x not in omega))
                delta = min(want, len(avail))
                if delta == 0:
                    continue
                arms = arm_space(avail, delta)
                if cfg.algo is Algo.EXP3:
                    arm, probs = exp3_select(self.drp, y, arms, self.rng_bandit)
                else:
                    if self.model is not None and self.model.has_label(y):
                        prior = arm_prior(self.model, y, arms)
                    else:
                        prior = np.full(len(arms), 1.0 / len(arms))
                    probs = selection_probabilities(self.drp, arms, prior, y)
                    idx = int(np.searchsorted(np.cumsum(probs),
                                              self.rng_bandit.random() * probs.sum(),
                                              side="right"))
                    arm = arms[idx]
                    self.drp.trial_count[y] = self.drp.trial_count.get(y, 0) + 1
                group = _Group(y, arms, probs, arms.index(arm), arm, delta, t,
                               t + cfg.reservation_window - 1)
                members = arm
            for x in members:
                omega[x] = y
                self.open_slots.setdefault(x, []).append(
                    _Slot(x, t, t + cfg.reservation_window - 1, trial, group))
            self._stats(trial).slots += len(members)
            self.groups.append(group)
        return omega

    def _serve(self, t: int) -> tuple[dict[int, int], dict[int, int]]:
        """Resolve pending triggers against open reservations and the SR path."""
        s_now: dict[int, int] = {}
        c_now: dict[int, int] = {}
        for node in sorted(self.pending):
            queue = self.pending[node]
            while queue:
                trig, delay = queue[0]
                slot = self._usable_slot(node, t)
                if slot is not None and (t - trig + 1) < delay:
                    lat = t - trig + 1
                    slot.consumed = True
                    if slot.group is not None:
                        slot.group.own_hits[node] = lat
                    stats = self._stats(slot.trial)
                    stats.hits += 1
                    if lat <= self.deadline_of(node):
                        stats.qos_hits += 1
                    self._record(node, t, AccessPath.PRE_ALLOCATED, lat, trig, delay)
                    s_now[node] = lat
                    queue.popleft()
                    continue
                if trig + delay <= t:
                    self._record(node, t, AccessPath.CONVENTIONAL, delay, trig, delay)
                    c_now[node] = delay
                    queue.popleft()
                    continue
                break
        self.pending = {n: q for n, q in self.pending.items() if q}
        return s_now, c_now

    def _usable_slot(self, node: int, t: int) -> _Slot | None:
        for slot in self.open_slots.get(node, ()):
            if not slot.consumed and slot.created <= t <= slot.expiry:
                return slot
        return None

    def _record(self, node: int, t: int, path: AccessPath, lat: int, trig: int,
                conv_delay: int) -> None:
        self.records.append(AccessRecord(node, t, path, lat, trig, conv_delay))
        self.record_ttis.append(t)
        key = "served_pre" if path is AccessPath.PRE_ALLOCATED else "served_conv"
        self.counters[key] += 1
        trial = self.trial_of(trig)
        if trial >= 0:
            stats = self._stats(trial)
            if path is AccessPath.PRE_ALLOCATED:
                stats.n_pre += 1
            else:
                stats.n_conv += 1
            stats.latency_sum += lat
            stats.utility_sum += utility(self.cfg.qos[self.by_id[node].sensing_type], lat)

    def _settle_groups(self, t: int) -> None:
        cfg = self.cfg
        remaining = []
        for group in self.groups:
            if group.resolve_at > t:
                remaining.append(group)
                continue
            # the chosen arm's reward is its own reservations' outcome; the
            # estimation step may additionally use every pre-allocated access
            # observed during the window (partial feedback about other arms)
            own = group.own_hits
            own_set = set(own)
            observed: dict[int, int] = {}
            for tti, s_map in self.s_history:
                if group.created <= tti:
                    observed.update(s_map)
            observed.update(own)
            if cfg.algo is Algo.DPRE_WQOS:
                # constant unit utility for delivered packets
                own_lat = {x: 0 for x in own}
                obs_lat = {x: 0 for x in observed}
            else:
                own_lat = own
                obs_lat = observed
            utilities = self._utilities_for(set(group.members) | set(observed))
            reward = drp_reward(group.members, own_set, own_lat, utilities,
                                group.delta, cfg.beta)
            if cfg.algo in BANDIT_ALGOS and group.arms is not None:
                if cfg.algo is Algo.EXP3:
                    exp3_update(self.drp, group.y, group.arms, group.probs,
                                group.chosen_idx, reward)
                else:
                    failed = set(group.members) - own_set
                    observed_set = set(observed)
                    rewards = []
                    for i, arm in enumerate(group.arms):
                        if i == group.chosen_idx:
                            rewards.append(reward)
                        else:
                            utilities_j = self._utilities_for(set(arm) | observed_set)
                            rewards.append(drp_estimate_others(
                                arm, group.members, observed_set, failed,
                                obs_lat, utilities_j, group.delta, cfg.beta,
                                reward))
                    drp_update(self.drp, group.y, group.arms, group.probs,
                               group.chosen_idx, rewards)
            if cfg.keep_tti_log:
                n_hit = len(own_set)
                self.tti_log.append((
                    group.created, group.y,
                    ";".join(str(x) for x in group.members),
                    n_hit, group.delta - n_hit, round(reward, 6)))
        self.groups = remaining

    # -- slow loop -------------------------------------------------------------

    def retrain(self, upto_tti: int, label_lo: int) -> None:
        """Extract the newest samples, refresh the corpus and the plan."""
        cfg = self.cfg
        start = bisect_left(self.record_ttis, label_lo - cfg.samples.time_window)
        window = self.records[start:]
        new_samples = extract_samples(window, self.nodes, cfg.samples,
                                      label_range=(label_lo, upto_tti))
        self.corpus = update_corpus(self.corpus, new_samples, cfg.samples)
        if cfg.algo in LEARNING_ALGOS:
            flat = flatten_corpus(self.corpus)
            if flat:
                vocab = sorted(self.by_id)
                self.model, self.plan = epoch_step(flat, vocab, cfg.metric,
                                                   cfg.static)


def run(cfg: RunConfig, probe=None) -> RunReport:
    """Full run: bootstrap conventionally, then alternate retraining and TTIs.

    `probe`, when given, receives every TtiState as it is produced (used by
    invariant checks; it must not mutate anything).
    """
    nodes = build_topology(cfg.traffic)
    total_trials = cfg.bootstrap_trials + cfg.n_trials
    triggers = generate_triggers(nodes, cfg.traffic, total_trials)
    engine = Engine(cfg, nodes, triggers)

    trial_ttis = cfg.traffic.trial_ttis
    first_live = cfg.bootstrap_trials * trial_ttis
    total_ttis = total_trials * trial_ttis
    drain = cfg.traffic.conventional_delay_range[1] + cfg.reservation_window + 2
    epoch_ttis = cfg.samples.epoch_length * trial_ttis

    next_retrain = first_live
    label_lo = 0
    for t in range(total_ttis + drain):
        if t == next_retrain and t < total_ttis:
            engine.retrain(t, label_lo)
            label_lo = t
            next_retrain += epoch_ttis
        state = engine.step(allow_reservations=first_live <= t < total_ttis)
        if probe is not None:
            probe(state)

    trials = [engine.trial_stats.get(i) or TrialStats(i, 0, 0, 0, 0, 0, 0.0, 0.0)
              for i in range(cfg.n_trials)]
    counters = dict(engine.counters)
    counters["unserved"] = sum(len(q) for q in engine.pending.values())
    counters["unsettled_groups"] = len(engine.groups)
    counters["corpus_samples"] = len(flatten_corpus(engine.corpus))
    return RunReport(cfg.to_dict(), config_hash(cfg), trials, engine.records,
                     engine.tti_log, counters)


def apre_select(candidates: Sequence[int], nodes: Sequence[Node],
                n_res: int) -> dict[int, tuple[int, ...]]:
    """Adjacency baseline: split RBs evenly, reserve each candidate's nearest nodes."""
    cands = sorted(candidates)
    if not cands:
        return {}
    by_id = {n.id: n for n in nodes}
    shares = largest_remainder([1.0] * len(cands), n_res)
    taken: set[int] = set()
    out: dict[int, tuple[int, ...]] = {}
    for y, share in zip(cands, shares):
        me = by_id[y]
        ranked = sorted((n for n in nodes if n.id != y),
                        key=lambda n: (hypot(n.x - me.x, n.y - me.y), n.id))
        members = []
        for n in ranked:
            if len(members) == share:
                break
            if n.id not in taken:
                members.append(n.id)
                taken.add(n.id)
        out[y] = tuple(members)
    return out


def accuracy(report: RunReport, qos_aware: bool = False) -> list[float]:
    """Per-trial fraction of reserved RBs that were actually used."""
    if qos_aware:
        return [t.qos_accuracy for t in report.trials]
    return [t.accuracy for t in report.trials]


def report_to_trial_csv(report: RunReport, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# config_hash={report.config_hash}\n")
        w = csv.writer(fh)
        w.writerow(["trial", "algo", "metric", "gamma", "accuracy",
                    "qos_accuracy", "mean_latency", "mean_utility"])
        for t in report.trials:
            w.writerow([t.trial, report.config["algo"], report.config["metric"],
                        report.config["gamma"], f"{t.accuracy:.6f}",
                        f"{t.qos_accuracy:.6f}", f"{t.mean_latency:.6f}",
                        f"{t.mean_utility:.6f}"])


def report_to_tti_csv(report: RunReport, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# config_hash={report.config_hash}\n")
        w = csv.writer(fh)
        w.writerow(["tti", "candidate", "arm_members", "hits", "misses", "reward"])
        for row in report.tti_log:
            w.writerow(row)
