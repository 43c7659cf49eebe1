"""Sensor population and event-triggered traffic of a steel-rolling production line.

The line is a row of procedure cells traversed by one plate at a time.
Temperature/humidity/pressure sensors live inside cells and fire when the
plate enters their cell; vibration sensors sit along the line and fire as
the plate passes them; interference sensors fire at random, uncoupled from
the plate.  One TTI is one millisecond.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np


class SensingType(Enum):
    TEMPERATURE = "temperature"
    HUMIDITY = "humidity"
    PRESSURE = "pressure"
    VIBRATION = "vibration"
    INTERFERENCE = "interference"


#: types whose triggering is driven by the plate (everything but interference)
CORRELATED_TYPES = (
    SensingType.TEMPERATURE,
    SensingType.HUMIDITY,
    SensingType.PRESSURE,
    SensingType.VIBRATION,
)

#: in-cell types placed per procedure cell
CELL_TYPES = (SensingType.TEMPERATURE, SensingType.HUMIDITY, SensingType.PRESSURE)

# independent RNG streams derived from one user seed
STREAM_TOPOLOGY = 0
STREAM_TRAFFIC = 1
STREAM_INTERFERENCE = 2
STREAM_DELAY = 3
STREAM_BANDIT = 4


def stream_rng(seed: int, stream: int) -> np.random.Generator:
    """Generator for one of the named sub-streams of a run seed."""
    return np.random.default_rng([int(seed), int(stream)])


class ConfigurationError(ValueError):
    """Raised for structurally invalid traffic/topology configuration."""


@dataclass(frozen=True)
class Node:
    id: int
    location: tuple[float, float]
    sensing_type: SensingType
    cell_index: int | None = None  # None for interference nodes

    @property
    def x(self) -> float:
        return self.location[0]

    @property
    def y(self) -> float:
        return self.location[1]


@dataclass(frozen=True)
class TriggerEvent:
    node_id: int
    trigger_tti: int
    deadline_type: SensingType


@dataclass
class TrafficConfig:
    """Population counts, trigger statistics and geometry of one line."""

    n_per_type: dict[SensingType, int]
    interference_prob: float = 0.8        # per plate traversal
    dynamics_range: tuple[float, float] = (0.6, 0.8)
    cells: int = 3
    plate_dwell_ttis: int = 40
    plate_gap_ttis: int = 30              # idle TTIs between consecutive plates
    conventional_delay_range: tuple[int, int] = (10, 25)
    seed: int = 0
    cell_length_m: float = 5.0
    cell_width_m: float = 2.0
    trigger_jitter_ttis: int = 4           # timing noise around the plate passing
    resample_dynamics_each_trial: bool = False

    def __post_init__(self) -> None:
        if self.cells < 1:
            raise ConfigurationError("need at least one procedure cell")
        if any(n < 0 for n in self.n_per_type.values()):
            raise ConfigurationError("node counts must be non-negative")
        if not 0.0 <= self.interference_prob <= 1.0:
            raise ConfigurationError("interference_prob must be in [0, 1]")
        lo, hi = self.dynamics_range
        if not (0.0 <= lo <= hi <= 1.0):
            raise ConfigurationError("dynamics_range must be within [0, 1]")
        dlo, dhi = self.conventional_delay_range
        if not (1 <= dlo <= dhi):
            raise ConfigurationError("conventional_delay_range must be positive")
        if self.plate_dwell_ttis < 1:
            raise ConfigurationError("plate_dwell_ttis must be >= 1")
        if self.plate_gap_ttis < 0:
            raise ConfigurationError("plate_gap_ttis must be >= 0")
        if not 0 <= self.trigger_jitter_ttis < self.plate_dwell_ttis:
            raise ConfigurationError("trigger jitter must fit inside the dwell window")

    @property
    def trial_ttis(self) -> int:
        """TTIs from one plate entering the line to the next one entering."""
        return self.cells * self.plate_dwell_ttis + self.plate_gap_ttis

    @property
    def line_length_m(self) -> float:
        return self.cells * self.cell_length_m

    @property
    def n_nodes(self) -> int:
        return sum(self.n_per_type.values())


DESK_COUNTS = {
    SensingType.TEMPERATURE: 12,
    SensingType.HUMIDITY: 12,
    SensingType.PRESSURE: 12,
    SensingType.VIBRATION: 10,
    SensingType.INTERFERENCE: 30,
}

FULL_COUNTS = {
    SensingType.TEMPERATURE: 120,
    SensingType.HUMIDITY: 120,
    SensingType.PRESSURE: 120,
    SensingType.VIBRATION: 100,
    SensingType.INTERFERENCE: 300,
}

_LEVELS = {
    "interference": {"high": 0.8, "low": 0.4},
    "dynamics": {"high": (0.6, 0.8), "low": (0.2, 0.4)},
}


def desk_traffic(dynamics: str = "high", interference: str = "high",
                 seed: int = 0, **overrides) -> TrafficConfig:
    """Desk-scale population: full-scale counts divided by ten."""
    return TrafficConfig(
        n_per_type=dict(DESK_COUNTS),
        interference_prob=_LEVELS["interference"][interference],
        dynamics_range=_LEVELS["dynamics"][dynamics],
        seed=seed,
        **overrides,
    )


def full_traffic(dynamics: str = "high", interference: str = "high",
                 seed: int = 0, **overrides) -> TrafficConfig:
    """Full-scale population (120/120/120/100/300 nodes)."""
    overrides.setdefault("cells", 6)
    return TrafficConfig(
        n_per_type=dict(FULL_COUNTS),
        interference_prob=_LEVELS["interference"][interference],
        dynamics_range=_LEVELS["dynamics"][dynamics],
        seed=seed,
        **overrides,
    )


def build_topology(cfg: TrafficConfig) -> list[Node]:
    """Place the node population on the line.

    In-cell sensor types are split evenly over cells and placed uniformly
    inside their cell; vibration sensors are evenly spaced along the line
    centre; interference sensors are uniform over the whole area.  Node ids
    are dense in 1..N and the result is a pure function of the seed.
    """
    rng = stream_rng(cfg.seed, STREAM_TOPOLOGY)
    nodes: list[Node] = []
    next_id = 1

    for stype in CELL_TYPES:
        count = cfg.n_per_type.get(stype, 0)
        base, extra = divmod(count, cfg.cells)
        for cell in range(cfg.cells):
            in_cell = base + (1 if cell < extra else 0)
            for _ in range(in_cell):
                x = (cell + rng.random()) * cfg.cell_length_m
                y = rng.random() * cfg.cell_width_m
                nodes.append(Node(next_id, (x, y), stype, cell))
                next_id += 1

    n_vib = cfg.n_per_type.get(SensingType.VIBRATION, 0)
    for i in range(n_vib):
        x = (i + 0.5) * cfg.line_length_m / n_vib
        cell = min(int(x / cfg.cell_length_m), cfg.cells - 1)
        nodes.append(Node(next_id, (x, cfg.cell_width_m / 2.0),
                          SensingType.VIBRATION, cell))
        next_id += 1

    for _ in range(cfg.n_per_type.get(SensingType.INTERFERENCE, 0)):
        x = rng.random() * cfg.line_length_m
        y = rng.random() * cfg.cell_width_m
        nodes.append(Node(next_id, (x, y), SensingType.INTERFERENCE, None))
        next_id += 1

    return nodes


def assign_trigger_probs(nodes: Sequence[Node], cfg: TrafficConfig,
                         rng: np.random.Generator) -> dict[int, float]:
    """Per-node trigger probability, drawn once from the dynamics range."""
    lo, hi = cfg.dynamics_range
    probs = {}
    for node in sorted(nodes, key=lambda n: n.id):
        if node.sensing_type is not SensingType.INTERFERENCE:
            probs[node.id] = float(rng.uniform(lo, hi))
    return probs


def interference_per_tti_prob(cfg: TrafficConfig) -> float:
    """Per-TTI Bernoulli rate giving `interference_prob` per plate traversal."""
    if cfg.interference_prob >= 1.0:
        return 1.0
    return 1.0 - (1.0 - cfg.interference_prob) ** (1.0 / cfg.trial_ttis)


def plate_pass_tti(node: Node, cfg: TrafficConfig) -> int:
    """Offset within a trial at which the plate reaches the node's position."""
    travel = cfg.cells * cfg.plate_dwell_ttis
    offset = int(node.x / cfg.line_length_m * travel)
    return min(offset, travel - 1)


def generate_triggers(nodes: Sequence[Node], cfg: TrafficConfig,
                      n_trials: int) -> list[TriggerEvent]:
    """Trigger events for `n_trials` consecutive plate traversals.

    Plate-driven nodes fire with their assigned probability as the plate
    rolls past their position (sequential along the line, with a little
    timing jitter for the in-cell types); interference nodes fire per TTI as
    a Bernoulli process.  Deterministic given the config seed; sorted by
    trigger TTI.
    """
    if n_trials < 1:
        raise ConfigurationError("n_trials must be >= 1")
    rng = stream_rng(cfg.seed, STREAM_TRAFFIC)
    rng_int = stream_rng(cfg.seed, STREAM_INTERFERENCE)

    correlated = [n for n in nodes if n.sensing_type is not SensingType.INTERFERENCE]
    interference = [n for n in nodes if n.sensing_type is SensingType.INTERFERENCE]
    correlated.sort(key=lambda n: n.id)
    interference.sort(key=lambda n: n.id)

    probs = assign_trigger_probs(nodes, cfg, rng)
    q = interference_per_tti_prob(cfg)
    dwell_end = cfg.cells * cfg.plate_dwell_ttis
    events: list[TriggerEvent] = []

    for trial in range(n_trials):
        base = trial * cfg.trial_ttis
        if cfg.resample_dynamics_each_trial:
            probs = assign_trigger_probs(nodes, cfg, rng)
        for node in correlated:
            fires = rng.random() < probs[node.id]
            offset = plate_pass_tti(node, cfg)
            if node.sensing_type is not SensingType.VIBRATION:
                jitter = int(rng.integers(0, cfg.trigger_jitter_ttis + 1))
                # jitter never pushes a node past its cell's dwell window
                cell_end = (node.cell_index + 1) * cfg.plate_dwell_ttis
                offset = min(offset + jitter, min(cell_end, dwell_end) - 1)
            if fires:
                events.append(TriggerEvent(node.id, base + offset, node.sensing_type))
        if interference:
            draws = rng_int.random((len(interference), cfg.trial_ttis)) < q
            for row, node in enumerate(interference):
                for off in np.nonzero(draws[row])[0]:
                    events.append(TriggerEvent(node.id, base + int(off),
                                               SensingType.INTERFERENCE))

    events.sort(key=lambda e: (e.trigger_tti, e.node_id))
    return events


def conventional_access_delay(rng: np.random.Generator,
                              delay_range: tuple[int, int] = (10, 25)) -> int:
    """Delay, in TTIs, of the SR/SG/BSR dynamic-access path (uniform, inclusive)."""
    lo, hi = delay_range
    return int(rng.integers(lo, hi + 1))


def topology_to_csv(nodes: Sequence[Node], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["node_id", "type", "x", "y", "cell"])
        for n in nodes:
            w.writerow([n.id, n.sensing_type.value, f"{n.x:.6f}", f"{n.y:.6f}",
                        "" if n.cell_index is None else n.cell_index])


def triggers_to_csv(events: Sequence[TriggerEvent], cfg: TrafficConfig, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["trial", "tti", "node_id"])
        for e in events:
            w.writerow([e.trigger_tti // cfg.trial_ttis, e.trigger_tti, e.node_id])
