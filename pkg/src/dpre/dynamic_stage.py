"""Fast-loop machinery: RB shares, sigmoidal rewards, and the bandit strategies.

Every reservation candidate runs its own adversarial bandit over the
subsets ("arms") of its static reservation set.  The DRP strategy biases
exploration by the Bayes model and estimates unchosen arms' rewards from
whatever feedback the chosen arm exposed; the EXP3 baseline explores
uniformly and updates only the chosen arm.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations
from math import exp, log, sqrt, e as _E
from typing import Mapping, Sequence

import numpy as np

from .correlation import BayesModel
from .static_stage import StaticPlan
from .topology import SensingType

Arm = tuple[int, ...]


@dataclass(frozen=True)
class UtilityParams:
    """Sigmoid reward shape for one sensing type.

    `criticality` controls the steepness, `delay_threshold` (TTIs) is the
    inflection point; the derived constants pin the curve to u(0) = 1 and
    u(inf) = 0.
    """
    criticality: float
    delay_threshold: float

    def __post_init__(self) -> None:
        if self.criticality <= 0 or self.delay_threshold <= 0:
            raise ValueError("criticality and delay_threshold must be positive")

    @property
    def scale(self) -> float:
        """c = (1 + e^(a*b)) / e^(a*b)"""
        eab = exp(self.criticality * self.delay_threshold)
        return (1.0 + eab) / eab

    @property
    def offset(self) -> float:
        """d = 1 / (1 + e^(a*b))"""
        return 1.0 / (1.0 + exp(self.criticality * self.delay_threshold))


# QoS tuples (delay threshold ms, criticality) per sensing type; interference
# carries no deadline of its own and gets a neutral mid-range default.
DEFAULT_QOS: dict[SensingType, UtilityParams] = {
    SensingType.TEMPERATURE: UtilityParams(0.8, 8.0),
    SensingType.HUMIDITY: UtilityParams(0.45, 12.0),
    SensingType.PRESSURE: UtilityParams(0.4, 16.0),
    SensingType.VIBRATION: UtilityParams(0.6, 10.0),
    SensingType.INTERFERENCE: UtilityParams(0.5, 10.0),
}


def utility(params: UtilityParams, latency: float) -> float:
    """Reward of a delivery after `latency` TTIs; 1 at zero delay, to 0 as it grows."""
    if latency < 0:
        raise ValueError("latency must be non-negative")
    a, b = params.criticality, params.delay_threshold
    sig = 1.0 / (1.0 + exp(-a * (latency - b)))
    return 1.0 - params.scale * (sig - params.offset)


def largest_remainder(weights: Sequence[float], total: int) -> list[int]:
    """Round fractional shares `weights/sum*total` to ints summing to `total`.

    Floors first, then hands remainders to the largest fractional parts;
    remaining ties go to the lowest index.
    """
    if total < 0:
        raise ValueError("total must be non-negative")
    wsum = float(sum(weights))
    if wsum <= 0.0:
        shares = [total / len(weights)] * len(weights) if weights else []
    else:
        shares = [w / wsum * total for w in weights]
    floors = [int(s) for s in shares]
    leftover = total - sum(floors)
    order = sorted(range(len(shares)), key=lambda i: (-(shares[i] - floors[i]), i))
    for i in order[:leftover]:
        floors[i] += 1
    return floors


def allocate_reserved(theta: Sequence[int], plan: StaticPlan, n_res: int) -> dict[int, int]:
    """Split the reserved RBs over this TTI's candidates by correlation weight.

    Each candidate's weight is the score sum of its reservation set; integer
    shares come from largest-remainder rounding and are then capped by the
    reservation set size, so the total never exceeds `n_res`.
    """
    if n_res < 0:
        raise ValueError("n_res must be non-negative")
    cands = sorted(theta)
    if not cands or n_res == 0:
        return {y: 0 for y in cands}
    weights = [plan.score_sum(y) for y in cands]
    shares = largest_remainder(weights, n_res)
    return {y: min(s, len(plan.reservation_sets[y]))
            for y, s in zip(cands, shares)}


@lru_cache(maxsize=4096)
def arm_space(pool: Arm, size: int) -> tuple[Arm, ...]:
    """All `size`-subsets of an ascending node pool, in lexicographic order."""
    return tuple(combinations(tuple(sorted(pool)), size))


def arm_prior(model: BayesModel, y: int, arms: Sequence[Arm]) -> np.ndarray:
    """Exploration prior: normalized product of the members' posteriors given y."""
    if not arms:
        raise ValueError("arm space must be non-empty")
    row = model.phi_row(y)
    raw = np.array([np.prod([row[model.vocab_index(x)] for x in arm])
                    for arm in arms], dtype=float)
    return raw / raw.sum()


@dataclass
class DrpState:
    """Exponential weights per (candidate, subset size), lazily created at 1."""

    gamma: float
    penalty: float = 0.1  # per missed reservation in the reward
    weights: dict[tuple[int, int], dict[Arm, float]] = field(default_factory=dict)
    trial_count: dict[int, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must be in (0, 1]")
        if self.penalty < 0.0:
            raise ValueError("penalty must be non-negative")

    def table(self, y: int, delta: int) -> dict[Arm, float]:
        return self.weights.setdefault((y, delta), {})

    def weight_vector(self, y: int, arms: Sequence[Arm]) -> np.ndarray:
        table = self.table(y, len(arms[0]))
        return np.array([table.get(arm, 1.0) for arm in arms], dtype=float)


def selection_probabilities(state: DrpState, arms: Sequence[Arm],
                            prior: np.ndarray, y: int) -> np.ndarray:
    """Mix of the normalized weights and the exploration prior."""
    w = state.weight_vector(y, arms)
    probs = (1.0 - state.gamma) * w / w.sum() + state.gamma * prior
    return probs


def _sample_index(probs: np.ndarray, rng: np.random.Generator) -> int:
    cum = np.cumsum(probs)
    return int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))


def drp_select(state: DrpState, model: BayesModel, y: int, arms: Sequence[Arm],
               rng: np.random.Generator) -> tuple[Arm, np.ndarray]:
    """Draw an arm for candidate y with model-guided exploration."""
    probs = selection_probabilities(state, arms, arm_prior(model, y, arms), y)
    idx = _sample_index(probs, rng)
    state.trial_count[y] = state.trial_count.get(y, 0) + 1
    return arms[idx], probs


def drp_reward(chosen: Arm, observed: set[int], latencies: Mapping[int, int],
               utilities: Mapping[int, UtilityParams], delta: int,
               penalty: float) -> float:
    """Observed reward of the chosen arm, clamped into [0, 1].

    Members that accessed through a reservation earn their sigmoid utility;
    members that did not cost `penalty` each; the sum is averaged over the
    arm size.
    """
    gain = 0.0
    misses = 0
    for x in chosen:
        if x in observed:
            gain += utility(utilities[x], latencies[x])
        else:
            misses += 1
    return _clamp01((gain - penalty * misses) / delta)


def drp_estimate_others(arm: Arm, chosen: Arm, observed: set[int],
                        failed: set[int], latencies: Mapping[int, int],
                        utilities: Mapping[int, UtilityParams], delta: int,
                        penalty: float, reward_chosen: float) -> float:
    """Estimated reward of an unchosen arm from the chosen arm's feedback.

    Credits only members seen to succeed, penalizes only members seen to
    fail (the chosen arm's misses), and never exceeds the chosen arm's
    observed reward.
    """
    gain = 0.0
    misses = 0
    for x in arm:
        if x in observed:
            gain += utility(utilities[x], latencies[x])
        elif x in failed:
            misses += 1
    return min(_clamp01((gain - penalty * misses) / delta), reward_chosen)


def drp_update(state: DrpState, y: int, arms: Sequence[Arm], probs: np.ndarray,
               chosen_idx: int, rewards: Sequence[float]) -> None:
    """Exponential-weight update with importance weighting for every arm.

    The chosen arm divides by its selection probability; unchosen arms
    divide by max(p, 1-p), keeping their importance weights bounded.
    """
    k = len(arms)
    table = state.table(y, len(arms[0]))
    for i, arm in enumerate(arms):
        r = rewards[i]
        if not 0.0 <= r <= 1.0:
            raise ValueError("rewards must lie in [0, 1]")
        if i == chosen_idx:
            rhat = r / probs[i]
        else:
            rhat = r / max(probs[i], 1.0 - probs[i])
        table[arm] = table.get(arm, 1.0) * exp(state.gamma * rhat / k)
    _renormalize(table)


def exp3_select(state: DrpState, y: int, arms: Sequence[Arm],
                rng: np.random.Generator) -> tuple[Arm, np.ndarray]:
    """Baseline selection: uniform exploration instead of the model prior."""
    uniform = np.full(len(arms), 1.0 / len(arms))
    probs = selection_probabilities(state, arms, uniform, y)
    idx = _sample_index(probs, rng)
    state.trial_count[y] = state.trial_count.get(y, 0) + 1
    return arms[idx], probs


def exp3_update(state: DrpState, y: int, arms: Sequence[Arm], probs: np.ndarray,
                chosen_idx: int, reward: float) -> None:
    """Classic update: only the chosen arm's weight moves."""
    if not 0.0 <= reward <= 1.0:
        raise ValueError("reward must lie in [0, 1]")
    k = len(arms)
    table = state.table(y, len(arms[0]))
    arm = arms[chosen_idx]
    rhat = reward / probs[chosen_idx]
    table[arm] = table.get(arm, 1.0) * exp(state.gamma * rhat / k)
    _renormalize(table)


def _renormalize(table: dict[Arm, float]) -> None:
    # keeps weights finite over long runs; scaling leaves probabilities intact
    peak = max(table.values())
    if peak > 1e50:
        for arm in table:
            table[arm] /= peak


def _clamp01(v: float) -> float:
    return min(max(v, 0.0), 1.0)


def regret_bound_drp(n_arms: int, gamma: float, g_max: float) -> float:
    """Worst-case regret bound of DRP under uniform exploration."""
    if n_arms < 1 or not 0.0 < gamma <= 1.0:
        raise ValueError("need n_arms >= 1 and gamma in (0, 1]")
    return ((1.0 - gamma) / gamma * log(n_arms)
            + (gamma * (2.0 * _E - 3.0) + n_arms - 1.0) / n_arms * g_max)


def regret_bound_exp3(n_arms: int, gamma: float, g_max: float) -> float:
    """Worst-case regret bound of EXP3 with exploration rate gamma."""
    if n_arms < 1 or not 0.0 < gamma <= 1.0:
        raise ValueError("need n_arms >= 1 and gamma in (0, 1]")
    return n_arms * log(n_arms) / gamma + (_E - 1.0) * gamma * g_max


def drp_gamma_star(n_arms: int, g: float) -> float:
    """Exploration rate minimizing the DRP bound for a gain cap g."""
    if n_arms < 1 or g <= 0:
        raise ValueError("need n_arms >= 1 and g > 0")
    if n_arms == 1:
        return 1.0
    return min(1.0, sqrt(n_arms * log(n_arms) / ((2.0 * _E - 3.0) * g)))
