"""Empirical check of the bandit regret bounds on adversarial reward tables.

A case is a fixed reward matrix over (trials, arms).  The strategies run in
their abstract uniform-exploration form, vectorized over replicate seeds;
regret is measured against the best fixed arm in hindsight and compared to
the closed-form bounds.  Unchosen-arm estimates use the case's rewards
capped by the chosen arm's reward, mirroring the estimation rule's clamp.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dynamic_stage import regret_bound_drp, regret_bound_exp3

ASSIGNMENT_KINDS = ("iid", "best_constant", "switching", "drift", "decoy")


def make_assignment(kind: str, n_arms: int, n_trials: int,
                    seed: int) -> np.ndarray:
    """Reward matrix (n_trials, n_arms) with entries in [0, 1]."""
    rng = np.random.default_rng([seed, 97])
    t = np.arange(n_trials)[:, None]
    if kind == "iid":
        return rng.random((n_trials, n_arms))
    if kind == "best_constant":
        means = rng.uniform(0.1, 0.5, n_arms)
        means[rng.integers(n_arms)] = 0.9
        return np.clip(means[None, :] + rng.normal(0, 0.05, (n_trials, n_arms)), 0, 1)
    if kind == "switching":
        # the best arm moves every n_trials/4 trials
        block = max(1, n_trials // 4)
        best = rng.permutation(n_arms)[(t // block) % n_arms].reshape(-1)
        rewards = rng.uniform(0.0, 0.3, (n_trials, n_arms))
        rewards[np.arange(n_trials), best] = rng.uniform(0.7, 1.0, n_trials)
        return rewards
    if kind == "drift":
        phase = rng.uniform(0, 2 * np.pi, n_arms)
        speed = rng.uniform(0.5, 2.0, n_arms)
        return 0.5 + 0.5 * np.sin(2 * np.pi * speed * t / n_trials + phase)
    if kind == "decoy":
        # one arm shines early then collapses; another pays off late
        rewards = rng.uniform(0.0, 0.2, (n_trials, n_arms))
        early, late = rng.permutation(n_arms)[:2]
        half = n_trials // 2
        rewards[:half, early] = 0.95
        rewards[half:, late] = 0.95
        return rewards
    raise ValueError(f"unknown assignment kind {kind!r}")


def run_batch(rewards: np.ndarray, gamma: float, n_seeds: int, seed: int,
              algo: str = "drp") -> np.ndarray:
    """Cumulative gains of `n_seeds` independent runs over one reward table.

    `algo` is "drp" (estimates for every arm, bounded importance weights for
    the unchosen) or "exp3" (chosen arm only).  Exploration is uniform, the
    setting the DRP bound is stated for.
    """
    n_trials, n_arms = rewards.shape
    rng = np.random.default_rng([seed, 131])
    w = np.ones((n_seeds, n_arms))
    gains = np.zeros(n_seeds)
    rows = np.arange(n_seeds)
    for s in range(n_trials):
        probs = (1.0 - gamma) * w / w.sum(axis=1, keepdims=True) + gamma / n_arms
        cum = np.cumsum(probs, axis=1)
        draws = rng.random(n_seeds) * cum[:, -1]
        chosen = (cum < draws[:, None]).sum(axis=1)
        r_chosen = rewards[s, chosen]
        gains += r_chosen
        if algo == "drp":
            est = np.minimum(rewards[s][None, :], r_chosen[:, None])
            rhat = est / np.maximum(probs, 1.0 - probs)
            rhat[rows, chosen] = r_chosen / probs[rows, chosen]
        elif algo == "exp3":
            rhat = np.zeros_like(probs)
            rhat[rows, chosen] = r_chosen / probs[rows, chosen]
        else:
            raise ValueError(f"unknown algo {algo!r}")
        w *= np.exp(gamma * rhat / n_arms)
        w /= w.max(axis=1, keepdims=True)
    return gains


@dataclass(frozen=True)
class RegretCase:
    seed: int
    n_arms: int
    n_trials: int
    gamma: float
    kind: str


@dataclass(frozen=True)
class RegretResult:
    case: RegretCase
    algo: str
    gain: float       # mean over replicate seeds
    gain_best: float  # best fixed arm in hindsight
    bound: float

    @property
    def regret(self) -> float:
        return self.gain_best - self.gain


def evaluate_case(case: RegretCase, n_seeds: int = 50,
                  algos: Sequence[str] = ("drp", "exp3")) -> list[RegretResult]:
    rewards = make_assignment(case.kind, case.n_arms, case.n_trials, case.seed)
    g_best = float(rewards.sum(axis=0).max())
    results = []
    for algo in algos:
        gains = run_batch(rewards, case.gamma, n_seeds, case.seed, algo)
        bound_fn = regret_bound_drp if algo == "drp" else regret_bound_exp3
        results.append(RegretResult(case, algo, float(gains.mean()), g_best,
                                    bound_fn(case.n_arms, case.gamma, g_best)))
    return results


def default_cases(arm_counts: Sequence[int] = (2, 4, 8),
                  horizons: Sequence[int] = (200, 1000),
                  gammas: Sequence[float] = (0.1, 0.3, 0.6, 1.0),
                  seeds_per_point: int = 1) -> list[RegretCase]:
    """Grid of adversarial cases; the default yields 120 of them."""
    cases = []
    seed = 0
    for k in arm_counts:
        for s in horizons:
            for kind in ASSIGNMENT_KINDS:
                for gamma in gammas:
                    for _ in range(seeds_per_point):
                        cases.append(RegretCase(seed, k, s, gamma, kind))
                        seed += 1
    return cases


def results_to_csv(results: Sequence[RegretResult], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["seed", "K", "S", "gamma", "algo", "G_alg", "G_max",
                    "regret", "bound"])
        for r in results:
            w.writerow([r.case.seed, r.case.n_arms, r.case.n_trials,
                        r.case.gamma, r.algo, f"{r.gain:.6f}",
                        f"{r.gain_best:.6f}", f"{r.regret:.6f}",
                        f"{r.bound:.6f}"])
