"""Multinomial-event Naive Bayes over access samples and correlation metrics.

The model holds, for every observed label q, a smoothed token distribution
over the node vocabulary (which node shows up in q's access windows), plus
an unsmoothed label prior.  Three pairwise correlation scores are derived
from it: the raw posterior, mutual information over the binarized 2x2
table, and the chi-square statistic over the same table.
"""

from __future__ import annotations

import csv
from collections import Counter
from enum import Enum
from math import log2
from typing import Iterable, Sequence

import numpy as np

from .samples import AccessSample


class TrainingError(ValueError):
    """Raised when a model cannot be trained (e.g. empty corpus)."""


class UnknownNodeError(LookupError):
    """Raised when scoring refers to a node outside the model's universe."""


class DegenerateModelError(ValueError):
    """Raised when a chi-square table has an empty expected cell."""


class CorrelationMetric(Enum):
    POSTERIOR = "P"
    MUTUAL_INFORMATION = "MI"
    CHI_SQUARE = "X"


class BayesModel:
    """Trained parameters; immutable after construction.

    `cond[q_idx, p_idx]` is the smoothed probability that a feature token in
    a window labeled q is node p; rows sum to one.  `prior[q_idx]` is the
    fraction of samples labeled q.
    """

    def __init__(self, labels: Sequence[int], vocab: Sequence[int],
                 cond: np.ndarray, prior: np.ndarray, n_samples: int):
        self.labels = tuple(labels)
        self.vocab = tuple(vocab)
        self._label_idx = {q: i for i, q in enumerate(self.labels)}
        self._vocab_idx = {p: i for i, p in enumerate(self.vocab)}
        self.cond = np.asarray(cond, dtype=float)
        self.prior = np.asarray(prior, dtype=float)
        self.n_samples = int(n_samples)
        self._marginal = self.prior @ self.cond  # P(p) over the vocab

    def phi(self, p: int, q: int) -> float:
        """Smoothed conditional probability of feature node p given label q."""
        return float(self.cond[self._require_label(q), self._require_vocab(p)])

    def prior_of(self, q: int) -> float:
        return float(self.prior[self._require_label(q)])

    def marginal_of(self, p: int) -> float:
        """P(p) = sum over labels q of phi(p|q) * prior(q)."""
        return float(self._marginal[self._require_vocab(p)])

    def phi_row(self, q: int) -> np.ndarray:
        return self.cond[self._require_label(q)]

    def has_label(self, q: int) -> bool:
        return q in self._label_idx

    def vocab_index(self, p: int) -> int:
        return self._require_vocab(p)

    def _require_label(self, q: int) -> int:
        try:
            return self._label_idx[q]
        except KeyError:
            raise UnknownNodeError(f"node {q} was never observed as a label") from None

    def _require_vocab(self, p: int) -> int:
        try:
            return self._vocab_idx[p]
        except KeyError:
            raise UnknownNodeError(f"node {p} is outside the model vocabulary") from None


def train(corpus: Iterable[AccessSample], vocab: Sequence[int]) -> BayesModel:
    """Maximum-likelihood fit with add-one smoothing over the full vocabulary.

    phi(p|q) = (tokens of p in windows labeled q + 1) / (tokens labeled q + |vocab|)
    prior(q) = samples labeled q / total samples (unsmoothed).
    """
    samples = list(corpus)
    if not samples:
        raise TrainingError("cannot train on an empty corpus")
    vocab = sorted(vocab)
    vidx = {p: i for i, p in enumerate(vocab)}

    token_counts: dict[int, Counter] = {}
    sample_counts: Counter = Counter()
    for s in samples:
        if s.label not in vidx:
            raise TrainingError(f"label {s.label} missing from vocabulary")
        sample_counts[s.label] += 1
        counter = token_counts.setdefault(s.label, Counter())
        for f in s.features:
            if f not in vidx:
                raise TrainingError(f"feature node {f} missing from vocabulary")
            counter[f] += 1

    labels = sorted(sample_counts)
    cond = np.ones((len(labels), len(vocab)), dtype=float)
    for i, q in enumerate(labels):
        for p, c in token_counts[q].items():
            cond[i, vidx[p]] += c
    cond /= cond.sum(axis=1, keepdims=True)
    prior = np.array([sample_counts[q] for q in labels], dtype=float)
    prior /= prior.sum()
    return BayesModel(labels, vocab, cond, prior, len(samples))


def posterior(model: BayesModel, x: int, y: int) -> float:
    """Probability that x shows up in y's access window, straight from the model."""
    return model.phi(x, y)


def _table(model: BayesModel, x: int, y: int):
    """2x2 joint table over presence/absence of x and label-equals-y.

    Joint cells are built from P(x,y) = phi(x|y) * prior(y) and the model
    marginals; tiny negative residues from float cancellation are clamped.
    """
    px = model.marginal_of(x)
    py = model.prior_of(y)
    pxy = model.phi(x, y) * py
    # the complement row is derived from the marginal, pairing the
    # subtractions so that degenerate priors cancel exactly
    cells = (
        (pxy, px * py),
        (py - pxy, (1.0 - px) * py),
        (px - pxy, px * (1.0 - py)),
        ((1.0 - px) - (py - pxy), (1.0 - px) * (1.0 - py)),
    )
    clamped = []
    for joint, indep in cells:
        if joint < -1e-9:
            raise DegenerateModelError(f"inconsistent joint mass {joint}")
        clamped.append((max(joint, 0.0), max(indep, 0.0)))
    return clamped


def mutual_information(model: BayesModel, x: int, y: int) -> float:
    """Base-2 mutual information of the binarized pair; zero-mass cells add 0."""
    mi = 0.0
    for joint, indep in _table(model, x, y):
        if indep == 0.0:
            # only reachable alongside zero joint mass (up to float dust)
            continue
        if joint > 0.0:
            mi += joint * log2(joint / indep)
    return mi


def chi_square(model: BayesModel, x: int, y: int) -> float:
    """Chi-square statistic of the binarized pair, scaled by the sample count."""
    total = 0.0
    for joint, indep in _table(model, x, y):
        if indep == 0.0:
            raise DegenerateModelError(
                f"expected cell for ({x}, {y}) is zero; model is degenerate")
        dev = joint - indep
        total += dev * dev / indep
    return model.n_samples * total


def score(model: BayesModel, metric: CorrelationMetric, x: int, y: int) -> float:
    if metric is CorrelationMetric.POSTERIOR:
        return posterior(model, x, y)
    if metric is CorrelationMetric.MUTUAL_INFORMATION:
        return mutual_information(model, x, y)
    if metric is CorrelationMetric.CHI_SQUARE:
        return chi_square(model, x, y)
    raise ValueError(f"unknown metric {metric!r}")


def model_to_csv(model: BayesModel, cond_path, prior_path) -> None:
    """Dump conditional rows and the prior for inspection."""
    with open(cond_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["q", "p", "phi_p_given_q"])
        for q in model.labels:
            row = model.phi_row(q)
            for j, p in enumerate(model.vocab):
                w.writerow([q, p, f"{row[j]:.12g}"])
    with open(prior_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["q", "phi_q"])
        for q in model.labels:
            w.writerow([q, f"{model.prior_of(q):.12g}"])
