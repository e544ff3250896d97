"""Distances between mixtures and MAP clustering."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .core import Dataset, MixtureDistribution, MixtureParams, ModelIndex, log_terms, space_size
from .errors import SpaceTooLarge

MAX_EXACT_POINTS = 10 ** 6
DEFAULT_MC_DRAWS = 10 ** 5
UNCLASSIFIABLE = -1


def _check_space(p: MixtureDistribution, q: MixtureDistribution, max_points: int) -> None:
    if not p.same_space(q):
        raise ValueError("distributions live on different sample spaces")
    size = space_size(p.case, p.n_states)
    if size > max_points:
        raise SpaceTooLarge(f"sample space has {size} points (limit {max_points})")


def hellinger_sq_exact(p: MixtureDistribution, q: MixtureDistribution, max_points: int = MAX_EXACT_POINTS) -> float:
    """Squared Hellinger distance ``sum_x (sqrt p(x) - sqrt q(x))**2`` by enumeration."""
    _check_space(p, q, max_points)
    return hellinger_sq_probs(p.space_probabilities(), q)


def hellinger_sq_probs(p_probs: np.ndarray, q: MixtureDistribution) -> float:
    """As :func:`hellinger_sq_exact` with the first distribution given on the space."""
    diff = np.sqrt(p_probs) - np.sqrt(q.space_probabilities())
    return float(np.dot(diff, diff))


@dataclass(frozen=True)
class HellingerEstimate:
    estimate: float
    raw: float
    se: float
    n_draws: int


def hellinger_sq_mc(p: MixtureDistribution, q: MixtureDistribution, n_draws: int = DEFAULT_MC_DRAWS, seed: int = 0) -> HellingerEstimate:
    """Monte Carlo estimate of ``2 - 2 E_p[sqrt(q(X) / p(X))]``.

    ``raw`` is the plain sample estimate; ``estimate`` clips it to ``[0, 2]``.
    """
    if not p.same_space(q):
        raise ValueError("distributions live on different sample spaces")
    X, _ = p.sample(n_draws, np.random.default_rng(seed))
    w = np.exp(0.5 * (q.log_prob(X) - p.log_prob(X)))
    raw = 2.0 - 2.0 * float(np.mean(w))
    se = 2.0 * float(np.std(w, ddof=1)) / math.sqrt(n_draws) if n_draws > 1 else math.inf
    return HellingerEstimate(min(2.0, max(0.0, raw)), raw, se, n_draws)


def hellinger_sq(p: MixtureDistribution, q: MixtureDistribution, n_draws: int = DEFAULT_MC_DRAWS, seed: int = 0) -> float:
    """Exact value when the space has at most a million points, Monte Carlo otherwise."""
    if space_size(p.case, p.n_states) <= MAX_EXACT_POINTS:
        return hellinger_sq_exact(p, q)
    return hellinger_sq_mc(p, q, n_draws, seed).estimate


def kl_exact(p: MixtureDistribution, q: MixtureDistribution, max_points: int = MAX_EXACT_POINTS) -> float:
    """``sum_x p(x) ln(p(x) / q(x))``, infinite when ``q`` misses mass of ``p``."""
    _check_space(p, q, max_points)
    pp = p.space_probabilities()
    qq = q.space_probabilities()
    support = pp > 0
    if np.any(qq[support] <= 0):
        return math.inf
    return float(np.sum(pp[support] * (np.log(pp[support]) - np.log(qq[support]))))


def map_classify(ds: Dataset, index: ModelIndex, params: MixtureParams) -> np.ndarray:
    """0-based MAP cluster of each row; ties go to the smallest cluster.

    Rows with zero density under every component get ``UNCLASSIFIABLE``.
    """
    params.check(index, ds.n_states)
    log_comp, _ = log_terms(ds.states, ds.case, index, params)
    labels = np.argmax(log_comp, axis=1)
    dead = ~np.isfinite(log_comp.max(axis=1))
    labels[dead] = UNCLASSIFIABLE
    return labels


def label_agreement(truth, predicted) -> float:
    """Fraction of rows on which two labelings agree under the best relabeling."""
    truth = np.asarray(truth)
    predicted = np.asarray(predicted)
    a = np.unique(truth, return_inverse=True)[1]
    b = np.unique(predicted, return_inverse=True)[1]
    table = np.zeros((a.max() + 1, b.max() + 1))
    np.add.at(table, (a, b), 1.0)
    rows, cols = linear_sum_assignment(-table)
    return float(table[rows, cols].sum() / len(truth))
