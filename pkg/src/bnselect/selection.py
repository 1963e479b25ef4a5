"""Choosing or combining multi-start EM candidates.

Three strategies: the top-scoring candidate, the most entropic candidate
within a relative score slack of the top, and a per-row weighted average of
all candidates' CPTs (local model averaging).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .em import CandidateEstimate, CandidateSet
from .network import CptParams, StructureError


@dataclass(frozen=True)
class ScoreSlack:
    """Keep candidates scoring at least ``best - epsilon * |best|``."""

    epsilon: float = 0.001

    def __post_init__(self):
        if not self.epsilon >= 0:
            raise ValueError("epsilon must be >= 0")

    def threshold(self, best_score: float) -> float:
        return best_score - self.epsilon * abs(best_score)


@dataclass(frozen=True)
class BmaWeights:
    weights: np.ndarray
    degenerate: bool = False

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or (w < 0).any() or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be nonnegative and sum to 1")
        object.__setattr__(self, "weights", w)


def _check(candidates: CandidateSet):
    if len(candidates) == 0:
        raise ValueError("empty candidate set")


def select_max_score(candidates: CandidateSet) -> CandidateEstimate:
    _check(candidates)
    return candidates[0]


def retained(candidates: CandidateSet, slack: ScoreSlack = ScoreSlack()) -> list[CandidateEstimate]:
    _check(candidates)
    t = slack.threshold(candidates.best_score)
    return [c for c in candidates if c.score >= t]


def select_max_entropy(candidates: CandidateSet, slack: ScoreSlack = ScoreSlack()) -> CandidateEstimate:
    """Most entropic candidate above the score threshold.

    Ties in entropy go to the higher score, then the lower run index.
    """
    keep = retained(candidates, slack)
    return min(keep, key=lambda c: (-c.entropy, -c.score, c.run_index))


def compute_bma_weights(candidates: CandidateSet, temperature: float = 1.0,
                        scheme: str = "softmax") -> BmaWeights:
    """Weights proportional to ``exp(score / temperature)``.

    Scores are log posteriors up to a constant, so this is the normalised
    posterior weight of each run.  ``scheme="rank"`` gives linear-in-rank
    weights instead (K for the best down to 1), for sensitivity checks.
    Non-finite scores get weight zero.
    """
    _check(candidates)
    if not temperature > 0:
        raise ValueError("temperature must be positive")
    scores = candidates.scores
    finite = np.isfinite(scores)
    if not finite.any():
        raise ValueError("no finite scores")
    if scheme == "softmax":
        shifted = np.where(finite, (scores - scores[finite].max()) / temperature, -np.inf)
        raw = np.exp(shifted)
    elif scheme == "rank":
        raw = np.where(finite, np.arange(len(scores), 0, -1, dtype=float), 0.0)
    else:
        raise ValueError(f"unknown weighting scheme {scheme!r}")
    w = raw / raw.sum()
    # the normalising division can leave sum(w) a few ulps off 1
    w[np.argmax(w)] += 1.0 - w.sum()
    degenerate = bool(np.count_nonzero(w) == 1 and finite.sum() > 1)
    return BmaWeights(w, degenerate)


def bma_combine(candidates: CandidateSet, weights: BmaWeights) -> CptParams:
    """Cell-wise convex combination of the candidates' CPTs."""
    _check(candidates)
    w = weights.weights
    if len(w) != len(candidates):
        raise ValueError("one weight per candidate required")
    base = candidates[0].params
    for c in candidates:
        if c.params.structure != base.structure:
            raise StructureError("candidates do not share one structure")
    tables = []
    for j, anchor in enumerate(base.tables):
        # anchored form returns the anchor exactly when all inputs coincide
        delta = sum(wi * (c.params.tables[j] - anchor) for wi, c in zip(w, candidates) if wi > 0.0)
        table = anchor + delta
        lo = np.min([c.params.tables[j] for c in candidates], axis=0)
        hi = np.max([c.params.tables[j] for c in candidates], axis=0)
        tables.append(np.clip(table, lo, hi))
    return CptParams(base.structure, tables)


def bma_estimate(candidates: CandidateSet, temperature: float = 1.0, scheme: str = "softmax"):
    """Convenience wrapper: ``(params, weights)``."""
    weights = compute_bma_weights(candidates, temperature, scheme)
    return bma_combine(candidates, weights), weights


def is_feasible(score: float, threshold: float, rel_tol: float = 0.0) -> bool:
    return math.isfinite(score) and score >= threshold - rel_tol * abs(threshold)
