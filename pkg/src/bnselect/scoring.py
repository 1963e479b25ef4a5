"""Scores (incomplete-data log-likelihood, Dirichlet MAP) and parameter entropy.

All logarithms are natural; entropies are in nats.  The MAP score omits the
Dirichlet normalising constant, so MAP scores are only comparable between
estimates scored under the same prior.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .inference import CompiledData, joint_table, parent_marginals
from .network import BnStructure, CptParams, IncompleteDataset, StructureError

UNWEIGHTED = "unweighted"
MODEL_WEIGHTED = "model"
WEIGHTINGS = (UNWEIGHTED, MODEL_WEIGHTED)


@dataclass(frozen=True)
class DirichletPrior:
    """Symmetric Dirichlet concentration per CPT cell, optionally per node."""

    alpha: float | tuple[float, ...] = 2.0

    def __post_init__(self):
        a = self.alpha
        if not np.isscalar(a):
            object.__setattr__(self, "alpha", tuple(float(x) for x in a))
        if np.any(np.asarray(self.alpha) < 1.0):
            # (N + alpha - 1) update has no maximiser on the simplex interior otherwise
            raise ValueError("MAP mode needs alpha >= 1")

    def for_node(self, j: int) -> float:
        return float(self.alpha) if np.isscalar(self.alpha) else self.alpha[j]


def _as_compiled(structure, data) -> CompiledData:
    return data if isinstance(data, CompiledData) else CompiledData(structure, data)


def log_likelihood(structure: BnStructure, params: CptParams, data: IncompleteDataset | CompiledData) -> float:
    """Sum of record log-marginals; raises ImpossibleEvidence on a zero-probability record."""
    return _as_compiled(structure, data).evaluate(params, counts=False)[0]


def log_prior(structure: BnStructure, params: CptParams, prior: DirichletPrior) -> float:
    """Sum over cells of (alpha - 1) log theta; -inf when a zero cell meets alpha > 1."""
    total = 0.0
    for j, t in enumerate(params.tables):
        a = prior.for_node(j)
        if a == 1.0:
            continue
        if (t <= 0.0).any():
            return -np.inf
        total += (a - 1.0) * float(np.log(t).sum())
    return total


def map_score(structure, params, data, prior: DirichletPrior = DirichletPrior()) -> float:
    """Log-likelihood plus unnormalised log Dirichlet density.

    A degenerate estimate (zero cell under alpha > 1) scores ``-inf``, which
    every selector ranks below any finite score.
    """
    penalty = log_prior(structure, params, prior)
    if penalty == -np.inf:
        return -np.inf
    return log_likelihood(structure, params, data) + penalty


def row_entropies(table: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(table > 0.0, table * np.log(table), 0.0)
    return -terms.sum(axis=1)


def param_entropy(structure: BnStructure, params: CptParams, weighting: str = UNWEIGHTED) -> float:
    """Sum of CPT-row entropies.

    ``"unweighted"`` adds every row's entropy; ``"model"`` weights each row
    by the probability of its parent configuration, which equals the joint
    entropy of the network.
    """
    if weighting == UNWEIGHTED:
        return float(sum(row_entropies(t).sum() for t in params.tables))
    if weighting == MODEL_WEIGHTED:
        return float(sum(parent_marginals(structure, params, j) @ row_entropies(t)
                         for j, t in enumerate(params.tables)))
    raise ValueError(f"unknown entropy weighting {weighting!r}")


def joint_entropy(structure: BnStructure, params: CptParams) -> float:
    p = joint_table(structure, params).flat()
    p = p[p > 0.0]
    return float(-(p * np.log(p)).sum())


def closed_form_map_update(counts, alpha: float = 2.0) -> np.ndarray:
    """M-step maximiser ``(N_x + alpha - 1) / (N + card (alpha - 1))``, row-wise.

    Accepts one row or a table of rows.  Rows with no counts and ``alpha == 1``
    come back uniform; see :func:`unsupported_rows`.
    """
    counts = np.asarray(counts, dtype=float)
    if (counts < 0).any():
        raise ValueError("expected counts must be nonnegative")
    if alpha < 1.0:
        raise ValueError("closed-form MAP update needs alpha >= 1")
    smoothed = counts + (alpha - 1.0)
    totals = smoothed.sum(axis=-1, keepdims=True)
    card = counts.shape[-1]
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(totals > 0.0, smoothed / totals, 1.0 / card)


def unsupported_rows(counts, alpha: float) -> np.ndarray:
    counts = np.asarray(counts, dtype=float)
    return (counts.sum(axis=-1) + counts.shape[-1] * (alpha - 1.0)) <= 0.0


def map_update(structure: BnStructure, expected: Sequence[np.ndarray], prior: DirichletPrior):
    """Full M-step; returns ``(params, number_of_unsupported_rows)``."""
    if len(expected) != structure.n_nodes:
        raise StructureError("one count table per node required")
    tables, flagged = [], 0
    for j, c in enumerate(expected):
        a = prior.for_node(j)
        tables.append(closed_form_map_update(c, a))
        flagged += int(unsupported_rows(c, a).sum())
    return CptParams(structure, tables, validate=False), flagged
