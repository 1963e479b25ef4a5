"""Joint-distribution divergences, relative medians and the Friedman rank test."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy import stats

from .inference import JOINT_CAP, joint_table
from .network import BnStructure, CptParams

METRICS = ("kl", "kl_reverse", "tv")


def divergence(p: np.ndarray, q: np.ndarray, kind: str = "kl") -> float:
    """KL(p || q), KL(q || p) or total variation between two probability vectors.

    KL is ``inf`` when the second argument is zero where the first is not.
    """
    p = np.asarray(p, dtype=float).ravel()
    q = np.asarray(q, dtype=float).ravel()
    if kind == "kl_reverse":
        p, q, kind = q, p, "kl"
    if kind == "tv":
        return 0.5 * float(np.abs(p - q).sum())
    if kind != "kl":
        raise ValueError(f"unknown divergence {kind!r}")
    support = p > 0.0
    if (q[support] <= 0.0).any():
        return float("inf")
    ps, qs = p[support], q[support]
    # identical tables must give exactly zero
    return max(0.0, float(np.sum(ps * (np.log(ps) - np.log(qs)))))


def joint_divergence(structure: BnStructure, true_params: CptParams, est_params: CptParams,
                     kind: str = "kl", cap: int = JOINT_CAP) -> float:
    p = joint_table(structure, true_params, cap).flat()
    q = joint_table(structure, est_params, cap).flat()
    return divergence(p, q, kind)


def lower_median(values) -> float:
    """Median; for an even count, the lower of the two middle values."""
    v = np.sort(np.asarray(values, dtype=float))
    if v.size == 0:
        raise ValueError("median of empty sequence")
    return float(v[(v.size - 1) // 2])


def relative_medians(values: Mapping[str, Sequence[float]], baseline: str) -> dict[str, float]:
    """Each method's median divided by the baseline's median.

    ``values`` maps method name to per-repetition metric values, aligned by
    repetition.
    """
    if baseline not in values:
        raise KeyError(f"baseline {baseline!r} missing")
    lengths = {len(v) for v in values.values()}
    if len(lengths) != 1:
        raise ValueError("methods must share one repetition set")
    base = lower_median(values[baseline])
    if not base > 0:
        raise ValueError("baseline median must be positive")
    return {m: (1.0 if m == baseline else lower_median(v) / base) for m, v in values.items()}


@dataclass(frozen=True)
class FriedmanResult:
    methods: tuple[str, ...]
    mean_ranks: tuple[float, ...]
    statistic: float
    dof: int
    pvalue: float
    degenerate: bool = False

    def ranking(self) -> list[str]:
        """Methods from best (lowest mean rank) to worst."""
        return [m for _, m in sorted(zip(self.mean_ranks, self.methods))]

    def as_dict(self) -> dict:
        return {"methods": list(self.methods), "mean_ranks": list(self.mean_ranks),
                "statistic": self.statistic, "dof": self.dof, "pvalue": self.pvalue,
                "degenerate": self.degenerate}


def friedman_test(values, methods: Sequence[str] | None = None, smaller_is_better: bool = True) -> FriedmanResult:
    """Friedman test on an ``N x k`` table (rows: repetitions, columns: methods).

    ``values`` may also be a mapping from method name to its column.  Ties
    receive average ranks and the statistic carries the usual tie correction.
    ``inf`` entries rank worst under ``smaller_is_better``.
    """
    if isinstance(values, Mapping):
        methods = tuple(values)
        table = np.column_stack([np.asarray(values[m], dtype=float) for m in methods])
    else:
        table = np.asarray(values, dtype=float)
        methods = tuple(methods) if methods is not None else tuple(str(i) for i in range(table.shape[1]))
    if table.ndim != 2:
        raise ValueError("expected a 2-D table")
    n, k = table.shape
    if k < 2 or n < 2:
        raise ValueError("need at least 2 methods and 2 repetitions")
    if np.isnan(table).any():
        raise ValueError("table has missing cells")
    ranks = stats.rankdata(table if smaller_is_better else -table, axis=1)
    mean_ranks = ranks.mean(axis=0)
    centred = mean_ranks - (k + 1) / 2.0
    statistic = 12.0 * n / (k * (k + 1)) * float(centred @ centred)
    ties = 0.0
    for row in ranks:
        _, t = np.unique(row, return_counts=True)
        ties += float((t ** 3 - t).sum())
    correction = 1.0 - ties / (n * k * (k * k - 1))
    if correction <= 1e-15:
        return FriedmanResult(methods, tuple(float(r) for r in mean_ranks), 0.0, k - 1, 1.0, True)
    statistic /= correction
    pvalue = float(stats.chi2.sf(statistic, k - 1))
    return FriedmanResult(methods, tuple(float(r) for r in mean_ranks), statistic, k - 1, pvalue)
