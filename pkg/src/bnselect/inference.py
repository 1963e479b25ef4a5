"""Exact inference by variable elimination.

Two paths are provided.  The record-level functions (:func:`record_posterior`,
:func:`record_log_marginal`) work for any network whose per-record missing
scope is small.  :class:`CompiledData` groups identical records into evidence
patterns and, when the joint state space is small, evaluates all of them at
once against the enumerated joint; it is what EM and the continuous solver
call in their inner loops.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .network import MISSING, BnStructure, CptParams, IncompleteDataset, StructureError

JOINT_CAP = 10**7
POSTERIOR_CAP = 10**5
# patterns x joint-states above this uses the per-pattern elimination path
COMPILED_CAP = 4 * 10**6


class ImpossibleEvidence(ValueError):
    """Observed cells of a record have probability zero under the parameters."""

    def __init__(self, record_index=None):
        self.record_index = record_index
        super().__init__(f"impossible evidence in record {record_index}")


class JointTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class Factor:
    """Nonnegative table over ``scope``; ``values.shape`` follows the scope cardinalities."""

    scope: tuple[int, ...]
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "scope", tuple(int(v) for v in self.scope))
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != len(self.scope):
            raise StructureError(f"factor values have {vals.ndim} axes for scope {self.scope}")
        if len(set(self.scope)) != len(self.scope):
            raise StructureError("repeated variable in factor scope")
        object.__setattr__(self, "values", vals)

    @property
    def cards(self) -> dict[int, int]:
        return dict(zip(self.scope, self.values.shape))

    def reduce(self, evidence: dict[int, int]) -> "Factor":
        """Slice observed variables out of the scope."""
        idx = tuple(evidence[v] if v in evidence else slice(None) for v in self.scope)
        return Factor(tuple(v for v in self.scope if v not in evidence), self.values[idx])

    def transpose(self, scope: Sequence[int]) -> "Factor":
        scope = tuple(scope)
        if set(scope) != set(self.scope):
            raise StructureError(f"cannot reorder scope {self.scope} as {scope}")
        return Factor(scope, np.transpose(self.values, [self.scope.index(v) for v in scope]))

    def flat(self) -> np.ndarray:
        """Values in most-significant-first mixed-radix order over the scope."""
        return self.values.ravel()


def _contract(factors: Sequence[Factor], out_scope: Sequence[int]) -> Factor:
    out_scope = tuple(out_scope)
    if not factors:
        return Factor((), np.array(1.0))
    args = []
    for f in factors:
        args += [f.values, list(f.scope)]
    return Factor(out_scope, np.einsum(*args, list(out_scope)))


def cpt_factor(structure: BnStructure, params: CptParams, j: int) -> Factor:
    shape = structure.parent_cards(j) + (structure.cards[j],)
    return Factor(structure.parents[j] + (j,), params.tables[j].reshape(shape))


def min_degree_order(factors: Iterable[Factor], keep: Iterable[int]) -> list[int]:
    """Greedy min-degree elimination order over the non-kept variables."""
    keep = set(keep)
    neighbours: dict[int, set[int]] = {}
    for f in factors:
        for v in f.scope:
            neighbours.setdefault(v, set()).update(u for u in f.scope if u != v)
    remaining = set(neighbours) - keep
    order = []
    while remaining:
        v = min(remaining, key=lambda u: (len(neighbours[u]), u))
        for a in neighbours[v]:
            neighbours[a].update(neighbours[v] - {a})
            neighbours[a].discard(v)
        remaining.discard(v)
        order.append(v)
    return order


def eliminate(factors: Sequence[Factor], keep: Sequence[int], order: Sequence[int] | None = None) -> Factor:
    """Sum the product of ``factors`` over every variable not in ``keep``.

    ``order`` defaults to :func:`min_degree_order`.  The result's scope is
    ``keep`` in the given order.
    """
    keep = tuple(keep)
    present = set().union(*(f.scope for f in factors)) if factors else set()
    if not set(keep) <= present:
        raise StructureError(f"kept variables {sorted(set(keep) - present)} appear in no factor")
    if order is None:
        order = min_degree_order(factors, keep)
    order = list(order)
    if set(order) & set(keep):
        raise StructureError("elimination order contains a kept variable")
    omitted = present - set(keep) - set(order)
    if omitted:
        raise StructureError(f"elimination order omits variables {sorted(omitted)}")
    pool = list(factors)
    for v in order:
        related = [f for f in pool if v in f.scope]
        if not related:
            continue
        pool = [f for f in pool if v not in f.scope]
        scope = sorted(set().union(*(f.scope for f in related)) - {v})
        pool.append(_contract(related, scope))
    return _contract(pool, keep)


@dataclass(frozen=True)
class RecordPosterior:
    """Joint posterior over a record's missing cells plus its marginal likelihood."""

    scope: tuple[int, ...]
    table: np.ndarray
    normalizer: float


def _evidence(structure: BnStructure, record) -> tuple[dict[int, int], list[int]]:
    record = np.asarray(record)
    if record.shape != (structure.n_nodes,):
        raise StructureError(f"record has shape {record.shape}, expected ({structure.n_nodes},)")
    evidence, missing = {}, []
    for j, v in enumerate(record):
        if v == MISSING:
            missing.append(j)
        elif 0 <= v < structure.cards[j]:
            evidence[j] = int(v)
        else:
            raise StructureError(f"state {v} invalid for node {structure.names[j]!r}")
    return evidence, missing


def _reduced_factors(structure, params, evidence):
    return [cpt_factor(structure, params, j).reduce(evidence) for j in range(structure.n_nodes)]


def record_posterior(structure: BnStructure, params: CptParams, record, record_index=None,
                     cap: int = POSTERIOR_CAP) -> RecordPosterior:
    evidence, missing = _evidence(structure, record)
    size = int(np.prod([structure.cards[j] for j in missing], dtype=np.int64))
    if size > cap:
        raise StructureError(f"missing scope of {size} joint states exceeds cap {cap}")
    joint = eliminate(_reduced_factors(structure, params, evidence), missing, order=[])
    z = float(joint.values.sum())
    if not z > 0.0:
        raise ImpossibleEvidence(record_index)
    return RecordPosterior(tuple(missing), joint.values / z, z)


def record_log_marginal(structure: BnStructure, params: CptParams, record, record_index=None) -> float:
    evidence, _ = _evidence(structure, record)
    z = float(eliminate(_reduced_factors(structure, params, evidence), ()).values)
    if not z > 0.0:
        raise ImpossibleEvidence(record_index)
    return float(np.log(z))


def joint_table(structure: BnStructure, params: CptParams, cap: int = JOINT_CAP) -> Factor:
    """Full joint over all nodes in declared order."""
    size = structure.joint_size()
    if size > cap:
        raise JointTooLarge(f"joint has {size} states (cap {cap}); use a sampled metric instead")
    factors = [cpt_factor(structure, params, j) for j in range(structure.n_nodes)]
    return _contract(factors, range(structure.n_nodes))


def parent_marginals(structure: BnStructure, params: CptParams, j: int) -> np.ndarray:
    """P(parent configuration of node j), indexed by CPT row."""
    if not structure.parents[j]:
        return np.ones(1)
    factors = [cpt_factor(structure, params, i) for i in range(structure.n_nodes)]
    return eliminate(factors, structure.parents[j]).flat()


def family_counts(structure: BnStructure, record, posterior: RecordPosterior,
                  out: list[np.ndarray], weight: float = 1.0) -> None:
    """Add the record's expected (parent row, state) counts for every node into ``out``."""
    record = np.asarray(record)
    for j in range(structure.n_nodes):
        fam = structure.parents[j] + (j,)
        hidden = [v for v in fam if record[v] == MISSING]
        drop = tuple(i for i, v in enumerate(posterior.scope) if v not in hidden)
        marg = posterior.table.sum(axis=drop) if drop else posterior.table
        kept = [v for v in posterior.scope if v in hidden]
        marg = np.transpose(marg, [kept.index(v) for v in hidden])
        block = np.zeros(structure.parent_cards(j) + (structure.cards[j],))
        block[tuple(slice(None) if v in hidden else int(record[v]) for v in fam)] = marg
        out[j] += weight * block.reshape(out[j].shape)


class CompiledData:
    """Dataset grouped into distinct evidence patterns for repeated evaluation.

    ``evaluate(params)`` returns the incomplete-data log-likelihood and the
    expected family counts in one pass.
    """

    def __init__(self, structure: BnStructure, data: IncompleteDataset, cap: int = COMPILED_CAP):
        if data.structure != structure:
            raise StructureError("dataset structure does not match")
        self.structure = structure
        self.n = data.n
        if data.n:
            patterns, first, counts = np.unique(data.values, axis=0, return_index=True, return_counts=True)
        else:
            patterns = np.zeros((0, structure.n_nodes), dtype=np.int64)
            first = counts = np.zeros(0, dtype=np.int64)
        self.patterns = patterns
        self.first_record = first
        self.weights = counts.astype(float)
        self.complete = not (patterns == MISSING).any()
        self._shapes = structure.table_shapes()
        size = structure.joint_size()
        self.enumerated = len(patterns) * size <= cap
        if self.enumerated:
            states = np.indices(structure.cards).reshape(structure.n_nodes, -1).T
            full = ~(patterns == MISSING).any(axis=1)
            self._full = np.flatnonzero(full)
            self._partial = np.flatnonzero(~full)
            # complete patterns hit exactly one joint state
            radix = np.cumprod((structure.cards + (1,))[::-1])[::-1][1:]
            self._full_state = patterns[self._full] @ radix if len(self._full) else np.zeros(0, dtype=np.int64)
            p = patterns[self._partial][:, None, :]
            self._mask = np.all((p == MISSING) | (p == states[None, :, :]), axis=2).astype(float)
            self._cells = []
            for j in range(structure.n_nodes):
                rows = np.zeros(size, dtype=np.int64)
                for q in structure.parents[j]:
                    rows = rows * structure.cards[q] + states[:, q]
                self._cells.append(rows * structure.cards[j] + states[:, j])

    def joint(self, params: CptParams) -> np.ndarray:
        """Flattened joint table (enumerated mode only)."""
        out = np.ones(self.structure.joint_size())
        for j, t in enumerate(params.tables):
            out *= t.ravel()[self._cells[j]]
        return out

    def evaluate(self, params: CptParams, counts: bool = True, on_impossible: str = "raise"):
        """Return ``(loglik, expected_counts, skipped_records)``.

        ``on_impossible="skip"`` drops patterns of zero probability from both
        the log-likelihood and the counts and reports how many records were
        dropped; ``"raise"`` raises :class:`ImpossibleEvidence`.
        """
        if self.enumerated:
            return self._evaluate_enumerated(params, counts, on_impossible)
        return self._evaluate_elimination(params, counts, on_impossible)

    def _evaluate_enumerated(self, params, counts, on_impossible):
        joint = self.joint(params)
        z = np.empty(len(self.patterns))
        z[self._full] = joint[self._full_state]
        probs = self._mask * joint[None, :]
        z[self._partial] = probs.sum(axis=1)
        w = self.weights
        skipped = 0
        bad = ~(z > 0.0)
        if bad.any():
            if on_impossible == "raise":
                raise ImpossibleEvidence(int(self.first_record[np.flatnonzero(bad)[0]]))
            skipped = int(w[bad].sum())
            w = np.where(bad, 0.0, w)
            z = np.where(bad, 1.0, z)
        ll = float(w @ np.log(z))
        if not counts:
            return ll, None, skipped
        wp = w[self._partial]
        expected = (wp / z[self._partial]) @ probs if len(wp) else np.zeros_like(joint)
        exact = np.bincount(self._full_state, weights=w[self._full], minlength=joint.size)
        tables = []
        for j, (r, c) in enumerate(self._shapes):
            t = np.bincount(self._cells[j], weights=exact, minlength=r * c)
            if len(wp):
                t = t + np.bincount(self._cells[j], weights=expected, minlength=r * c)
            tables.append(t.reshape(r, c))
        return ll, tables, skipped

    def _evaluate_elimination(self, params, counts, on_impossible):
        tables = [np.zeros(s) for s in self._shapes]
        ll, skipped = 0.0, 0
        for pattern, w, first in zip(self.patterns, self.weights, self.first_record):
            try:
                post = record_posterior(self.structure, params, pattern, record_index=int(first))
            except ImpossibleEvidence:
                if on_impossible == "raise":
                    raise
                skipped += int(w)
                continue
            ll += w * np.log(post.normalizer)
            if counts:
                family_counts(self.structure, pattern, post, tables, weight=w)
        return ll, (tables if counts else None), skipped
