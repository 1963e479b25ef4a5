"""Discrete Bayesian network structures, CPT parameters and incomplete datasets.

Parent configurations are encoded as mixed-radix integers with the first
parent as the most significant digit.  Datasets are integer arrays of shape
``(n, n_nodes)`` where ``MISSING`` (-1) marks a hidden cell.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .seeding import make_rng

MISSING = -1


class StructureError(ValueError):
    """Invalid network structure, parameter table or record."""


def mixed_radix_index(parent_states: Sequence[int], parent_cards: Sequence[int]) -> int:
    """Encode parent states as a row index, most significant digit first.

    >>> mixed_radix_index([2, 1], [3, 4])
    9
    """
    if len(parent_states) != len(parent_cards):
        raise StructureError("parent_states and parent_cards differ in length")
    index = 0
    for state, card in zip(parent_states, parent_cards):
        if not 0 <= state < card:
            raise StructureError(f"state {state} out of range for cardinality {card}")
        index = index * card + int(state)
    return index


def mixed_radix_decode(index: int, parent_cards: Sequence[int]) -> tuple[int, ...]:
    """Inverse of :func:`mixed_radix_index`."""
    total = int(np.prod(parent_cards, dtype=np.int64))
    if not 0 <= index < max(total, 1):
        raise StructureError(f"row index {index} out of range [0, {total})")
    states = []
    for card in reversed(parent_cards):
        index, digit = divmod(index, card)
        states.append(digit)
    return tuple(reversed(states))


@dataclass(frozen=True)
class BnStructure:
    """DAG over discrete nodes.

    ``parents[j]`` lists parent indices of node ``j`` in the order used by
    the mixed-radix row encoding of its CPT.
    """

    names: tuple[str, ...]
    cards: tuple[int, ...]
    parents: tuple[tuple[int, ...], ...]
    order: tuple[int, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(str(n) for n in self.names))
        object.__setattr__(self, "cards", tuple(int(c) for c in self.cards))
        object.__setattr__(self, "parents", tuple(tuple(int(p) for p in ps) for ps in self.parents))
        k = len(self.names)
        if len(self.cards) != k or len(self.parents) != k:
            raise StructureError("names, cards and parents must have equal length")
        if len(set(self.names)) != k:
            raise StructureError("duplicate node names")
        for j, card in enumerate(self.cards):
            if card < 2:
                raise StructureError(f"node {self.names[j]!r} has cardinality {card} < 2")
        for j, ps in enumerate(self.parents):
            if len(set(ps)) != len(ps):
                raise StructureError(f"duplicate parent for node {self.names[j]!r}")
            for p in ps:
                if not 0 <= p < k:
                    raise StructureError(f"parent index {p} of node {self.names[j]!r} undeclared")
                if p == j:
                    raise StructureError(f"node {self.names[j]!r} is its own parent")
        object.__setattr__(self, "order", self._topological_order())

    def _topological_order(self) -> tuple[int, ...]:
        indegree = [len(ps) for ps in self.parents]
        children: list[list[int]] = [[] for _ in self.names]
        for j, ps in enumerate(self.parents):
            for p in ps:
                children[p].append(j)
        ready = [j for j, d in enumerate(indegree) if d == 0]
        order = []
        while ready:
            j = ready.pop(0)
            order.append(j)
            for c in children[j]:
                indegree[c] -= 1
                if indegree[c] == 0:
                    ready.append(c)
        if len(order) != len(self.names):
            raise StructureError("parent relation contains a cycle")
        return tuple(order)

    @classmethod
    def from_edges(cls, cards: dict[str, int], parents: dict[str, Sequence[str]] | None = None):
        """Build from ``{name: card}`` and ``{child: [parent names]}``."""
        names = list(cards)
        parents = parents or {}
        unknown = set(parents) - set(names)
        if unknown:
            raise StructureError(f"unknown nodes in parent map: {sorted(unknown)}")
        idx = {n: i for i, n in enumerate(names)}
        try:
            plist = [tuple(idx[p] for p in parents.get(n, ())) for n in names]
        except KeyError as exc:
            raise StructureError(f"undeclared parent {exc.args[0]!r}") from None
        return cls(tuple(names), tuple(cards[n] for n in names), tuple(plist))

    @property
    def n_nodes(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise StructureError(f"unknown node {name!r}") from None

    def parent_cards(self, j: int) -> tuple[int, ...]:
        return tuple(self.cards[p] for p in self.parents[j])

    def n_rows(self, j: int) -> int:
        return int(np.prod(self.parent_cards(j), dtype=np.int64))

    def table_shapes(self) -> list[tuple[int, int]]:
        return [(self.n_rows(j), self.cards[j]) for j in range(self.n_nodes)]

    def n_free_params(self) -> int:
        return sum(r * (c - 1) for r, c in self.table_shapes())

    def joint_size(self) -> int:
        return int(np.prod(self.cards, dtype=np.int64))


def chain(*cards: int, names: Sequence[str] | None = None) -> BnStructure:
    """Chain network ``X0 -> X1 -> ...``; ``chain(5, 3, 5)`` is BN3 5-3-5."""
    names = tuple(names) if names else tuple("ABCDEFGHIJKLMNOPQRSTUVWXYZ"[: len(cards)])
    parents = tuple(() if j == 0 else (j - 1,) for j in range(len(cards)))
    return BnStructure(names, tuple(cards), parents)


class CptParams:
    """One CPT per node; row ``r`` of ``tables[j]`` is P(X_j | parent config r).

    Tables are copied and made read-only on construction.
    """

    ROW_TOL = 1e-9

    def __init__(self, structure: BnStructure, tables: Sequence[np.ndarray], validate: bool = True):
        self.structure = structure
        arrays = []
        for t in tables:
            a = np.array(t, dtype=float)
            a.setflags(write=False)
            arrays.append(a)
        self.tables: tuple[np.ndarray, ...] = tuple(arrays)
        if validate:
            self.validate()

    def validate(self) -> None:
        shapes = self.structure.table_shapes()
        if len(self.tables) != len(shapes):
            raise StructureError(f"expected {len(shapes)} tables, got {len(self.tables)}")
        for j, (t, shape) in enumerate(zip(self.tables, shapes)):
            name = self.structure.names[j]
            if t.shape != shape:
                raise StructureError(f"table for {name!r} has shape {t.shape}, expected {shape}")
            if not np.all(np.isfinite(t)) or t.min() < 0.0 or t.max() > 1.0:
                raise StructureError(f"table for {name!r} has entries outside [0, 1]")
            if np.max(np.abs(t.sum(axis=1) - 1.0)) > self.ROW_TOL:
                raise StructureError(f"rows of table for {name!r} do not sum to 1")

    def flat(self) -> np.ndarray:
        return np.concatenate([t.ravel() for t in self.tables])

    @classmethod
    def from_flat(cls, structure: BnStructure, vector: np.ndarray, validate: bool = True) -> "CptParams":
        tables, start = [], 0
        for shape in structure.table_shapes():
            size = shape[0] * shape[1]
            tables.append(np.asarray(vector[start:start + size]).reshape(shape))
            start += size
        return cls(structure, tables, validate=validate)

    @classmethod
    def uniform(cls, structure: BnStructure) -> "CptParams":
        return cls(structure, [np.full(s, 1.0 / s[1]) for s in structure.table_shapes()])

    def allclose(self, other: "CptParams", atol: float = 1e-9) -> bool:
        return all(a.shape == b.shape and np.allclose(a, b, rtol=0.0, atol=atol)
                   for a, b in zip(self.tables, other.tables))

    def max_abs_diff(self, other: "CptParams") -> float:
        return max(float(np.max(np.abs(a - b))) for a, b in zip(self.tables, other.tables))

    def __eq__(self, other):
        if not isinstance(other, CptParams):
            return NotImplemented
        return self.structure == other.structure and all(
            np.array_equal(a, b) for a, b in zip(self.tables, other.tables))

    def __repr__(self):
        return f"CptParams({', '.join(f'{n}{t.shape}' for n, t in zip(self.structure.names, self.tables))})"


class IncompleteDataset:
    """Records of per-node state indices, ``MISSING`` for hidden cells."""

    def __init__(self, structure: BnStructure, values):
        self.structure = structure
        v = np.array(values, dtype=np.int64).reshape(-1, structure.n_nodes)
        if v.size:
            cards = np.asarray(structure.cards)
            bad = (v >= cards) | (v < MISSING)
            if bad.any():
                r, c = np.argwhere(bad)[0]
                raise StructureError(f"record {r}: state {v[r, c]} invalid for node {structure.names[c]!r}")
        v.setflags(write=False)
        self.values = v

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def __len__(self):
        return self.n

    def missing_mask(self) -> np.ndarray:
        return self.values == MISSING

    def missing_count(self, node: int | None = None) -> int:
        mask = self.missing_mask()
        return int(mask.sum() if node is None else mask[:, node].sum())

    def is_complete(self) -> bool:
        return not self.missing_mask().any()

    def __eq__(self, other):
        if not isinstance(other, IncompleteDataset):
            return NotImplemented
        return self.structure == other.structure and np.array_equal(self.values, other.values)


@dataclass(frozen=True)
class MissingnessSpec:
    """MCAR per-node rates, or MAR rates indexed by an always-observed node's state.

    For MAR, ``rates`` still selects which nodes are masked (nonzero entries);
    the probability used for a record is ``rate_table[state of conditioning node]``.
    With ``exact_count`` (MCAR only) each node loses exactly ``ceil(rate * n)``
    uniformly chosen cells instead of an independent coin flip per cell.
    """

    rates: tuple[float, ...]
    mechanism: str = "MCAR"
    conditioning_node: int | None = None
    rate_table: tuple[float, ...] | None = None
    exact_count: bool = False

    def __post_init__(self):
        object.__setattr__(self, "rates", tuple(float(r) for r in self.rates))
        if self.mechanism not in ("MCAR", "MAR"):
            raise StructureError(f"unknown missingness mechanism {self.mechanism!r}")
        if any(not 0.0 <= r <= 1.0 for r in self.rates):
            raise StructureError("missing rates must lie in [0, 1]")
        if self.exact_count and self.mechanism != "MCAR":
            raise StructureError("exact-count masking is only defined for MCAR")
        if self.mechanism == "MAR":
            if self.conditioning_node is None or self.rate_table is None:
                raise StructureError("MAR needs conditioning_node and rate_table")
            object.__setattr__(self, "rate_table", tuple(float(r) for r in self.rate_table))
            if any(not 0.0 <= r <= 1.0 for r in self.rate_table):
                raise StructureError("MAR rate table entries must lie in [0, 1]")
            if self.rates[self.conditioning_node] != 0.0:
                raise StructureError("MAR conditioning node must have missing rate 0")

    @classmethod
    def mcar(cls, structure: BnStructure, rates: dict[str, float], exact_count: bool = False) -> "MissingnessSpec":
        r = [0.0] * structure.n_nodes
        for name, rate in rates.items():
            r[structure.index(name)] = rate
        return cls(tuple(r), exact_count=exact_count)

    def check(self, structure: BnStructure) -> None:
        if len(self.rates) != structure.n_nodes:
            raise StructureError("one missing rate per node required")
        if self.mechanism == "MAR":
            if not 0 <= self.conditioning_node < structure.n_nodes:
                raise StructureError("MAR conditioning node out of range")
            if len(self.rate_table) != structure.cards[self.conditioning_node]:
                raise StructureError("MAR rate table needs one rate per conditioning state")


def sample_true_params(structure: BnStructure, seed, concentration: float = 1.0) -> CptParams:
    """Draw every CPT row independently from a symmetric Dirichlet."""
    rng = make_rng(seed)
    return CptParams(structure, [rng.dirichlet(np.full(c, concentration), size=r)
                                 for r, c in structure.table_shapes()])


def forward_sample(structure: BnStructure, params: CptParams, n: int, seed) -> IncompleteDataset:
    """Ancestral sampling of ``n`` fully observed records."""
    rng = make_rng(seed)
    values = np.zeros((n, structure.n_nodes), dtype=np.int64)
    for j in structure.order:
        rows = np.zeros(n, dtype=np.int64)
        for p in structure.parents[j]:
            rows = rows * structure.cards[p] + values[:, p]
        cdf = np.cumsum(params.tables[j], axis=1)[rows]
        u = rng.random(n)
        # inverse CDF; clip guards cdf[-1] < 1 by round-off
        values[:, j] = np.minimum((u[:, None] >= cdf).sum(axis=1), structure.cards[j] - 1)
    return IncompleteDataset(structure, values)


def inject_missingness(data: IncompleteDataset, spec: MissingnessSpec, seed) -> IncompleteDataset:
    """Hide cells per the mechanism; already-missing cells stay missing."""
    structure = data.structure
    spec.check(structure)
    rng = make_rng(seed)
    values = data.values.copy()
    n, k = values.shape
    if spec.exact_count:
        for j, rate in enumerate(spec.rates):
            m = min(n, math.ceil(rate * n - 1e-9))
            values[rng.permutation(n)[:m], j] = MISSING
        return IncompleteDataset(structure, values)
    u = rng.random((n, k))
    if spec.mechanism == "MCAR":
        prob = np.broadcast_to(np.asarray(spec.rates), (n, k))
    else:
        cond = values[:, spec.conditioning_node]
        if (cond == MISSING).any():
            r = int(np.flatnonzero(cond == MISSING)[0])
            raise StructureError(f"record {r}: MAR conditioning cell is missing")
        per_record = np.asarray(spec.rate_table)[cond] if n else np.zeros(0)
        targeted = np.asarray(spec.rates) > 0.0
        prob = np.where(targeted[None, :], per_record[:, None], 0.0)
    values[u < prob] = MISSING
    return IncompleteDataset(structure, values)


# -- file formats ------------------------------------------------------------

def write_dataset_csv(data: IncompleteDataset, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(data.structure.names)
        for row in data.values:
            w.writerow(["?" if v == MISSING else int(v) for v in row])


def read_dataset_csv(structure: BnStructure, path) -> IncompleteDataset:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != structure.names:
            raise StructureError(f"CSV header {header} does not match nodes {list(structure.names)}")
        rows = [[MISSING if cell.strip() == "?" else int(cell) for cell in row] for row in reader if row]
    return IncompleteDataset(structure, np.array(rows, dtype=np.int64).reshape(-1, structure.n_nodes))


def network_to_dict(structure: BnStructure, params: CptParams | None = None, **meta) -> dict:
    doc = {"nodes": [{"name": n, "cardinality": c, "parents": [structure.names[p] for p in ps]}
                     for n, c, ps in zip(structure.names, structure.cards, structure.parents)]}
    if params is not None:
        doc["cpts"] = {n: t.tolist() for n, t in zip(structure.names, params.tables)}
    doc.update(meta)
    return doc


def network_from_dict(doc: dict) -> tuple[BnStructure, CptParams | None]:
    try:
        nodes = doc["nodes"]
        cards = {nd["name"]: int(nd["cardinality"]) for nd in nodes}
        parents = {nd["name"]: list(nd.get("parents", [])) for nd in nodes}
    except (KeyError, TypeError) as exc:
        raise StructureError(f"malformed network document: {exc}") from None
    structure = BnStructure.from_edges(cards, parents)
    params = None
    if "cpts" in doc:
        missing = set(structure.names) - set(doc["cpts"])
        if missing:
            raise StructureError(f"cpts missing for nodes {sorted(missing)}")
        params = CptParams(structure, [np.asarray(doc["cpts"][n], dtype=float).reshape(s)
                                       for n, s in zip(structure.names, structure.table_shapes())])
    return structure, params


def write_network(path, structure: BnStructure, params: CptParams | None = None, **meta) -> None:
    with open(path, "w") as fh:
        json.dump(network_to_dict(structure, params, **meta), fh, indent=2)


def read_network(path) -> tuple[BnStructure, CptParams | None]:
    with open(path) as fh:
        return network_from_dict(json.load(fh))
