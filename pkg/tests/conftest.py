import itertools

import numpy as np
import pytest

from bnselect.network import MISSING, BnStructure, CptParams


def random_structure(rng, max_nodes=4, max_card=5, max_parents=2):
    k = int(rng.integers(1, max_nodes + 1))
    cards = [int(rng.integers(2, max_card + 1)) for _ in range(k)]
    topo_parents = []
    for j in range(k):
        m = int(rng.integers(0, min(j, max_parents) + 1))
        topo_parents.append(list(rng.choice(j, size=m, replace=False)) if m else [])
    # relabel so declaration order is not the topological order
    perm = rng.permutation(k)
    names = [f"X{perm[j]}" for j in range(k)]
    order = sorted(range(k), key=lambda j: perm[j])
    where = {old: new for new, old in enumerate(order)}
    parents = [tuple(where[p] for p in topo_parents[old]) for old in order]
    return BnStructure(tuple(names[o] for o in order), tuple(cards[o] for o in order), tuple(parents))


def random_params(structure, rng, concentration=1.0):
    return CptParams(structure, [rng.dirichlet(np.full(c, concentration), size=r)
                                 for r, c in structure.table_shapes()])


def cpt_entry(structure, params, j, state):
    """theta_{x_j | pa_j} read by explicit loops, independent of the library's indexing."""
    row = 0
    for p in structure.parents[j]:
        row = row * structure.cards[p] + state[p]
    return params.tables[j][row][state[j]]


def brute_joint(structure, params):
    """{full state tuple: probability} by explicit enumeration."""
    out = {}
    for state in itertools.product(*(range(c) for c in structure.cards)):
        p = 1.0
        for j in range(structure.n_nodes):
            p *= cpt_entry(structure, params, j, state)
        out[state] = p
    return out


def consistent(state, record):
    return all(r == MISSING or r == s for s, r in zip(state, record))


def brute_marginal(structure, params, record, joint=None):
    joint = joint or brute_joint(structure, params)
    return sum(p for s, p in joint.items() if consistent(s, record))


def brute_counts(structure, params, data_values):
    joint = brute_joint(structure, params)
    tables = [np.zeros(s) for s in structure.table_shapes()]
    for record in data_values:
        z = brute_marginal(structure, params, record, joint)
        for s, p in joint.items():
            if not consistent(s, record):
                continue
            for j in range(structure.n_nodes):
                row = 0
                for q in structure.parents[j]:
                    row = row * structure.cards[q] + s[q]
                tables[j][row, s[j]] += p / z
    return tables


def random_incomplete_values(structure, rng, n, missing_rate=0.4):
    values = np.column_stack([rng.integers(0, c, size=n) for c in structure.cards])
    values[rng.random(values.shape) < missing_rate] = MISSING
    return values


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
