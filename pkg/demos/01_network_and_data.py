"""Build the A -> B -> C network, draw data, and hide most of B.

Run:  python demos/01_network_and_data.py
"""

import numpy as np

from bnselect import (MissingnessSpec, chain, forward_sample, inject_missingness, joint_table,
                      record_posterior, sample_true_params)
from bnselect.network import MISSING

structure = chain(5, 3, 5)          # A and C have 5 states, B has 3
truth = sample_true_params(structure, seed=1)
print("structure:", structure)
print("free parameters:", structure.n_free_params())
print("P(B | A=0) =", np.round(truth.tables[1][0], 3))

data = forward_sample(structure, truth, n=300, seed=2)
data = inject_missingness(data, MissingnessSpec.mcar(structure, {"B": 0.85}), seed=3)
print(f"\n{data.n} records, {data.missing_count(1)} with B hidden")
print("first rows (-1 = missing):")
print(data.values[:5])

# What does the true model say about a hidden B given A and C?
record = data.values[np.flatnonzero(data.values[:, 1] == MISSING)[0]]
post = record_posterior(structure, truth, record)
print(f"\nrecord {record.tolist()}: P(B | A, C) = {np.round(post.table, 3)}")

joint = joint_table(structure, truth)
print("joint table has", joint.flat().size, "cells, sums to", round(float(joint.flat().sum()), 12))
