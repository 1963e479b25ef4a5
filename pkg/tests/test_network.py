import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from bnselect.network import (MISSING, BnStructure, CptParams, IncompleteDataset, MissingnessSpec,
                              StructureError, chain, forward_sample, inject_missingness,
                              mixed_radix_decode, mixed_radix_index, read_dataset_csv, read_network,
                              sample_true_params, write_dataset_csv, write_network)

from conftest import brute_joint, random_params, random_structure


class TestMixedRadix:
    def test_examples(self):
        assert mixed_radix_index([], []) == 0
        assert mixed_radix_index([1], [3]) == 1
        assert mixed_radix_index([2, 1], [3, 4]) == 9

    def test_bijective_on_small_grid(self):
        codes = [mixed_radix_index(s, [3, 4]) for s in itertools.product(range(3), range(4))]
        assert sorted(codes) == list(range(12))

    @given(st.lists(st.integers(2, 5), min_size=1, max_size=4))
    def test_bijection_and_inverse(self, cards):
        seen = set()
        for states in itertools.product(*(range(c) for c in cards)):
            code = mixed_radix_index(states, cards)
            assert mixed_radix_decode(code, cards) == states
            seen.add(code)
        assert seen == set(range(int(np.prod(cards))))

    def test_out_of_range(self):
        with pytest.raises(StructureError):
            mixed_radix_index([3], [3])
        with pytest.raises(StructureError):
            mixed_radix_index([0, 1], [2])


class TestStructure:
    def test_chain(self):
        s = chain(5, 3, 5)
        assert s.names == ("A", "B", "C")
        assert s.table_shapes() == [(1, 5), (5, 3), (3, 5)]
        assert s.n_free_params() == 4 + 5 * 2 + 3 * 4

    @pytest.mark.parametrize("names,cards,parents", [
        (("A", "B"), (2, 2), ((1,), (0,))),      # cycle
        (("A",), (1,), ((),)),                    # cardinality < 2
        (("A", "B"), (2, 2), ((), (5,))),        # undeclared parent
        (("A", "B"), (2, 2), ((), (0, 0))),      # duplicate parent
        (("A", "A"), (2, 2), ((), ())),          # duplicate name
    ])
    def test_invalid(self, names, cards, parents):
        with pytest.raises(StructureError):
            BnStructure(names, cards, parents)

    def test_topological_order_respects_parents(self, rng):
        for _ in range(20):
            s = random_structure(rng)
            pos = {j: i for i, j in enumerate(s.order)}
            assert all(pos[p] < pos[j] for j in range(s.n_nodes) for p in s.parents[j])


class TestParams:
    def test_rejects_bad_rows(self):
        s = chain(2, 2)
        with pytest.raises(StructureError):
            CptParams(s, [np.array([[0.5, 0.6]]), np.full((2, 2), 0.5)])
        with pytest.raises(StructureError):
            CptParams(s, [np.array([[0.5, 0.5]]), np.full((3, 2), 0.5)])

    def test_sample_true_params_simplex_and_determinism(self):
        s = chain(2)
        p = sample_true_params(s, 3)
        assert p.tables[0].shape == (1, 2)
        assert abs(p.tables[0].sum() - 1.0) < 1e-12
        assert sample_true_params(chain(5, 3, 5), 11) == sample_true_params(chain(5, 3, 5), 11)

    def test_dirichlet_mean(self):
        # 10^5 binary rows: Dirichlet(1,1) mean is 0.5, MC sd ~ 0.0009
        s = BnStructure(("R", "X"), (100000, 2), ((), (0,)))
        p = sample_true_params(s, 5)
        assert abs(p.tables[1][:, 0].mean() - 0.5) < 0.01

    def test_tables_read_only(self):
        p = CptParams.uniform(chain(2, 2))
        with pytest.raises(ValueError):
            p.tables[0][0, 0] = 1.0


class TestSampling:
    def test_empty(self):
        s = chain(2, 2)
        d = forward_sample(s, CptParams.uniform(s), 0, 1)
        assert d.n == 0

    def test_deterministic_cpts(self):
        s = chain(3, 2, 2)
        p = CptParams(s, [np.array([[0, 0, 1.0]]), np.array([[1.0, 0], [1.0, 0], [0, 1.0]]),
                          np.array([[0, 1.0], [1.0, 0]])])
        d = forward_sample(s, p, 50, 4)
        assert (d.values == [2, 1, 0]).all()

    def test_binary_root_frequency(self):
        s = chain(2)
        p = CptParams(s, [np.array([[0.8, 0.2]])])
        d = forward_sample(s, p, 100000, 9)
        assert abs((d.values[:, 0] == 0).mean() - 0.8) < 0.01

    def test_seed_determinism(self):
        s = chain(5, 3, 5)
        p = sample_true_params(s, 1)
        assert forward_sample(s, p, 100, 2) == forward_sample(s, p, 100, 2)

    def test_joint_frequencies_converge(self):
        s = chain(5, 3, 5)
        p = sample_true_params(s, 7)
        d = forward_sample(s, p, 100000, 8)
        joint = brute_joint(s, p)
        counts = {}
        for row in map(tuple, d.values):
            counts[row] = counts.get(row, 0) + 1
        tv = 0.5 * sum(abs(counts.get(k, 0) / d.n - v) for k, v in joint.items())
        assert tv <= 0.02


class TestMissingness:
    def setup_method(self):
        self.s = chain(5, 3, 5)
        self.data = forward_sample(self.s, sample_true_params(self.s, 1), 500, 2)

    def test_rate_zero_identity(self):
        out = inject_missingness(self.data, MissingnessSpec((0.0, 0.0, 0.0)), 3)
        assert out == self.data

    def test_rate_one_hides_all(self):
        out = inject_missingness(self.data, MissingnessSpec.mcar(self.s, {"B": 1.0}), 3)
        assert (out.values[:, 1] == MISSING).all()
        assert (out.values[:, [0, 2]] == self.data.values[:, [0, 2]]).all()

    def test_rate_085_count(self):
        # binomial(500, 0.85): sd ~ 8, band of 30 is > 3 sd
        out = inject_missingness(self.data, MissingnessSpec.mcar(self.s, {"B": 0.85}), 3)
        assert abs(out.missing_count(1) - 425) <= 30
        assert out.missing_count() == out.missing_count(1)

    def test_exact_count(self):
        spec = MissingnessSpec.mcar(self.s, {"B": 0.85}, exact_count=True)
        for seed in range(5):
            assert inject_missingness(self.data, spec, seed).missing_count(1) == 425
        assert inject_missingness(self.data, MissingnessSpec.mcar(self.s, {"B": 0.001}, exact_count=True),
                                  0).missing_count(1) == 1
        with pytest.raises(StructureError):
            MissingnessSpec((0.0, 0.5, 0.0), "MAR", 0, (0.5,) * 5, exact_count=True)

    def test_never_unhides_and_idempotent(self, rng):
        spec = MissingnessSpec.mcar(self.s, {"B": 0.5, "C": 0.3})
        once = inject_missingness(self.data, spec, 4)
        twice = inject_missingness(once, spec, 5)
        assert (twice.missing_mask() >= once.missing_mask()).all()
        observed = ~twice.missing_mask()
        assert (twice.values[observed] == self.data.values[observed]).all()

    def test_mar(self):
        spec = MissingnessSpec((0.0, 1.0, 0.0), "MAR", conditioning_node=0, rate_table=(1.0, 0, 0, 0, 0))
        out = inject_missingness(self.data, spec, 6)
        hidden = out.values[:, 1] == MISSING
        assert (hidden == (self.data.values[:, 0] == 0)).all()

    def test_mar_conditioning_missing_is_error(self):
        spec = MissingnessSpec((0.0, 1.0, 0.0), "MAR", conditioning_node=0, rate_table=(0.5,) * 5)
        hidden = inject_missingness(self.data, MissingnessSpec.mcar(self.s, {"A": 0.5}), 1)
        with pytest.raises(StructureError):
            inject_missingness(hidden, spec, 2)

    def test_mar_spec_validation(self):
        with pytest.raises(StructureError):
            MissingnessSpec((0.5, 1.0, 0.0), "MAR", conditioning_node=0, rate_table=(0.5,) * 5)
        with pytest.raises(StructureError):
            MissingnessSpec((1.5, 0.0))


class TestFiles:
    def test_dataset_round_trip(self, tmp_path, rng):
        s = chain(5, 3, 5)
        d = inject_missingness(forward_sample(s, sample_true_params(s, 1), 50, 2),
                               MissingnessSpec.mcar(s, {"B": 0.5}), 3)
        path = tmp_path / "data.csv"
        write_dataset_csv(d, path)
        text = path.read_text().splitlines()
        assert text[0] == "A,B,C"
        assert "?" in path.read_text()
        assert read_dataset_csv(s, path) == d

    def test_network_round_trip(self, tmp_path, rng):
        for _ in range(10):
            s = random_structure(rng)
            p = random_params(s, rng)
            write_network(tmp_path / "net.json", s, p)
            s2, p2 = read_network(tmp_path / "net.json")
            assert s2 == s
            for a, b in zip(p.tables, p2.tables):
                np.testing.assert_array_equal(a, b)

    def test_bad_header(self, tmp_path):
        (tmp_path / "d.csv").write_text("A,C,B\n0,1,?\n")
        with pytest.raises(StructureError):
            read_dataset_csv(chain(2, 2, 2), tmp_path / "d.csv")

    def test_invalid_state(self):
        with pytest.raises(StructureError):
            IncompleteDataset(chain(2, 2), [[0, 2]])
