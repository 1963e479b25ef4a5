import numpy as np
import pytest

from bnselect.em import CandidateEstimate, CandidateSet, EmConfig, e_step, em_run, multi_start_em
from bnselect.inference import CompiledData
from bnselect.network import (MISSING, CptParams, IncompleteDataset, MissingnessSpec, chain, forward_sample,
                              inject_missingness, sample_true_params)
from bnselect.scoring import DirichletPrior, closed_form_map_update, map_score

from conftest import brute_counts, random_params


def bn3_data(cards=(5, 3, 5), n=300, seed=0, rate=0.85):
    s = chain(*cards)
    truth = sample_true_params(s, seed)
    d = forward_sample(s, truth, n, seed + 1)
    return s, inject_missingness(d, MissingnessSpec.mcar(s, {"B": rate}), seed + 2)


def exact_counts(s, values):
    tables = [np.zeros(shape) for shape in s.table_shapes()]
    for rec in values:
        for j in range(s.n_nodes):
            row = 0
            for p in s.parents[j]:
                row = row * s.cards[p] + rec[p]
            tables[j][row, rec[j]] += 1
    return tables


class TestEStep:
    def test_complete_data_contingency(self, rng):
        s, d = bn3_data(rate=0.0)
        counts, skipped = e_step(s, random_params(s, rng), d)
        assert skipped == 0
        for got, want in zip(counts, exact_counts(s, d.values)):
            np.testing.assert_array_equal(got, want)

    def test_bayes_example_record(self):
        s = chain(2, 2, 2)
        p = CptParams(s, [np.array([[0.5, 0.5]]), np.array([[0.5, 0.5], [0.3, 0.7]]),
                          np.array([[0.9, 0.1], [0.1, 0.9]])])
        counts, _ = e_step(s, p, IncompleteDataset(s, [[0, MISSING, 0]]))
        np.testing.assert_allclose(counts[1], [[0.9, 0.1], [0, 0]], atol=1e-15)
        np.testing.assert_allclose(counts[2], [[0.9, 0], [0.1, 0]], atol=1e-15)

    def test_matches_enumeration(self, rng):
        s, d = bn3_data(n=80)
        for _ in range(5):
            p = random_params(s, rng)
            for got, want in zip(e_step(s, p, d)[0], brute_counts(s, p, d.values)):
                np.testing.assert_allclose(got, want, atol=1e-10, rtol=0)

    def test_mass_per_node(self, rng):
        s, d = bn3_data()
        counts, _ = e_step(s, random_params(s, rng), d)
        for t in counts:
            assert abs(t.sum() - d.n) <= 1e-6 * d.n


class TestEmRun:
    def test_complete_data_one_iteration(self, rng):
        s, d = bn3_data(rate=0.0)
        expected = [closed_form_map_update(c, 2.0) for c in exact_counts(s, d.values)]
        config = EmConfig()
        for _ in range(3):
            c = em_run(s, d, config, random_params(s, rng))
            assert c.iterations == 1 and c.converged
            for got, want in zip(c.params.tables, expected):
                np.testing.assert_allclose(got, want, atol=1e-12, rtol=0)

    def test_fixed_point_start(self, rng):
        s, d = bn3_data()
        first = em_run(s, d, EmConfig(tol=1e-300, max_iters=5000), random_params(s, rng))
        again = em_run(s, d, EmConfig(), first.params)
        assert again.iterations == 1
        # the score is flat to machine precision here, so parameters are pinned to ~sqrt(eps)
        assert again.params.max_abs_diff(first.params) < 1e-7

    def test_monotone_score(self, rng):
        s, d = bn3_data()
        cd = CompiledData(s, d)
        for _ in range(2):
            c = em_run(s, cd, EmConfig(), random_params(s, rng))
            assert np.all(np.diff(c.history) >= -1e-9)
            assert c.score == pytest.approx(map_score(s, c.params, d, DirichletPrior(2.0)), abs=1e-9)

    def test_trace_csv(self, tmp_path, rng):
        s, d = bn3_data(n=50)
        c = em_run(s, d, EmConfig(max_iters=5), random_params(s, rng), trace_path=tmp_path / "t.csv")
        lines = (tmp_path / "t.csv").read_text().splitlines()
        assert lines[0] == "iteration,score,entropy"
        assert len(lines) == c.iterations + 2

    def test_unsupported_row_flag(self):
        # parent state 1 of A never occurs: B|A=1 row has no counts under alpha = 1
        s = chain(2, 2)
        d = IncompleteDataset(s, [[0, 0], [0, 1]])
        c = em_run(s, d, EmConfig(prior=DirichletPrior(1.0)), CptParams.uniform(s))
        assert c.diagnostics["unsupported_rows"] == 1
        np.testing.assert_allclose(c.params.tables[1][1], [0.5, 0.5])

    def test_impossible_evidence_skipped(self):
        s = chain(2, 2)
        init = CptParams(s, [np.array([[1.0, 0.0]]), np.array([[0.5, 0.5], [0.5, 0.5]])])
        d = IncompleteDataset(s, [[0, MISSING], [1, 0]])
        c = em_run(s, d, EmConfig(prior=DirichletPrior(1.0)), init)
        assert c.diagnostics["impossible_evidence_skipped"] == 1


class TestMultiStart:
    def test_single_start(self):
        s, d = bn3_data(n=60)
        cs = multi_start_em(s, d, EmConfig(num_starts=1, seed=3))
        assert len(cs) == 1 and cs.best_score == cs[0].score

    def test_complete_data_all_equal(self):
        s, d = bn3_data(rate=0.0)
        cs = multi_start_em(s, d, EmConfig(num_starts=5, seed=1))
        for c in cs:
            assert c.params.max_abs_diff(cs[0].params) <= 1e-9
            assert c.score == cs[0].score

    def test_sorted_and_reproducible(self):
        s, d = bn3_data(cards=(8, 4, 8), n=500)
        config = EmConfig(seed=12)
        cs = multi_start_em(s, d, config)
        assert len(cs) == 20
        keys = [(-c.score, c.run_index) for c in cs]
        assert keys == sorted(keys)
        assert cs.best_score - cs.scores.min() >= 0
        digests = {multi_start_em(s, d, EmConfig(seed=12, workers=w)).digest() for w in (1, 2, 8)}
        assert digests == {cs.digest()}

    def test_seed_changes_inits(self):
        s, d = bn3_data(n=100)
        a = multi_start_em(s, d, EmConfig(num_starts=3, seed=1))
        b = multi_start_em(s, d, EmConfig(num_starts=3, seed=2))
        assert a.digest() != b.digest()

    def test_provided_inits(self, rng):
        s, d = bn3_data(n=100)
        inits = tuple(random_params(s, rng) for _ in range(2))
        cs = multi_start_em(s, d, EmConfig(num_starts=2, init_params=inits))
        direct = em_run(s, d, EmConfig(), inits[1], run_index=1)
        assert any(c.params == direct.params for c in cs)

    def test_tie_break(self):
        s = chain(2)
        p = CptParams.uniform(s)
        cs = CandidateSet((CandidateEstimate(p, -10.0, 0.0, 3), CandidateEstimate(p, -10.0, 0.0, 1),
                           CandidateEstimate(p, -np.inf, 0.0, 0), CandidateEstimate(p, -12.0, 0.0, 2)))
        assert [c.run_index for c in cs] == [1, 3, 2, 0]
        assert cs.best_score == -10.0

    def test_config_validation(self):
        with pytest.raises(ValueError):
            EmConfig(num_starts=0)
        with pytest.raises(ValueError):
            EmConfig(tol=0)
        with pytest.raises(ValueError):
            EmConfig(init_concentration=0)
