import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bnselect.em import CandidateEstimate, CandidateSet, EmConfig, multi_start_em
from bnselect.network import CptParams, MissingnessSpec, chain, forward_sample, inject_missingness, sample_true_params
from bnselect.selection import (BmaWeights, ScoreSlack, bma_combine, bma_estimate, compute_bma_weights, retained,
                                select_max_entropy, select_max_score)

from conftest import random_params


def make_set(scores, entropies=None, params=None):
    s = chain(2)
    entropies = entropies or [0.0] * len(scores)
    params = params or [CptParams.uniform(s)] * len(scores)
    return CandidateSet(tuple(CandidateEstimate(p, float(sc), float(h), i)
                              for i, (sc, h, p) in enumerate(zip(scores, entropies, params))))


@pytest.fixture(scope="module")
def bn3_candidates():
    s = chain(5, 3, 5)
    d = forward_sample(s, sample_true_params(s, 41), 300, 42)
    d = inject_missingness(d, MissingnessSpec.mcar(s, {"B": 0.85}), 43)
    return s, multi_start_em(s, d, EmConfig(seed=44))


class TestMaxScore:
    def test_examples(self):
        assert select_max_score(make_set([-5.0])).run_index == 0
        assert select_max_score(make_set([-12, -10, -15])).score == -10

    def test_tie_goes_to_lower_run(self):
        p = CptParams.uniform(chain(2))
        cs = CandidateSet((CandidateEstimate(p, -10.0, 0.0, 3), CandidateEstimate(p, -10.0, 0.0, 1)))
        assert select_max_score(cs).run_index == 1

    def test_empty(self):
        with pytest.raises(ValueError):
            select_max_score(CandidateSet(()))


class TestMaxEntropy:
    def test_threshold_example(self):
        cs = make_set([-10, -10.005, -20], [1.0, 2.0, 9.0])
        assert ScoreSlack(0.001).threshold(-10) == pytest.approx(-10.01)
        pick = select_max_entropy(cs, ScoreSlack(0.001))
        assert (pick.score, pick.entropy) == (-10.005, 2.0)

    def test_zero_slack_strict_best(self):
        cs = make_set([-10, -10.001, -11], [0.0, 5.0, 9.0])
        assert select_max_entropy(cs, ScoreSlack(0.0)) is select_max_score(cs)

    def test_entropy_tie_breaks(self):
        cs = make_set([-10, -10.001, -10.001], [3.0, 3.0, 3.0])
        assert select_max_entropy(cs).run_index == 0
        cs = make_set([-10.001, -10.001, -10], [3.0, 3.0, 1.0])
        assert select_max_entropy(cs).run_index == 0

    def test_bn3_exhaustive(self, bn3_candidates):
        _, cs = bn3_candidates
        slack = ScoreSlack(0.001)
        pick = select_max_entropy(cs, slack)
        t = slack.threshold(cs.best_score)
        assert pick.score >= t
        assert all(c.entropy <= pick.entropy for c in cs if c.score >= t)
        assert len(retained(cs, slack)) == sum(c.score >= t for c in cs)

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.tuples(st.floats(-1e4, -1), st.floats(0, 10)), min_size=1, max_size=12),
           st.floats(0, 0.1))
    def test_pick_is_within_slack(self, pairs, eps):
        cs = make_set([p[0] for p in pairs], [p[1] for p in pairs])
        pick = select_max_entropy(cs, ScoreSlack(eps))
        assert pick.score >= cs.best_score - eps * abs(cs.best_score)

    def test_negative_slack_rejected(self):
        with pytest.raises(ValueError):
            ScoreSlack(-0.1)


class TestBmaWeights:
    def test_equal_scores_uniform(self):
        w = compute_bma_weights(make_set([-7.0] * 4)).weights
        np.testing.assert_allclose(w, 0.25, atol=1e-15)

    def test_log3_gap(self):
        w = compute_bma_weights(make_set([-10.0, -10.0 - math.log(3)])).weights
        np.testing.assert_allclose(w, [0.75, 0.25], atol=1e-15)

    def test_direct_formula(self):
        scores = np.array([-10.0, -11.0, -13.0])
        e = np.exp(scores)
        np.testing.assert_allclose(compute_bma_weights(make_set(scores)).weights, e / e.sum(), atol=1e-12, rtol=0)

    def test_temperature(self):
        w = compute_bma_weights(make_set([0.0, -2.0]), temperature=2.0).weights
        np.testing.assert_allclose(w, [1 / (1 + math.exp(-1)), math.exp(-1) / (1 + math.exp(-1))], atol=1e-15)

    def test_underflow_is_degenerate(self):
        w = compute_bma_weights(make_set([-10.0, -5000.0]))
        assert w.degenerate
        assert w.weights.tolist() == [1.0, 0.0]

    def test_rank_scheme(self):
        np.testing.assert_allclose(compute_bma_weights(make_set([-1, -2, -3]), scheme="rank").weights,
                                   [3 / 6, 2 / 6, 1 / 6])

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.floats(-2000, -1), min_size=1, max_size=20), st.floats(-1000, 1000))
    def test_shift_invariance_and_normalisation(self, scores, shift):
        a = compute_bma_weights(make_set(scores)).weights
        b = compute_bma_weights(make_set([x + shift for x in scores])).weights
        assert abs(a.sum() - 1.0) <= 1e-12
        np.testing.assert_allclose(a, b, atol=1e-12, rtol=0)
        assert a[0] == a.max()

    def test_validation(self):
        with pytest.raises(ValueError):
            BmaWeights(np.array([0.5, 0.6]))
        with pytest.raises(ValueError):
            compute_bma_weights(make_set([-1.0]), temperature=0.0)


class TestBmaCombine:
    def test_single_candidate(self, rng):
        s = chain(3, 2)
        p = random_params(s, rng)
        cs = CandidateSet((CandidateEstimate(p, -1.0, 0.0, 0),))
        assert bma_combine(cs, BmaWeights(np.array([1.0]))) == p

    def test_opposite_rows(self):
        s = chain(2)
        a, b = CptParams(s, [np.array([[1.0, 0.0]])]), CptParams(s, [np.array([[0.0, 1.0]])])
        cs = make_set([-1.0, -1.0], params=[a, b])
        out = bma_combine(cs, BmaWeights(np.array([0.5, 0.5])))
        np.testing.assert_array_equal(out.tables[0], [[0.5, 0.5]])

    def test_copies_return_exactly(self, rng):
        s = chain(5, 3, 5)
        p = random_params(s, rng)
        cs = CandidateSet(tuple(CandidateEstimate(p, -3.0 - i, 0.0, i) for i in range(7)))
        out, _ = bma_estimate(cs)
        for got, want in zip(out.tables, p.tables):
            np.testing.assert_array_equal(got, want)

    def test_bn3_hull_and_rows(self, bn3_candidates):
        s, cs = bn3_candidates
        out, w = bma_estimate(cs)
        for j, t in enumerate(out.tables):
            np.testing.assert_allclose(t.sum(axis=1), 1.0, atol=1e-12, rtol=0)
            stack = np.stack([c.params.tables[j] for c in cs])
            assert (t >= stack.min(axis=0)).all() and (t <= stack.max(axis=0)).all()
        expected = [sum(wi * c.params.tables[j] for wi, c in zip(w.weights, cs)) for j in range(s.n_nodes)]
        for got, want in zip(out.tables, expected):
            np.testing.assert_allclose(got, want, atol=1e-12, rtol=0)

    def test_structure_mismatch(self, rng):
        from bnselect.network import StructureError
        a, b = CptParams.uniform(chain(2)), CptParams.uniform(chain(3))
        cs = make_set([-1.0, -2.0], params=[a, b])
        with pytest.raises(StructureError):
            bma_combine(cs, BmaWeights(np.array([0.5, 0.5])))
