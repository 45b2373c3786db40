import json

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from geonmf._util import substream
from geonmf.core import row_normalize
from geonmf.datagen import SwimmerSpec, SyntheticSpec, generate_swimmer, generate_synthetic
from geonmf.errors import ShapeMismatch
from geonmf.evaluate import cluster_purity, match_columns, matched_error, recovery_count
from geonmf.extreme import CandidateParams, find_candidates
from geonmf.ssc import SscParams, cluster_candidates

from oracles import contingency_purity, exhaustive_match


def _beta(rng, W=30, K=4):
    return rng.dirichlet(np.ones(W), size=K).T


def test_identity():
    b = _beta(substream(0, "id"))
    r = matched_error(b, b)
    assert r.frobenius_error == 0 and r.permutation == [0, 1, 2, 3]
    assert r.recovered_count == 4


def test_reversed_columns():
    b = _beta(substream(1, "rev"))
    r = matched_error(b[:, ::-1], b)
    assert r.frobenius_error == 0 and r.permutation == [3, 2, 1, 0]


def test_two_by_two_hand_value():
    r = matched_error([[0.9, 0.1], [0.1, 0.9]], np.eye(2))
    assert_allclose(r.frobenius_error, 0.2, rtol=1e-12)
    assert_allclose(r.per_topic_l2, [np.sqrt(0.02)] * 2)


def test_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        matched_error(np.ones((3, 2)), np.ones((3, 3)))
    with pytest.raises(ShapeMismatch):
        recovery_count(np.ones(3), np.ones(3))


def test_uniform_column_is_not_recovered():
    gt, _, _ = generate_swimmer(SwimmerSpec())
    est = gt.beta.copy()
    est[:, 5] = 1.0 / est.shape[0]
    assert recovery_count(gt.beta, gt.beta) == 16
    assert recovery_count(est, gt.beta) <= 15
    assert recovery_count(est, gt.beta, cos_threshold=0.0) == 16


def test_invariant_to_permutations_of_either_argument():
    rng = substream(2, "perm")
    a, b = _beta(rng), _beta(rng)
    base = matched_error(a, b).frobenius_error
    for _ in range(5):
        p = rng.permutation(4)
        assert_allclose(matched_error(a[:, p], b).frobenius_error, base, rtol=1e-12)
        assert_allclose(matched_error(a, b[:, p]).frobenius_error, base, rtol=1e-12)
    assert base <= np.linalg.norm(a) + np.linalg.norm(b)


def test_hungarian_equals_exhaustive_search():
    rng = substream(3, "hungarian")
    for K in range(1, 7):
        for _ in range(10):
            a, b = _beta(rng, 12, K), _beta(rng, 12, K)
            _, err = exhaustive_match(a, b)
            assert_allclose(matched_error(a, b).frobenius_error, err, rtol=1e-12)
            perm = match_columns(a, b)
            assert_array_equal(np.sort(perm), np.arange(K))


def test_report_json():
    r = matched_error(np.eye(3), np.eye(3))
    d = json.loads(r.to_json())
    assert d["recovered_count"] == 3 and d["frobenius_error"] == 0 and d["purity"] is None


def test_purity_examples():
    truth = [np.arange(0, 5), np.arange(5, 10)]
    assert cluster_purity([np.arange(5, 10), np.arange(0, 5)], truth) == 1.0
    assert cluster_purity([np.array([0, 1, 2, 3, 9]), np.arange(5, 10)[:-1].tolist() + [4]], truth) == 0.8
    # one of ten clustered words sits with the wrong topic
    assert cluster_purity([np.array([0, 1, 2, 3, 4, 9]), np.arange(5, 9)], truth) == 0.9
    assert cluster_purity([np.arange(0, 5), np.array([5, 6, 7, 8, 42])], truth) == 0.9
    with pytest.raises(ValueError):
        cluster_purity([], truth)


def test_purity_matches_contingency_table():
    for s in range(3):
        gt, X = generate_synthetic(SyntheticSpec(W=200, M=100, seed=s))
        kept = np.flatnonzero(X.row_sums > 0)
        Xt = row_normalize(X.take_rows(kept))
        E = find_candidates(Xt, CandidateParams(P=100, seed=s))
        cl = [kept[c] for c in cluster_candidates(Xt, E, SscParams(K=5, seed=s)).clusters]
        assert_allclose(cluster_purity(cl, gt.novel_sets), contingency_purity(cl, gt.novel_sets, 200), rtol=1e-15)
