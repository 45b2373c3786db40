import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from numpy.testing import assert_allclose, assert_array_equal
from scipy.optimize import linprog

from geonmf.core import CountMatrix, GroundTruth, StochasticRows, exact_document_matrix, row_normalize
from geonmf.errors import ZeroRow


def test_uniform_row():
    Xt = row_normalize(CountMatrix([[2, 2, 2, 2]]))
    assert_array_equal(Xt.rows, [[0.25, 0.25, 0.25, 0.25]])
    assert Xt.kind == "empirical"


def test_single_support_row():
    assert_array_equal(row_normalize(CountMatrix([[0, 0, 5]])).rows, [[0, 0, 1]])


def test_hand_computed_rows():
    X = CountMatrix([[1, 2, 3, 4], [4, 0, 0, 0], [1, 1, 0, 2]])
    expected = [[0.1, 0.2, 0.3, 0.4], [1, 0, 0, 0], [0.25, 0.25, 0, 0.5]]
    assert_allclose(row_normalize(X).rows, expected, rtol=0, atol=1e-15)


def test_zero_row_raises():
    with pytest.raises(ZeroRow) as info:
        row_normalize(CountMatrix([[1, 0], [0, 0]]))
    assert info.value.row == 1


def test_count_matrix_validation():
    with pytest.raises(ValueError):
        CountMatrix([[1, -1]])
    with pytest.raises(ValueError):
        CountMatrix([[0.5, 1]])
    with pytest.raises(ValueError):
        CountMatrix(np.zeros((0, 3)))
    X = CountMatrix([[1, 0, 3], [0, 0, 2]])
    assert_array_equal(X.row_sums, [4, 2])
    assert_array_equal(X.doc_freq(), [2, 1])
    assert X.shape == (2, 3) and X.nnz == 3
    with pytest.raises(ValueError):
        X.row_sums[0] = 7


def test_from_triplets_sums_duplicates():
    X = CountMatrix.from_triplets([0, 0, 1], [1, 1, 0], [2, 3, 1], (2, 2))
    assert_array_equal(X.toarray(), [[0, 5], [1, 0]])


def test_stochastic_rows_validation():
    StochasticRows(np.array([[0.5, 0.5]]))
    with pytest.raises(ValueError):
        StochasticRows(np.array([[0.5, 0.6]]))
    with pytest.raises(ValueError):
        StochasticRows(np.array([[1.5, -0.5]]))
    with pytest.raises(ValueError):
        StochasticRows(np.array([[1.0]]), kind="other")


@settings(max_examples=60, deadline=None)
@given(arrays(np.int64, st.tuples(st.integers(1, 8), st.integers(1, 8)), elements=st.integers(0, 50)))
def test_normalize_then_rescale_reconstructs(a):
    a[:, 0] += 1  # no zero rows
    X = CountMatrix(a)
    Xt = row_normalize(X)
    assert_allclose(Xt.rows.sum(axis=1), 1.0, rtol=0, atol=1e-12)
    assert_allclose(Xt.rows * X.row_sums[:, None], a, rtol=1e-12, atol=1e-12)


def _toy_truth(rng, W=6, K=2, M=4, novel_per_topic=2):
    beta = np.zeros((W, K))
    sets = []
    n = novel_per_topic * K
    for k in range(K):
        idx = np.arange(k, n, K)
        beta[idx, k] = rng.uniform(0.1, 1, size=idx.size)
        sets.append(idx)
    beta[n:] = rng.dirichlet(np.ones(K), size=W - n)
    beta /= beta.sum(axis=0)
    theta = rng.dirichlet(np.ones(K), size=M).T
    return GroundTruth(beta, theta, sets, np.arange(n, W), rho=n / W)


def test_single_topic_gives_uniform_rows():
    beta = np.array([[0.2], [0.3], [0.5]])
    theta = np.full((1, 4), 1 / 4)
    gt = GroundTruth(beta, theta, [np.arange(3)], np.array([], dtype=int), rho=1.0)
    At = exact_document_matrix(gt)
    assert At.kind == "exact"
    assert_allclose(At.rows, 0.25, rtol=0, atol=1e-15)


def test_novel_rows_equal_normalized_theta():
    gt = _toy_truth(np.random.default_rng(3)).validate()
    At = exact_document_matrix(gt).rows
    th = gt.theta / gt.theta.sum(axis=1, keepdims=True)
    for k, s in enumerate(gt.novel_sets):
        for w in s:
            assert_allclose(At[w], th[k], rtol=0, atol=1e-12)
    # words 0 and 2 are both novel to topic 0
    assert_allclose(At[0], At[2], rtol=0, atol=1e-12)


def test_non_novel_rows_in_convex_hull_lp():
    rng = np.random.default_rng(11)
    for _ in range(10):
        gt = _toy_truth(rng).validate()
        At = exact_document_matrix(gt).rows
        th = gt.theta / gt.theta.sum(axis=1, keepdims=True)
        K = gt.K
        for w in gt.non_novel:
            # find lambda >= 0, sum lambda = 1, th^T lambda = At[w]
            A_eq = np.vstack([th.T, np.ones((1, K))])
            b_eq = np.concatenate([At[w], [1.0]])
            res = linprog(np.zeros(K), A_eq=A_eq, b_eq=b_eq, bounds=[(0, None)] * K, method="highs")
            assert res.status == 0
            assert np.abs(A_eq @ res.x - b_eq).max() <= 1e-9


def test_ground_truth_validate_catches_broken_separability():
    gt = _toy_truth(np.random.default_rng(0))
    beta = gt.beta.copy()
    beta[0, 1] = 0.01
    beta /= beta.sum(axis=0)
    bad = GroundTruth(beta, gt.theta, gt.novel_sets, gt.non_novel, gt.rho)
    with pytest.raises(ValueError, match="separable"):
        bad.validate()
    with pytest.raises(ValueError, match="rho"):
        GroundTruth(gt.beta, gt.theta, gt.novel_sets, gt.non_novel, rho=0.9).validate()


def test_labels():
    gt = _toy_truth(np.random.default_rng(0))
    assert_array_equal(gt.labels(), [0, 1, 0, 1, -1, -1])


def test_exact_matrix_zero_row():
    beta = np.array([[1.0, 0.0], [0.0, 1.0]])
    theta = np.array([[1.0, 1.0], [0.0, 0.0]])
    gt = GroundTruth(beta, theta, [np.array([0]), np.array([1])], np.array([], dtype=int), rho=1.0)
    with pytest.raises(ZeroRow):
        exact_document_matrix(gt)
