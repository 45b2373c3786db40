"""Matrix types shared by every stage of the pipeline.

Counts are kept sparse (``scipy.sparse.csr_matrix``, words by documents);
row-normalized matrices are dense. Indices are 0-based throughout.
"""

from dataclasses import dataclass, field
from typing import Literal, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import ZeroRow

EXACT_TOL = 1e-12
SOLVER_TOL = 1e-9


def _readonly(a):
    a = np.array(a, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class CountMatrix:
    """Sparse ``W x M`` word-by-document count matrix ``X``.

    Parameters
    ----------
    counts : scipy sparse matrix or array-like, shape (W, M)
        Nonnegative integer counts.
    """

    counts: sp.csr_matrix
    row_sums: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        m = self.counts
        if not sp.issparse(m):
            m = np.asarray(m)
        m = sp.csr_matrix(m)
        if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
            raise ValueError(f"count matrix must be 2-D with W, M >= 1, got {m.shape}")
        data = m.data
        if data.size and not np.all(np.equal(np.mod(data, 1), 0)):
            raise ValueError("counts must be integers")
        m = m.astype(np.int64)
        m.sum_duplicates()
        m.eliminate_zeros()
        if m.data.size and m.data.min() < 0:
            raise ValueError("counts must be nonnegative")
        m.sort_indices()
        for arr in (m.data, m.indices, m.indptr):
            arr.flags.writeable = False
        object.__setattr__(self, "counts", m)
        rs = np.asarray(m.sum(axis=1)).ravel().astype(np.int64)
        rs.flags.writeable = False
        object.__setattr__(self, "row_sums", rs)

    @classmethod
    def from_triplets(cls, words, docs, values, shape):
        m = sp.coo_matrix((np.asarray(values), (np.asarray(words), np.asarray(docs))), shape=shape)
        return cls(m.tocsr())

    @property
    def W(self) -> int:
        return self.counts.shape[0]

    @property
    def M(self) -> int:
        return self.counts.shape[1]

    @property
    def shape(self):
        return self.counts.shape

    @property
    def nnz(self) -> int:
        return int(self.counts.nnz)

    def toarray(self) -> np.ndarray:
        return self.counts.toarray()

    def doc_freq(self) -> np.ndarray:
        """Number of documents in which each word occurs."""
        return np.diff(self.counts.indptr).astype(np.int64)

    def take_rows(self, rows) -> "CountMatrix":
        return CountMatrix(self.counts[np.asarray(rows, dtype=np.intp)])

    def __eq__(self, other):
        if not isinstance(other, CountMatrix) or other.shape != self.shape:
            return NotImplemented if not isinstance(other, CountMatrix) else False
        return (self.counts != other.counts).nnz == 0


Kind = Literal["empirical", "exact"]


@dataclass(frozen=True, eq=False)
class StochasticRows:
    """Dense matrix whose rows are probability vectors over documents.

    ``kind`` is ``"empirical"`` for rows derived from sampled counts and
    ``"exact"`` for rows of the noiseless document matrix.
    """

    rows: np.ndarray
    kind: Kind = "empirical"

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.float64)
        if rows.ndim != 2 or rows.shape[0] < 1:
            raise ValueError("rows must be a non-empty 2-D array")
        if self.kind not in ("empirical", "exact"):
            raise ValueError(f"unknown kind {self.kind!r}")
        if rows.size and (rows.min() < 0 or rows.max() > 1):
            raise ValueError("entries must lie in [0, 1]")
        bad = np.flatnonzero(np.abs(rows.sum(axis=1) - 1.0) > EXACT_TOL)
        if bad.size:
            raise ValueError(f"row {bad[0]} does not sum to 1")
        object.__setattr__(self, "rows", _readonly(rows))

    @property
    def W(self) -> int:
        return self.rows.shape[0]

    @property
    def M(self) -> int:
        return self.rows.shape[1]


def _normalize_dense(a, kind):
    sums = a.sum(axis=1)
    zero = np.flatnonzero(sums <= 0)
    if zero.size:
        raise ZeroRow(zero[0])
    out = a / sums[:, None]
    # Division can leave sums a few ulps off; renormalize once more.
    out /= out.sum(axis=1, keepdims=True)
    return StochasticRows(out, kind=kind)


def row_normalize(X: CountMatrix) -> StochasticRows:
    """Scale every row of ``X`` to unit sum.

    Raises
    ------
    ZeroRow
        If some word never occurs; the vocabulary must be pruned first.
    """
    zero = np.flatnonzero(X.row_sums == 0)
    if zero.size:
        raise ZeroRow(zero[0])
    return _normalize_dense(X.toarray().astype(np.float64), "empirical")


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """Separable topic model parameters used to generate a corpus.

    Attributes
    ----------
    beta : ndarray, shape (W, K)
        Column-stochastic topic matrix.
    theta : ndarray, shape (K, M)
        Column-stochastic topic weights per document.
    novel_sets : tuple of ndarray
        ``novel_sets[k]`` holds the words that occur only in topic ``k``.
    non_novel : ndarray
        Every other word.
    rho : float
        Fraction of novel words.
    alpha : ndarray or None
        Dirichlet parameter the weights were drawn with, if any.
    """

    beta: np.ndarray
    theta: np.ndarray
    novel_sets: Sequence[np.ndarray]
    non_novel: np.ndarray
    rho: float
    alpha: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "beta", _readonly(np.asarray(self.beta, dtype=np.float64)))
        object.__setattr__(self, "theta", _readonly(np.asarray(self.theta, dtype=np.float64)))
        object.__setattr__(
            self, "novel_sets", tuple(_readonly(np.asarray(s, dtype=np.intp)) for s in self.novel_sets)
        )
        object.__setattr__(self, "non_novel", _readonly(np.asarray(self.non_novel, dtype=np.intp)))
        if self.alpha is not None:
            object.__setattr__(self, "alpha", _readonly(np.asarray(self.alpha, dtype=np.float64)))

    @property
    def W(self) -> int:
        return self.beta.shape[0]

    @property
    def K(self) -> int:
        return self.beta.shape[1]

    @property
    def M(self) -> int:
        return self.theta.shape[1]

    def labels(self) -> np.ndarray:
        """Topic index of every word, ``-1`` for non-novel words."""
        lab = np.full(self.W, -1, dtype=np.intp)
        for k, s in enumerate(self.novel_sets):
            lab[s] = k
        return lab

    def validate(self, tol=1e-9):
        """Raise ``ValueError`` if any model invariant is violated."""
        beta, theta = self.beta, self.theta
        W, K = beta.shape
        if theta.shape[0] != K:
            raise ValueError("beta and theta disagree on K")
        if beta.min() < 0 or theta.min() < 0:
            raise ValueError("negative entries")
        if np.abs(beta.sum(axis=0) - 1).max() > tol:
            raise ValueError("beta is not column-stochastic")
        if np.abs(theta.sum(axis=0) - 1).max() > tol:
            raise ValueError("theta is not column-stochastic")
        if len(self.novel_sets) != K:
            raise ValueError("need one novel set per topic")
        allw = np.concatenate([*self.novel_sets, self.non_novel])
        if allw.size != W or not np.array_equal(np.sort(allw), np.arange(W)):
            raise ValueError("novel and non-novel sets do not partition the vocabulary")
        for k, s in enumerate(self.novel_sets):
            if s.size == 0:
                raise ValueError(f"topic {k} has no novel word")
            rows = beta[s]
            if np.any(rows[:, k] <= 0) or np.any(np.delete(rows, k, axis=1) != 0):
                raise ValueError(f"novel words of topic {k} are not separable")
        n_novel = sum(s.size for s in self.novel_sets)
        if n_novel != round(self.rho * W):
            raise ValueError("rho does not match the novel word count")
        return self


def exact_document_matrix(gt: GroundTruth) -> StochasticRows:
    """Row-normalized noiseless document matrix ``A = beta @ theta``.

    Raises
    ------
    ZeroRow
        If a word has probability zero in every document.
    """
    A = gt.beta @ gt.theta
    return _normalize_dense(A, "exact")
