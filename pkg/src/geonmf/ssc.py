"""Sparse subspace clustering of candidate novel words.

Each candidate row is written as a sparse combination of the other
candidates (a lasso solved by cyclic coordinate descent). Points that need
a large or poor combination are set aside as outliers; the rest are
clustered spectrally on the symmetrized coefficient graph.
"""

import warnings
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
from scipy.optimize import nnls
from sklearn.cluster import KMeans
from sklearn.linear_model import lars_path_gram

from ._util import chunks, parallel_map, subseed
from .core import SOLVER_TOL, StochasticRows
from .errors import AllOutliers, DisconnectedDegenerate, NoConvergence, TooFewInliers

_CHUNK = 64
_POLISH_AT = frozenset(int(v) for v in np.round(10 ** np.arange(1, 6, 0.5)))


@dataclass(frozen=True)
class SscParams:
    """Parameters of the clustering step.

    ``lambda1`` is dimensionless when ``normalize_lambda`` is set: point
    ``i`` is penalized by ``lambda1 * max_{j != i} |<x_i, x_j>|``. With
    ``lambda1 >= 1`` every code would be zero. ``min_cluster_share`` is
    the smallest fraction of a clustered point's code mass that must lie in
    its own cluster; 0 disables that check.
    """

    K: int
    lambda1: float = 0.1
    gamma: float = 2.0
    solver_tol: float = 1e-7
    max_iter: int = 20000
    normalize_lambda: bool = True
    residual_factor: float = 10.0
    min_cluster_share: float = 0.25
    unit_norm: bool = True
    n_restarts: int = 20
    seed: int = 0

    def __post_init__(self):
        if self.lambda1 <= 0:
            raise ValueError("lambda1 must be positive")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if not 0 <= self.min_cluster_share < 1:
            raise ValueError("min_cluster_share must lie in [0, 1)")
        if int(self.K) != self.K or self.K < 1:
            raise ValueError("K must be a positive integer")


@dataclass(frozen=True, eq=False)
class SelfExpression:
    """Lasso codes of every candidate in terms of the others.

    ``coefficients[i, j]`` is the weight of point ``j`` in the code of point
    ``i``; the diagonal is zero.
    """

    coefficients: np.ndarray
    l1_norms: np.ndarray
    residuals: np.ndarray
    penalties: np.ndarray
    kkt: np.ndarray
    sweeps: np.ndarray
    objective_history: np.ndarray = field(repr=False)

    @property
    def n(self):
        return self.coefficients.shape[0]


def _soft(r, t):
    return np.sign(r) * np.maximum(np.abs(r) - t, 0.0)


def _kkt(Z, g, lam, selfmask):
    nz = Z != 0
    res = np.where(nz, np.abs(g + lam * np.sign(Z)), np.maximum(np.abs(g) - lam, 0.0))
    res[selfmask] = 0.0
    return res.max(axis=0)


def _objective(Z, g, Q, diagI, lam):
    # 0.5 * ||x - X^T c||^2 = 0.5 * (G_ii + c^T g - c^T q) with g = G c - q
    quad = 0.5 * (diagI + np.einsum("jt,jt->t", Z, g) - np.einsum("jt,jt->t", Z, Q))
    return np.maximum(quad, 0.0) + lam * np.abs(Z).sum(axis=0)


def _polish(G, Q, Z, lam, problems, todo, tol):
    """Exact LARS solutions for slow problems, kept only if KKT-certified.

    Coordinate descent crawls when candidates are nearly collinear, because
    mass moves slowly between near-copies. LARS follows the lasso path
    exactly and does not care.
    """
    n = G.shape[0]
    for t in todo:
        i = problems[t]
        keep = np.delete(np.arange(n), i)
        with warnings.catch_warnings():
            # early-stopping notices; the result is checked below anyway
            warnings.simplefilter("ignore")
            _, _, coefs = lars_path_gram(
                Xy=Q[keep, t], Gram=G[np.ix_(keep, keep)], n_samples=1, alpha_min=lam[t], method="lasso"
            )
        z = np.zeros(n)
        z[keep] = coefs[:, -1]
        g = G @ z - Q[:, t]
        nz = z != 0
        res = np.where(nz, np.abs(g + lam[t] * np.sign(z)), np.maximum(np.abs(g) - lam[t], 0.0))
        res[i] = 0.0
        if res.max() <= tol:
            Z[:, t] = z


def _lasso_chunk(G, problems, lam, tol, max_iter):
    """Cyclic coordinate descent for a block of self-expression problems."""
    n = G.shape[0]
    m = problems.size
    diag = np.diag(G).copy()
    Q = G[:, problems].copy()
    Z = np.zeros((n, m))
    g = -Q
    selfmask = np.zeros((n, m), dtype=bool)
    selfmask[problems, np.arange(m)] = True
    selfcol = np.full(n, -1, dtype=np.intp)
    selfcol[problems] = np.arange(m)
    lam_row = lam[None, :]

    history = [_objective(Z, g, Q, diag[problems], lam)]
    sweeps = np.zeros(m, dtype=np.int64)
    kkt = _kkt(Z, g, lam_row, selfmask)
    for sweep in range(max_iter):
        if kkt.max() <= tol:
            break
        sweeps[kkt > tol] += 1
        # Coordinates at zero that satisfy the KKT bound stay at zero this
        # sweep; they are revisited whenever they start to violate it.
        viol = np.abs(g) > lam_row
        viol[selfmask] = False
        coords = np.flatnonzero(np.any(viol | (Z != 0), axis=1))
        for j in coords:
            zj = Z[j]
            r = zj * diag[j] - g[j]
            new = _soft(r, lam) / diag[j]
            if selfcol[j] >= 0:
                new[selfcol[j]] = 0.0
            step = new - zj
            if not np.any(step):
                continue
            Z[j] = new
            g += np.outer(G[:, j], step)
        if sweep + 1 in _POLISH_AT:
            todo = np.flatnonzero(_kkt(Z, G @ Z - Q, lam_row, selfmask) > tol)
            _polish(G, Q, Z, lam, problems, todo, tol)
        g = G @ Z - Q
        history.append(_objective(Z, g, Q, diag[problems], lam))
        kkt = _kkt(Z, g, lam_row, selfmask)
    return Z, kkt, sweeps, np.array(history)


def self_express(rows, params: SscParams, threads=1) -> SelfExpression:
    """Sparse self-representation of the rows of ``rows``.

    For each row ``x_i`` solves

        min_c  lam_i * ||c||_1 + 0.5 * ||x_i - sum_{j != i} c_j x_j||_2^2

    with ``c_i = 0``, to a KKT residual of ``params.solver_tol``.

    Raises
    ------
    NoConvergence
        If some problem is still above tolerance after ``max_iter`` sweeps.
    """
    X = np.asarray(rows, dtype=np.float64)
    n = X.shape[0]
    if n < 2:
        raise ValueError("self-expression needs at least two points")
    G = X @ X.T
    off = np.abs(G).copy()
    np.fill_diagonal(off, 0.0)
    mu = off.max(axis=1)
    if params.normalize_lambda:
        scale = np.where(mu > 0, mu, np.diag(G))
        lam = params.lambda1 * scale
    else:
        lam = np.full(n, float(params.lambda1))

    blocks = chunks(n, _CHUNK)
    results = parallel_map(
        lambda I: _lasso_chunk(G, I, lam[I], params.solver_tol, params.max_iter), blocks, threads
    )

    C = np.zeros((n, n))
    kkt = np.zeros(n)
    sweeps = np.zeros(n, dtype=np.int64)
    longest = max(r[3].shape[0] for r in results)
    history = np.zeros((longest, n))
    for I, (Z, res, sw, hist) in zip(blocks, results):
        C[I] = Z.T
        kkt[I] = res
        sweeps[I] = sw
        history[: hist.shape[0], I] = hist
        history[hist.shape[0]:, I] = hist[-1]

    bad = np.flatnonzero(kkt > params.solver_tol)
    if bad.size:
        raise NoConvergence(int(bad[0]), float(kkt[bad[0]]))
    resid = np.linalg.norm(X - C @ X, axis=1)
    return SelfExpression(
        coefficients=C,
        l1_norms=np.abs(C).sum(axis=1),
        residuals=resid,
        penalties=lam,
        kkt=kkt,
        sweeps=sweeps,
        objective_history=history,
    )


def kkt_residuals(rows, se: SelfExpression) -> np.ndarray:
    """Independent check of the lasso optimality conditions, one per point."""
    X = np.asarray(rows, dtype=np.float64)
    C = se.coefficients
    out = np.empty(X.shape[0])
    for i in range(X.shape[0]):
        grad = -(X @ (X[i] - C[i] @ X))
        lam = se.penalties[i]
        r = np.where(C[i] != 0, np.abs(grad + lam * np.sign(C[i])), np.maximum(np.abs(grad) - lam, 0))
        r[i] = 0.0
        out[i] = r.max()
    return out


def detect_outliers(se: SelfExpression, params: SscParams, M=None) -> Tuple[np.ndarray, np.ndarray]:
    """Split candidate positions into ``(inliers, outliers)``.

    A point is an outlier when its code is large relative to the cohort,
    ``||c_i||_1 > gamma * median_j ||c_j||_1``, or when it is poorly
    represented, ``residual_i > residual_factor * median residual``. ``M``
    is accepted for interface compatibility; the rule is scale free.

    Raises
    ------
    AllOutliers
    """
    l1 = se.l1_norms
    res = se.residuals
    flagged = l1 > params.gamma * np.median(l1)
    floor = max(params.residual_factor * np.median(res), SOLVER_TOL)
    flagged |= res > floor
    if flagged.all():
        raise AllOutliers(f"all {flagged.size} candidates flagged as outliers")
    return np.flatnonzero(~flagged), np.flatnonzero(flagged)


def affinity(se: SelfExpression, positions=None) -> np.ndarray:
    """Symmetric affinity ``|C| + |C^T|`` restricted to ``positions``."""
    C = np.abs(se.coefficients)
    if positions is not None:
        C = C[np.ix_(positions, positions)]
    A = C + C.T
    np.fill_diagonal(A, 0.0)
    return A


def kmeans_best(points, K, seed=0, n_restarts=20):
    """Labels from the lowest-inertia k-means++ run over seeded restarts."""
    best = None
    for r in range(n_restarts):
        km = KMeans(
            n_clusters=K, init="k-means++", n_init=1, random_state=subseed(seed, "kmeans", r) % 2**32
        )
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            km.fit(points)
        if best is None or km.inertia_ < best.inertia_:
            best = km
    return best.labels_


def spectral_cluster(se: SelfExpression, inliers, K, seed=0, n_restarts=20):
    """Cluster inlier positions into ``K`` groups.

    Uses the symmetric normalized Laplacian of the inlier affinity graph,
    the ``K`` eigenvectors of smallest eigenvalue with unit-normalized rows,
    and k-means. Clusters are returned sorted by their smallest position.

    Raises
    ------
    TooFewInliers
        If there are fewer than ``K`` inliers or k-means leaves a cluster empty.
    DisconnectedDegenerate
        If some inlier has no edge; the caller should treat it as an outlier.
    """
    inliers = np.asarray(inliers, dtype=np.intp)
    if inliers.size < K:
        raise TooFewInliers(f"{inliers.size} inliers for {K} clusters")
    A = affinity(se, inliers)
    deg = A.sum(axis=1)
    if np.any(deg <= 0):
        raise DisconnectedDegenerate(inliers[deg <= 0])
    if K == 1:
        return [inliers]
    d = 1.0 / np.sqrt(deg)
    L = np.eye(inliers.size) - d[:, None] * A * d[None, :]
    _, vecs = np.linalg.eigh((L + L.T) / 2)
    emb = vecs[:, :K]
    emb = emb / np.linalg.norm(emb, axis=1, keepdims=True)
    labels = kmeans_best(emb, K, seed=seed, n_restarts=n_restarts)
    groups = [inliers[labels == k] for k in range(K)]
    if any(g.size == 0 for g in groups):
        raise TooFewInliers("k-means produced an empty cluster")
    groups.sort(key=lambda g: g.min())
    return groups


def cluster_shares(se: SelfExpression, groups):
    """Fraction of each clustered point's code mass inside its own cluster.

    Returns one array per group, aligned with the group's positions. A point
    spread evenly over several clusters (an interior, non-novel word) has a
    small share.
    """
    C = np.abs(se.coefficients)
    total = C.sum(axis=1)
    out = []
    for g in groups:
        own = C[np.ix_(g, g)].sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            out.append(np.where(total[g] > 0, own / total[g], 0.0))
    return out


def cluster_residuals(rows, groups):
    """Relative residual of each clustered point fit by its cluster mates.

    Each point is fit by nonnegative least squares on the other rows of its
    own cluster; a lone member gets residual 1.
    """
    X = np.asarray(rows, dtype=np.float64)
    out = []
    for g in groups:
        r = np.ones(g.size)
        for a, i in enumerate(g):
            mates = np.delete(g, a)
            if mates.size:
                _, rnorm = nnls(X[mates].T, X[i])
                r[a] = rnorm / np.linalg.norm(X[i])
        out.append(r)
    return out


def expression_rows(rows_all, cand, unit_norm=True):
    """The candidate rows self-expression works on, optionally scaled to unit L2 norm."""
    rows = np.asarray(rows_all, dtype=np.float64)[np.asarray(cand, dtype=np.intp)]
    if unit_norm:
        rows = rows / np.linalg.norm(rows, axis=1, keepdims=True)
    return rows


def _misfits(rows, se, groups, params):
    flagged = []
    if params.min_cluster_share > 0:
        for g, sh in zip(groups, cluster_shares(se, groups)):
            flagged.append(g[sh < params.min_cluster_share])
    res = cluster_residuals(rows, groups)
    floor = max(params.residual_factor * np.median(np.concatenate(res)), SOLVER_TOL)
    for g, r in zip(groups, res):
        flagged.append(g[r > floor])
    return np.unique(np.concatenate(flagged))


def _cluster_inliers(se, inliers, outliers, params):
    while True:
        try:
            return spectral_cluster(se, inliers, params.K, seed=params.seed, n_restarts=params.n_restarts), inliers, outliers
        except DisconnectedDegenerate as exc:
            outliers = np.union1d(outliers, exc.positions)
            inliers = np.setdiff1d(inliers, exc.positions)
            if inliers.size == 0:
                raise AllOutliers("no connected inliers left") from exc


@dataclass(frozen=True, eq=False)
class NovelWordClustering:
    """Result of clustering the candidate set.

    ``clusters`` are the estimated novel-word sets, ``outliers`` the rejected
    candidates and ``residual`` every word that was never a candidate.
    ``cluster_matrices[k]`` stacks the rows of the row-normalized matrix
    indexed by ``clusters[k]``.
    """

    clusters: Tuple[np.ndarray, ...]
    outliers: np.ndarray
    residual: np.ndarray
    cluster_matrices: Tuple[np.ndarray, ...] = field(repr=False)
    candidates: Optional[np.ndarray] = None
    self_expression: Optional[SelfExpression] = field(default=None, repr=False)

    @property
    def K(self):
        return len(self.clusters)

    def to_regress(self) -> np.ndarray:
        """Words whose topic weights come from regression, ascending."""
        return np.union1d(self.residual, self.outliers)

    def labels(self, W) -> np.ndarray:
        lab = np.full(W, -1, dtype=np.intp)
        for k, c in enumerate(self.clusters):
            lab[c] = k
        return lab


def cluster_candidates(Xt, E, params: SscParams, threads=1) -> NovelWordClustering:
    """Cluster candidate words ``E`` of ``Xt`` into ``params.K`` novel sets.

    Candidates are processed in ascending word order, so the result does not
    depend on how ``E`` is ordered.
    """
    rows_all = Xt.rows if isinstance(Xt, StochasticRows) else np.asarray(Xt, dtype=np.float64)
    W = rows_all.shape[0]
    idx = getattr(E, "indices", E)
    cand = np.unique(np.asarray(idx, dtype=np.intp))
    K = params.K
    if cand.size < K:
        raise TooFewInliers(f"{cand.size} candidates for {K} clusters")

    se = None
    if cand.size == 1:
        groups = [np.array([0])]
        outliers = np.array([], dtype=np.intp)
    else:
        rows = expression_rows(rows_all, cand, params.unit_norm)
        se = self_express(rows, params, threads=threads)
        inliers, outliers = detect_outliers(se, params, rows_all.shape[1])
        groups, inliers, outliers = _cluster_inliers(se, inliers, outliers, params)
        # One pass over the clusters: points mostly expressed by other
        # clusters, or fit much worse than usual by their own cluster, are set
        # aside and the rest re-clustered. Repeating the pass can cascade on
        # noisy data, and a failed re-clustering keeps the first result.
        low = _misfits(rows, se, groups, params)
        if low.size:
            try:
                groups, inliers, outliers = _cluster_inliers(
                    se, np.setdiff1d(inliers, low), np.union1d(outliers, low), params
                )
            except (TooFewInliers, AllOutliers):
                pass

    clusters = tuple(cand[g] for g in groups)
    return NovelWordClustering(
        clusters=clusters,
        outliers=cand[outliers],
        residual=np.setdiff1d(np.arange(W), cand),
        cluster_matrices=tuple(rows_all[c] for c in clusters),
        candidates=cand,
        self_expression=se,
    )
