"""Group-sparse nonnegative regression of word rows on the novel-word clusters.

For a row ``x`` and cluster matrices ``Y_1..Y_K`` we minimize

    ||x - sum_l b_l Y_l||_2^2 + lambda2 * sum_l ||b_l||_inf,   b >= 0

by accelerated proximal gradient with function-value restart. Many rows
share the same ``Y`` and are solved together as one batch.
"""

import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from ._util import chunks, parallel_map
from .errors import EmptyColumn, NoConvergence

_CHUNK = 256

REGRESSED = -1
OUTLIER_REGRESSED = -2


def project_l1_ball(v, radius):
    """Euclidean projection of ``v`` onto ``{u : ||u||_1 <= radius}``."""
    v = np.asarray(v, dtype=np.float64)
    return _project_l1_rows(v[None, :], radius)[0]


def _project_l1_rows(V, radius):
    # Sort-based projection, one row at a time in vectorized form.
    A = np.abs(V)
    inside = A.sum(axis=1) <= radius
    if radius <= 0:
        return np.zeros_like(V)
    u = -np.sort(-A, axis=1)
    css = np.cumsum(u, axis=1) - radius
    j = np.arange(1, V.shape[1] + 1)
    cond = u - css / j > 0
    rho = V.shape[1] - 1 - np.argmax(cond[:, ::-1], axis=1)
    tau = css[np.arange(V.shape[0]), rho] / (rho + 1)
    P = np.sign(V) * np.maximum(A - tau[:, None], 0.0)
    P[inside] = V[inside]
    return P


def _prox_rows(V, t):
    W = np.maximum(V, 0.0)
    if t <= 0:
        return W
    # Moreau: prox of t*||.||_inf is the residual of projecting onto the
    # L1 ball of radius t.
    return np.maximum(W - _project_l1_rows(W, t), 0.0)


def prox_linf_nonneg(v, t):
    """``argmin_{u >= 0} 0.5 * ||u - v||^2 + t * ||u||_inf``."""
    if t < 0:
        raise ValueError("threshold must be >= 0")
    v = np.asarray(v, dtype=np.float64)
    return _prox_rows(v[None, :], float(t))[0]


def power_iteration(G, rtol=1e-6, max_iter=10000):
    """Largest eigenvalue of a symmetric positive semidefinite matrix."""
    n = G.shape[0]
    v = np.full(n, 1.0 / np.sqrt(n))
    lam = 0.0
    for _ in range(max_iter):
        w = G @ v
        new = float(v @ w)
        nw = np.linalg.norm(w)
        if nw == 0:
            return 0.0
        v = w / nw
        if abs(new - lam) <= rtol * abs(new):
            return new
        lam = new
    return lam


@dataclass(frozen=True, eq=False)
class GroupFit:
    """Solution of one regression problem.

    ``blocks[l]`` holds the weights on the rows of cluster ``l``.
    """

    word: int
    blocks: Tuple[np.ndarray, ...]
    objective: float
    group_norms: np.ndarray
    converged: bool = True
    n_iter: int = 0
    residual: float = 0.0

    @property
    def coefficients(self):
        return np.concatenate(self.blocks)

    @property
    def group_l1(self):
        return np.array([b.sum() for b in self.blocks])


class GroupProblem:
    """Shared data for regressing many rows on the same cluster matrices."""

    def __init__(self, Y: Sequence[np.ndarray], lambda2):
        if len(Y) == 0 or any(np.asarray(y).shape[0] == 0 for y in Y):
            raise ValueError("every cluster matrix must be nonempty")
        if lambda2 < 0:
            raise ValueError("lambda2 must be >= 0")
        self.Y = [np.asarray(y, dtype=np.float64) for y in Y]
        self.sizes = np.array([y.shape[0] for y in self.Y])
        self.offsets = np.concatenate([[0], np.cumsum(self.sizes)])
        self.stacked = np.vstack(self.Y)
        self.G = self.stacked @ self.stacked.T
        self.lambda2 = float(lambda2)
        # Gradient of the unhalved square loss is 2 (bG - q).
        self.L = 2.0 * power_iteration(self.G) * (1 + 1e-3)
        if self.L == 0:
            self.L = 1.0

    def groups(self):
        return [slice(self.offsets[l], self.offsets[l + 1]) for l in range(len(self.Y))]

    def penalty(self, B):
        return self.lambda2 * sum(B[:, s].max(axis=1) for s in self.groups())

    def objective(self, B, Q, xx):
        quad = xx - 2 * np.einsum("ij,ij->i", B, Q) + np.einsum("ij,ij->i", B @ self.G, B)
        return np.maximum(quad, 0.0) + self.penalty(B)

    def grad(self, B, Q):
        return 2.0 * (B @ self.G - Q)

    def prox(self, V, step):
        out = np.empty_like(V)
        t = self.lambda2 * step
        for s in self.groups():
            out[:, s] = _prox_rows(V[:, s], t)
        return out

    def mapping_norm(self, B, Q):
        """Norm of the proximal-gradient mapping; zero exactly at optima."""
        step = 1.0 / self.L
        P = self.prox(B - step * self.grad(B, Q), step)
        return self.L * np.linalg.norm(B - P, axis=1)


def _solve_batch(prob: GroupProblem, X, tol, ftol, max_iter, check_every=5, history=False):
    Bn = X.shape[0]
    n = prob.stacked.shape[0]
    Q = X @ prob.stacked.T
    xx = np.einsum("ij,ij->i", X, X)
    step = 1.0 / prob.L

    b = np.zeros((Bn, n))
    Fb = prob.objective(b, Q, xx)
    y = b.copy()
    t = np.ones(Bn)
    converged = np.zeros(Bn, dtype=bool)
    n_iter = np.zeros(Bn, dtype=np.int64)
    resid = prob.mapping_norm(b, Q)
    converged |= resid <= tol
    trace = [Fb.copy()] if history else None

    for it in range(1, max_iter + 1):
        act = np.flatnonzero(~converged)
        if act.size == 0:
            break
        ya, ba, Qa = y[act], b[act], Q[act]
        new = prob.prox(ya - step * prob.grad(ya, Qa), step)
        Fn = prob.objective(new, Qa, xx[act])
        bad = Fn > Fb[act]
        if np.any(bad):
            # Momentum overshot: restart from the last iterate with a plain step.
            plain = prob.prox(ba[bad] - step * prob.grad(ba[bad], Qa[bad]), step)
            Fp = prob.objective(plain, Qa[bad], xx[act][bad])
            keep = Fp > Fb[act][bad]
            plain[keep] = ba[bad][keep]
            Fp[keep] = Fb[act][bad][keep]
            new[bad] = plain
            Fn[bad] = Fp
        ta = np.where(bad, 1.0, t[act])
        tn = (1 + np.sqrt(1 + 4 * ta**2)) / 2
        y[act] = new + ((ta - 1) / tn)[:, None] * (new - ba)
        rel = (Fb[act] - Fn) / np.maximum(np.abs(Fb[act]), 1e-300)
        b[act] = new
        Fb[act] = Fn
        t[act] = tn
        n_iter[act] = it
        if history:
            trace.append(Fb.copy())

        stop = rel <= ftol
        if it % check_every == 0 or np.any(stop) or it == max_iter:
            r = prob.mapping_norm(new, Qa)
            resid[act] = r
            done = (r <= tol) | stop
            converged[act[done]] = True

    return b, Fb, converged, n_iter, resid, (np.array(trace) if history else None)


def _unpack(prob, word, coef, obj, conv, it, res):
    blocks = tuple(coef[s].copy() for s in prob.groups())
    return GroupFit(
        word=int(word),
        blocks=blocks,
        objective=float(obj),
        group_norms=np.array([blk.max() for blk in blocks]),
        converged=bool(conv),
        n_iter=int(it),
        residual=float(res),
    )


def fit_rows(X, Y, lambda2, words=None, tol=1e-8, ftol=1e-13, max_iter=20000, threads=1):
    """Solve the group-sparse regression for every row of ``X``.

    Parameters
    ----------
    X : ndarray, shape (B, M)
        Rows to regress.
    Y : sequence of ndarray
        Cluster matrices, each of shape ``(n_l, M)``.
    lambda2 : float
        Weight of the group penalty.
    words : array-like of int, optional
        Word ids attached to the fits; defaults to ``range(B)``.

    Returns
    -------
    list of GroupFit
        Rows that hit ``max_iter`` come back with ``converged=False`` and a
        :class:`RuntimeWarning`.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    prob = GroupProblem(Y, lambda2)
    words = np.arange(X.shape[0]) if words is None else np.asarray(words)
    blocks = chunks(X.shape[0], _CHUNK)
    parts = parallel_map(lambda I: _solve_batch(prob, X[I], tol, ftol, max_iter), blocks, threads)
    fits = []
    for I, (b, F, conv, it, res, _) in zip(blocks, parts):
        for r, i in enumerate(I):
            fits.append(_unpack(prob, words[i], b[r], F[r], conv[r], it[r], res[r]))
    failed = [f.word for f in fits if not f.converged]
    if failed:
        warnings.warn(
            f"{len(failed)} regression problems stopped at max_iter ({NoConvergence(failed[0])})",
            RuntimeWarning,
            stacklevel=2,
        )
    return fits


def group_sparse_fit(x_row, Y, lambda2, tol=1e-8, max_iter=20000, ftol=1e-13, word=0) -> GroupFit:
    """Single-row version of :func:`fit_rows`."""
    return fit_rows(np.asarray(x_row)[None, :], Y, lambda2, words=[word], tol=tol, ftol=ftol,
                    max_iter=max_iter)[0]


def group_objective(x_row, Y, lambda2, coef):
    """Objective value of a coefficient vector, for checking solvers."""
    prob = GroupProblem(Y, lambda2)
    x = np.asarray(x_row, dtype=np.float64)[None, :]
    c = np.asarray(coef, dtype=np.float64)[None, :]
    return float(prob.objective(c, x @ prob.stacked.T, np.einsum("ij,ij->i", x, x))[0])


@dataclass(frozen=True, eq=False)
class TopicEstimate:
    """Estimated topic matrix with per-word provenance.

    ``provenance[w]`` is the topic ``k >= 0`` for novel words,
    :data:`REGRESSED` for words that were never candidates and
    :data:`OUTLIER_REGRESSED` for rejected candidates.
    """

    beta_hat: np.ndarray
    provenance: np.ndarray
    params_used: dict = field(default_factory=dict)

    @property
    def W(self):
        return self.beta_hat.shape[0]

    @property
    def K(self):
        return self.beta_hat.shape[1]

    def provenance_label(self, w):
        p = int(self.provenance[w])
        if p >= 0:
            return f"novel:{p}"
        return "regressed" if p == REGRESSED else "outlier-regressed"


def assemble_beta(clustering, fits: Sequence[GroupFit], N_w, params_used: Optional[dict] = None) -> TopicEstimate:
    """Combine novel-word indicators and regression weights into ``beta_hat``.

    Novel word ``w`` of cluster ``k`` contributes ``N_w`` to column ``k``;
    every other word contributes ``N_w * ||b_wk||_1`` to column ``k``. Each
    column is then scaled to unit sum.

    Raises
    ------
    EmptyColumn
        If some column has no mass.
    """
    N_w = np.asarray(N_w, dtype=np.float64)
    W = N_w.shape[0]
    K = len(clustering.clusters)
    need = clustering.to_regress()
    got = np.array(sorted(int(f.word) for f in fits), dtype=np.intp)
    if not np.array_equal(got, need):
        raise ValueError("fits must cover exactly the non-novel and outlier words")

    B = np.zeros((W, K))
    prov = np.full(W, REGRESSED, dtype=np.intp)
    prov[clustering.outliers] = OUTLIER_REGRESSED
    for k, c in enumerate(clustering.clusters):
        B[c, k] = N_w[c]
        prov[c] = k
    for f in fits:
        B[f.word] = N_w[f.word] * f.group_l1
    col = B.sum(axis=0)
    empty = np.flatnonzero(col <= 0)
    if empty.size:
        raise EmptyColumn(empty[0])
    return TopicEstimate(beta_hat=B / col, provenance=prov, params_used=dict(params_used or {}))
