"""End-to-end topic discovery from a count matrix."""

import dataclasses
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import CountMatrix, StochasticRows, row_normalize
from .extreme import CandidateParams, find_candidates
from .regress import assemble_beta, fit_rows
from .ssc import SscParams, cluster_candidates


@dataclass(frozen=True)
class DiscoverParams:
    """Every tunable of the pipeline.

    ``P=None`` means ``100 * K`` projections. ``min_candidate_count`` keeps
    words with fewer total occurrences out of the candidate search (they are
    still regressed); 0 disables the floor.
    """

    P: Optional[int] = None
    delta: float = 0.05
    lambda1: float = 0.1
    gamma: float = 2.0
    lambda2: float = 0.01
    min_candidate_count: int = 0
    ssc_tol: float = 1e-7
    ssc_max_iter: int = 20000
    residual_factor: float = 10.0
    min_cluster_share: float = 0.25
    kmeans_restarts: int = 20
    regress_tol: float = 1e-8
    regress_max_iter: int = 20000
    seed: int = 0

    def resolved(self, K):
        return dataclasses.replace(self, P=self.P if self.P is not None else 100 * K)

    def to_dict(self):
        return dataclasses.asdict(self)


@dataclass(frozen=True, eq=False)
class Discovery:
    """Topic estimate plus everything needed to diagnose the run."""

    estimate: object
    clustering: object
    candidates: object
    fits: list = field(repr=False)
    kept_words: np.ndarray = field(repr=False)

    def diagnostics(self):
        fits = self.fits
        iters = np.array([f.n_iter for f in fits]) if fits else np.zeros(0, dtype=int)
        se = self.clustering.self_expression
        return {
            "n_candidates": int(len(self.candidates)),
            "cluster_sizes": [int(c.size) for c in self.clustering.clusters],
            "n_outliers": int(self.clustering.outliers.size),
            "n_regressed": len(fits),
            "n_zero_count_words": int(self.estimate.W - self.kept_words.size),
            "regression_iterations_max": int(iters.max()) if iters.size else 0,
            "regression_iterations_mean": float(iters.mean()) if iters.size else 0.0,
            "regression_not_converged": int(sum(not f.converged for f in fits)),
            "ssc_sweeps_max": int(se.sweeps.max()) if se is not None else 0,
            "ssc_kkt_max": float(se.kkt.max()) if se is not None else 0.0,
        }


def discover_from_rows(Xt: StochasticRows, N_w, K, params: DiscoverParams = DiscoverParams(), threads=1):
    """Steps 2-5 on an already row-normalized matrix.

    ``N_w`` gives the weight of every row when the estimate is assembled;
    for a noiseless matrix pass the row sums of ``beta @ theta``.
    """
    params = params.resolved(K)
    N_w = np.asarray(N_w, dtype=np.float64)
    W = Xt.W
    eligible = np.flatnonzero(N_w >= params.min_candidate_count)
    if eligible.size == 0:
        eligible = np.arange(W)
    E_local = find_candidates(
        Xt.rows[eligible], CandidateParams(P=params.P, delta=params.delta, seed=params.seed)
    )
    E = dataclasses.replace(E_local, indices=eligible[E_local.indices])

    ssc_params = SscParams(
        K=K,
        lambda1=params.lambda1,
        gamma=params.gamma,
        solver_tol=params.ssc_tol,
        max_iter=params.ssc_max_iter,
        residual_factor=params.residual_factor,
        min_cluster_share=params.min_cluster_share,
        n_restarts=params.kmeans_restarts,
        seed=params.seed,
    )
    clustering = cluster_candidates(Xt, E, ssc_params, threads=threads)
    words = clustering.to_regress()
    fits = []
    if words.size:
        fits = fit_rows(
            Xt.rows[words],
            clustering.cluster_matrices,
            params.lambda2,
            words=words,
            tol=params.regress_tol,
            max_iter=params.regress_max_iter,
            threads=threads,
        )
    est = assemble_beta(clustering, fits, N_w, params_used={**params.to_dict(), "K": K})
    return Discovery(estimate=est, clustering=clustering, candidates=E, fits=fits, kept_words=np.arange(W))


def discover(X: CountMatrix, K, params: DiscoverParams = DiscoverParams(), threads=1) -> Discovery:
    """Estimate a ``W x K`` topic matrix from the counts ``X``.

    Words that never occur are left out of every step and get an all-zero
    row in the estimate.
    """
    kept = np.flatnonzero(X.row_sums > 0)
    sub = X if kept.size == X.W else X.take_rows(kept)
    Xt = row_normalize(sub)
    res = discover_from_rows(Xt, sub.row_sums, K, params, threads=threads)
    if kept.size == X.W:
        return res
    return _lift(res, kept, X.W)


def _lift(res: Discovery, kept, W):
    est = res.estimate
    beta = np.zeros((W, est.K))
    beta[kept] = est.beta_hat
    prov = np.full(W, -1, dtype=np.intp)
    prov[kept] = est.provenance
    cl = res.clustering
    clustering = dataclasses.replace(
        cl,
        clusters=tuple(kept[c] for c in cl.clusters),
        outliers=kept[cl.outliers],
        residual=np.union1d(kept[cl.residual], np.setdiff1d(np.arange(W), kept)),
        candidates=kept[cl.candidates],
    )
    fits = [dataclasses.replace(f, word=int(kept[f.word])) for f in res.fits]
    E = dataclasses.replace(res.candidates, indices=kept[res.candidates.indices])
    estimate = dataclasses.replace(est, beta_hat=beta, provenance=prov)
    return Discovery(estimate=estimate, clustering=clustering, candidates=E, fits=fits, kept_words=kept)
