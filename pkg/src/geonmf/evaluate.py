"""Permutation-matched comparison of estimated and true topic matrices."""

import json
from dataclasses import asdict, dataclass
from typing import List, Optional

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import ShapeMismatch


@dataclass(frozen=True)
class EvalReport:
    """Error of an estimate after optimal column matching.

    ``permutation[k]`` is the estimated column matched to true column ``k``.
    """

    frobenius_error: float
    permutation: List[int]
    per_topic_l2: List[float]
    cosines: List[float]
    recovered_count: int
    cos_threshold: float
    purity: Optional[float] = None

    def to_dict(self):
        return asdict(self)

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, **kw)


def _check(beta_hat, beta):
    beta_hat = np.asarray(beta_hat, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    if beta_hat.ndim != 2 or beta_hat.shape != beta.shape:
        raise ShapeMismatch(f"estimate {beta_hat.shape} vs truth {beta.shape}")
    return beta_hat, beta


def match_columns(beta_hat, beta):
    """Column permutation minimizing ``||beta_hat[:, perm] - beta||_F``."""
    beta_hat, beta = _check(beta_hat, beta)
    # cost[k, j] = ||beta[:, k] - beta_hat[:, j]||^2; summing squared
    # distances makes the assignment optimum the Frobenius optimum.
    cost = ((beta[:, :, None] - beta_hat[:, None, :]) ** 2).sum(axis=0)
    rows, cols = linear_sum_assignment(cost)
    perm = np.empty(beta.shape[1], dtype=np.intp)
    perm[rows] = cols
    return perm


def _cosines(a, b):
    na = np.linalg.norm(a, axis=0)
    nb = np.linalg.norm(b, axis=0)
    dots = (a * b).sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        c = np.where((na > 0) & (nb > 0), dots / (na * nb), 0.0)
    return c


def matched_error(beta_hat, beta, cos_threshold=0.8) -> EvalReport:
    beta_hat, beta = _check(beta_hat, beta)
    perm = match_columns(beta_hat, beta)
    diff = beta_hat[:, perm] - beta
    per = np.linalg.norm(diff, axis=0)
    cos = _cosines(beta_hat[:, perm], beta)
    return EvalReport(
        frobenius_error=float(np.sqrt((diff**2).sum())),
        permutation=[int(p) for p in perm],
        per_topic_l2=[float(v) for v in per],
        cosines=[float(v) for v in cos],
        recovered_count=int((cos >= cos_threshold).sum()),
        cos_threshold=float(cos_threshold),
    )


def recovery_count(beta_hat, beta, cos_threshold=0.8) -> int:
    """Ground-truth topics whose matched estimate has cosine >= threshold."""
    return matched_error(beta_hat, beta, cos_threshold).recovered_count


def cluster_purity(clusters, gt_novel_sets) -> float:
    """Fraction of clustered words that fall in their cluster's majority topic.

    ``clusters`` may be a :class:`~geonmf.ssc.NovelWordClustering` or a list
    of index arrays. Words outside every true novel set count as impure.
    """
    clusters = getattr(clusters, "clusters", clusters)
    truth = [set(map(int, s)) for s in gt_novel_sets]
    total = sum(len(c) for c in clusters)
    if total == 0:
        raise ValueError("clustering is empty")
    hit = 0
    for c in clusters:
        c = set(map(int, c))
        hit += max((len(c & t) for t in truth), default=0)
    return hit / total
