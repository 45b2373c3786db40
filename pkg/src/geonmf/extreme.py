"""Randomized search for extreme rows of a row-stochastic matrix.

Each round draws a direction uniformly from the unit sphere, takes the rows
with the largest and smallest projection, and admits every row within L1
distance ``delta`` of either winner. The union over rounds is the candidate
set of novel words.
"""

from dataclasses import dataclass

import numpy as np

from ._util import substream
from .core import StochasticRows

STAGE = "extreme"
_BLOCK = 256


@dataclass(frozen=True)
class CandidateParams:
    """Number of projections ``P``, L1 tolerance ``delta`` and master seed."""

    P: int = 1000
    delta: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if int(self.P) != self.P or self.P < 1:
            raise ValueError("P must be a positive integer")
        if not self.delta >= 0:
            raise ValueError("delta must be >= 0")

    @classmethod
    def default_for(cls, K=None, **kw):
        return cls(P=100 * K if K else 1000, **kw)


@dataclass(frozen=True)
class CandidateSet:
    """Candidate rows in ascending order, with how many rounds chose each."""

    indices: np.ndarray
    hit_counts: np.ndarray

    def __len__(self):
        return int(self.indices.size)

    def __contains__(self, i):
        return bool(np.any(self.indices == i))


def directions(M, rounds, seed):
    """Unit directions for the given round numbers, shape ``(len(rounds), M)``.

    Round ``p`` always gets the same direction for a given seed, however many
    rounds are requested, so candidate sets grow monotonically in ``P``.
    """
    out = np.empty((len(rounds), M))
    for r, p in enumerate(rounds):
        d = substream(seed, STAGE, p).standard_normal(M)
        norm = np.linalg.norm(d)
        while norm == 0:  # pragma: no cover - probability zero
            d = substream(seed, STAGE, p, 1).standard_normal(M)
            norm = np.linalg.norm(d)
        out[r] = d / norm
    return out


def extreme_pairs(rows, P, seed):
    """``(argmax, argmin)`` row index for every round, lowest index on ties."""
    rows = np.asarray(rows, dtype=np.float64)
    n, M = rows.shape
    imax = np.empty(P, dtype=np.intp)
    imin = np.empty(P, dtype=np.intp)
    for start in range(0, P, _BLOCK):
        rounds = np.arange(start, min(start + _BLOCK, P))
        proj = rows @ directions(M, rounds, seed).T
        imax[rounds] = np.argmax(proj, axis=0)
        imin[rounds] = np.argmin(proj, axis=0)
    return imax, imin


def find_candidates(Xt, params: CandidateParams) -> CandidateSet:
    """Candidate novel words of ``Xt`` under random projections.

    Parameters
    ----------
    Xt : StochasticRows or ndarray, shape (W, M)
        Row-normalized word-by-document matrix.
    params : CandidateParams

    Returns
    -------
    CandidateSet
    """
    rows = Xt.rows if isinstance(Xt, StochasticRows) else np.asarray(Xt, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[0] < 1:
        raise ValueError("need at least one row")
    imax, imin = extreme_pairs(rows, params.P, params.seed)

    ball = {}

    def near(i):
        if i not in ball:
            dist = np.abs(rows - rows[i]).sum(axis=1)
            ball[i] = np.flatnonzero(dist <= params.delta)
        return ball[i]

    hits = np.zeros(rows.shape[0], dtype=np.int64)
    for a, b in zip(imax, imin):
        hits[np.union1d(near(int(a)), near(int(b)))] += 1
    idx = np.flatnonzero(hits)
    return CandidateSet(indices=idx, hit_counts=hits[idx])
