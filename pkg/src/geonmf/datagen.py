"""Seeded generators for separable topic models.

Two corpora are provided: Dirichlet-weighted synthetic topics and the
swimmer image corpus, in which pixels are words and each of the 16 single
limb positions is a topic.
"""

import itertools
from dataclasses import dataclass

import numpy as np

from ._util import substream
from .core import CountMatrix, GroundTruth
from .errors import DegenerateTheta


@dataclass(frozen=True)
class SyntheticSpec:
    W: int = 500
    K: int = 5
    M: int = 500
    N: int = 50
    rho: float = 0.2
    alpha: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.K < 1 or not self.K < min(self.M, self.W):
            raise ValueError("need 1 <= K < min(M, W)")
        if not 0 < self.rho < 1:
            raise ValueError("rho must lie in (0, 1)")
        if round(self.rho * self.W) < self.K:
            raise ValueError("need at least one novel word per topic")
        if self.N < 1:
            raise ValueError("N must be positive")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")

    @property
    def n_novel_per_topic(self):
        return round(self.rho * self.W) // self.K


def _uniform_simplex(rng, n, K):
    e = rng.standard_exponential((n, K))
    return e / e.sum(axis=1, keepdims=True)


def _dirichlet(rng, alpha, K, M):
    g = rng.standard_gamma(alpha, size=(K, M))
    s = g.sum(axis=0)
    # Tiny alpha can underflow every coordinate of a column.
    while np.any(s == 0):
        bad = s == 0
        g[:, bad] = rng.standard_gamma(alpha, size=(K, int(bad.sum())))
        s = g.sum(axis=0)
    return g / s


def sample_documents(A, N, seed, stage="docs"):
    """Draw ``N`` words per document from the columns of ``A``.

    Document ``d`` uses its own random stream, so the corpus does not depend
    on generation order.
    """
    W, M = A.shape
    rows, cols, vals = [], [], []
    for d in range(M):
        p = A[:, d] / A[:, d].sum()
        c = substream(seed, stage, d).multinomial(N, p)
        nz = np.flatnonzero(c)
        rows.append(nz)
        cols.append(np.full(nz.size, d))
        vals.append(c[nz])
    return CountMatrix.from_triplets(np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), (W, M))


def synthetic_ground_truth(spec: SyntheticSpec, max_retries=10) -> GroundTruth:
    W, K, M = spec.W, spec.K, spec.M
    per = spec.n_novel_per_topic
    n_novel = per * K
    rng = substream(spec.seed, "beta")
    beta = np.zeros((W, K))
    novel_topic = np.arange(n_novel) % K
    beta[np.arange(n_novel), novel_topic] = rng.uniform(0.0, 1.0, size=n_novel)
    beta[n_novel:] = _uniform_simplex(rng, W - n_novel, K)
    # Uniform[0,1] can return exactly 0, which would break separability.
    while np.any(beta[:n_novel].sum(axis=1) == 0):  # pragma: no cover
        zero = np.flatnonzero(beta[:n_novel].sum(axis=1) == 0)
        beta[zero, novel_topic[zero]] = rng.uniform(0.0, 1.0, size=zero.size)
    beta /= beta.sum(axis=0, keepdims=True)

    alpha = np.full(K, float(spec.alpha))
    for attempt in range(max_retries):
        theta = _dirichlet(substream(spec.seed, "theta", attempt), spec.alpha, K, M)
        if np.all((beta @ theta).sum(axis=1) > 0):
            break
    else:
        raise DegenerateTheta(f"a word has zero probability in every document after {max_retries} draws")

    novel_sets = [np.flatnonzero(novel_topic == k) for k in range(K)]
    gt = GroundTruth(
        beta=beta,
        theta=theta,
        novel_sets=novel_sets,
        non_novel=np.arange(n_novel, W),
        rho=n_novel / W,
        alpha=alpha,
    )
    return gt


def generate_synthetic(spec: SyntheticSpec):
    """Ground truth and sampled count matrix for a synthetic corpus.

    Returns
    -------
    gt : GroundTruth
    X : CountMatrix
        ``N`` words per document drawn from the columns of ``beta @ theta``.
    """
    gt = synthetic_ground_truth(spec)
    X = sample_documents(gt.beta @ gt.theta, spec.N, spec.seed)
    return gt, X


# Swimmer geometry: a 4-wide torso of height TORSO_HEIGHT centered in the
# image with one limb hinged at each of its corners. A limb is LIMB_LENGTH
# pixels along one of four directions, none of which overlap.
IMAGE_SIDE = 32
TORSO_TOP = 12
TORSO_LEFT = 14
TORSO_WIDTH = 4
TORSO_HEIGHT = 8
LIMB_LENGTH = 6
LIMB_DIRECTIONS = {
    "LA": ((0, 0), [(-1, 0), (-1, -1), (0, -1), (1, -1)]),
    "RA": ((0, TORSO_WIDTH - 1), [(-1, 0), (-1, 1), (0, 1), (1, 1)]),
    "LL": ((TORSO_HEIGHT - 1, 0), [(1, 0), (1, -1), (0, -1), (-1, -1)]),
    "RL": ((TORSO_HEIGHT - 1, TORSO_WIDTH - 1), [(1, 0), (1, 1), (0, 1), (-1, 1)]),
}


@dataclass(frozen=True)
class SwimmerSpec:
    image_side: int = IMAGE_SIDE
    M: int = 256
    N: int = 200
    body_value: float = 10.0
    background_value: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.image_side != IMAGE_SIDE or self.M != 256:
            raise ValueError("the swimmer corpus is 256 images of 32 x 32 pixels")
        if self.N < 1 or self.body_value <= 0 or self.background_value < 0:
            raise ValueError("invalid swimmer parameters")

    @property
    def W(self):
        return self.image_side**2

    @property
    def K(self):
        return 16


def swimmer_parts():
    """Pixel indices of the torso and of the 16 limb positions.

    Topic ``4 * limb + position`` is limb ``limb`` (LA, RA, LL, RL) in
    position ``position``.
    """
    S = IMAGE_SIDE
    torso = [
        (TORSO_TOP + r) * S + TORSO_LEFT + c for r in range(TORSO_HEIGHT) for c in range(TORSO_WIDTH)
    ]
    limbs = []
    for (r0, c0), dirs in LIMB_DIRECTIONS.values():
        r0 += TORSO_TOP
        c0 += TORSO_LEFT
        for dr, dc in dirs:
            limbs.append(np.array([(r0 + dr * s) * S + c0 + dc * s for s in range(1, LIMB_LENGTH + 1)]))
    return np.array(torso), limbs


def swimmer_topic_names():
    return [f"{name}{p + 1}" for name in LIMB_DIRECTIONS for p in range(4)]


def generate_swimmer(spec: SwimmerSpec = SwimmerSpec()):
    """Swimmer corpus with its ground truth.

    Returns
    -------
    gt : GroundTruth
        ``beta[:, k]`` is uniform over the pixels of limb position ``k``;
        ``theta[k, d] = 1/4`` when image ``d`` shows that position.
    X : CountMatrix, shape (1024, 256)
        ``N`` pixels drawn per image.
    clean : ndarray, shape (256, 32, 32)
        Noise-free images, each normalized to a distribution over pixels.
    """
    S, W, K = spec.image_side, spec.W, spec.K
    torso, limbs = swimmer_parts()
    combos = list(itertools.product(range(4), repeat=4))
    clean = np.empty((len(combos), W))
    theta = np.zeros((K, len(combos)))
    for d, combo in enumerate(combos):
        img = np.full(W, float(spec.background_value))
        img[torso] = spec.body_value
        for limb, pos in enumerate(combo):
            img[limbs[4 * limb + pos]] = spec.body_value
            theta[4 * limb + pos, d] = 0.25
        clean[d] = img / img.sum()

    beta = np.zeros((W, K))
    for k, pix in enumerate(limbs):
        beta[pix, k] = 1.0 / pix.size
    novel = np.concatenate(limbs)
    gt = GroundTruth(
        beta=beta,
        theta=theta,
        novel_sets=limbs,
        non_novel=np.setdiff1d(np.arange(W), novel),
        rho=novel.size / W,
        alpha=None,
    )
    X = sample_documents(clean.T, spec.N, spec.seed)
    return gt, X, clean.reshape(-1, S, S)
