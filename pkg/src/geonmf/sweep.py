"""Error-versus-size sweeps over seeded synthetic corpora."""

import dataclasses
from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from ._util import parallel_map, subseed
from .datagen import SyntheticSpec, generate_synthetic
from .errors import GeoNMFError
from .evaluate import matched_error
from .pipeline import DiscoverParams, discover


@dataclass(frozen=True)
class SweepRow:
    """Summary of the trials at one grid value.

    ``std_error`` is the population standard deviation (zero for a single
    trial); both statistics are NaN when every trial failed.
    """

    vary: str
    value: int
    errors: List[float]
    failures: List[str]

    @property
    def mean_error(self):
        return float(np.mean(self.errors)) if self.errors else float("nan")

    @property
    def std_error(self):
        return float(np.std(self.errors)) if self.errors else float("nan")


def trial_seed(seed, t):
    """Seed of trial ``t``; shared by every grid value."""
    return subseed(seed, "trial", t) % 2**31


def _one(job):
    spec, params = job
    try:
        gt, X = generate_synthetic(spec)
        res = discover(X, spec.K, params)
        return matched_error(res.estimate.beta_hat, gt.beta).frobenius_error, None
    except GeoNMFError as exc:
        return None, type(exc).__name__


def run_sweep(
    base: SyntheticSpec,
    vary: str,
    values: Sequence[int],
    trials: int,
    params: DiscoverParams = DiscoverParams(),
    seed: int = 0,
    threads: int = 1,
) -> List[SweepRow]:
    """Mean matched error over ``trials`` corpora for each value of ``M`` or ``N``.

    Trial ``t`` uses the same derived seed for generation and discovery at
    every grid value. A pipeline error fails that trial only; its class name
    is recorded in the row.
    """
    if vary not in ("M", "N"):
        raise ValueError("vary must be 'M' or 'N'")
    if not values:
        raise ValueError("grid is empty")
    if trials < 1:
        raise ValueError("trials must be positive")
    jobs = []
    for v in values:
        for t in range(trials):
            s = trial_seed(seed, t)
            spec = dataclasses.replace(base, **{vary: int(v)}, seed=s)
            jobs.append((spec, dataclasses.replace(params, seed=s)))
    out = parallel_map(_one, jobs, threads)
    rows = []
    for i, v in enumerate(values):
        chunk = out[i * trials : (i + 1) * trials]
        rows.append(
            SweepRow(
                vary=vary,
                value=int(v),
                errors=[e for e, f in chunk if f is None],
                failures=[f for _, f in chunk if f is not None],
            )
        )
    return rows
