"""Gaussian-process belief over the information map and its UCB normalization.

Observations live on a finite set of regions, so repeated samples of one
region are sufficient-statistic equivalent to a single sample at their mean
with noise variance divided by the count. ``fit_posterior`` exploits this and
solves a system no larger than the number of distinct observed regions, which
keeps refits cheap however long a run gets.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, NamedTuple

import numpy as np
from scipy import linalg

from .errors import SingularGram
from .world import EnvironmentGraph

JITTER_THRESHOLD = 1e-8
JITTER_SCALE = 1e-8


class Observation(NamedTuple):
    region: int
    value: float
    time: int
    source: int


class Dataset:
    """Append-only multiset of observations, optionally capped to a recency window.

    With ``n_max > 0`` only the ``n_max`` most recent observations are kept.
    """

    def __init__(self, observations: Iterable[Observation] = (), n_max: int = 0):
        if n_max < 0:
            raise ValueError("n_max must be >= 0")
        self.n_max = n_max
        self._obs: list[Observation] = []
        self._regions: list[int] = []
        self._values: list[float] = []
        self._arrays: tuple[np.ndarray, np.ndarray] | None = None
        self.extend(observations)

    def extend(self, observations: Iterable[Observation]) -> None:
        new = list(observations)
        if not new:
            return
        self._obs.extend(new)
        self._regions.extend(o.region for o in new)
        self._values.extend(o.value for o in new)
        if self.n_max and len(self._obs) > self.n_max:
            drop = len(self._obs) - self.n_max
            del self._obs[:drop], self._regions[:drop], self._values[:drop]
        self._arrays = None

    def __len__(self) -> int:
        return len(self._obs)

    def __iter__(self):
        return iter(self._obs)

    def __getitem__(self, i):
        return self._obs[i]

    def copy(self) -> "Dataset":
        return Dataset(self._obs, self.n_max)

    def _as_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        if self._arrays is None:
            self._arrays = (np.array(self._regions, dtype=np.intp), np.array(self._values, dtype=float))
        return self._arrays

    @property
    def regions(self) -> np.ndarray:
        return self._as_arrays()[0]

    @property
    def values(self) -> np.ndarray:
        return self._as_arrays()[1]


@dataclass(frozen=True)
class KernelParams:
    lengthscale: float = 1.0
    signal_variance: float = 1.0
    noise_variance: float = 0.01
    prior_mean: float = 0.0

    def __post_init__(self):
        if not self.lengthscale > 0:
            raise ValueError("lengthscale must be > 0")
        if not self.signal_variance > 0:
            raise ValueError("signal_variance must be > 0")
        if self.noise_variance < 0:
            raise ValueError("noise_variance must be >= 0")

    def __call__(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Squared-exponential covariance between coordinate rows of ``a`` and ``b``."""
        d2 = ((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=-1)
        return self.signal_variance * np.exp(-0.5 * d2 / self.lengthscale**2)

    def effective_noise(self) -> float:
        if self.noise_variance < JITTER_THRESHOLD:
            return self.noise_variance + JITTER_SCALE * self.signal_variance
        return self.noise_variance


@lru_cache(maxsize=16)
def _region_kernel(width: int, height: int, kernel: KernelParams) -> np.ndarray:
    # Cell-center coordinates depend only on the grid size, so the full
    # region-by-region covariance can be shared by every refit on that grid.
    idx = np.arange(width * height)
    coords = np.column_stack([idx % width + 0.5, idx // width + 0.5]).astype(float)
    K = kernel(coords, coords)
    K.setflags(write=False)
    return K


class GPPosterior(NamedTuple):
    mean: np.ndarray
    std: np.ndarray


class BeliefMap(NamedTuple):
    phi_ucb: np.ndarray
    rho: np.ndarray


def fit_posterior(
    data: Dataset,
    kernel: KernelParams,
    graph: EnvironmentGraph,
    jitter: bool = True,
) -> GPPosterior:
    """GP posterior mean and std at every region.

    With ``jitter=False`` the noise variance is used as given; a zero noise
    variance with repeated regions then raises :class:`SingularGram`.
    """
    n = graph.n_regions
    mu0 = kernel.prior_mean
    if len(data) == 0:
        return GPPosterior(np.full(n, mu0), np.full(n, np.sqrt(kernel.signal_variance)))

    regions = data.regions
    if not graph.accessible[regions].all():
        raise ValueError("dataset references no-fly regions")
    counts = np.bincount(regions, minlength=n)
    sums = np.bincount(regions, weights=data.values, minlength=n)
    obs = np.flatnonzero(counts)
    noise = kernel.effective_noise() if jitter else kernel.noise_variance
    if noise == 0.0 and counts.max() > 1:
        raise SingularGram("zero noise variance with repeated inputs; enable jitter")

    K_all = _region_kernel(graph.width, graph.height, kernel)
    resid = sums[obs] / counts[obs] - mu0
    gram = K_all[np.ix_(obs, obs)]
    gram[np.diag_indices_from(gram)] += noise / counts[obs]
    try:
        chol = linalg.cho_factor(gram, lower=True, check_finite=False)
    except linalg.LinAlgError as exc:
        raise SingularGram(str(exc)) from exc

    k_star = K_all[:, obs]  # (n, u)
    mean = mu0 + k_star @ linalg.cho_solve(chol, resid, check_finite=False)
    v = linalg.cho_solve(chol, k_star.T, check_finite=False)
    var = kernel.signal_variance - np.einsum("ij,ji->i", k_star, v)
    return GPPosterior(mean, np.sqrt(np.maximum(var, 0.0)))


def ucb_map(post: GPPosterior, beta: float) -> np.ndarray:
    if beta < 0:
        raise ValueError("beta must be >= 0")
    return post.mean + beta * post.std


def normalize_belief(phi: np.ndarray, graph: EnvironmentGraph, eps: float = 1e-6) -> BeliefMap:
    """Clamp ``phi`` at ``eps`` on accessible regions and normalize to a distribution."""
    if not eps > 0:
        raise ValueError("eps must be > 0")
    phi = np.asarray(phi, dtype=float)
    clamped = np.where(graph.accessible, np.maximum(phi, eps), 0.0)
    return BeliefMap(phi, clamped / clamped.sum())


def gp_ucb(
    data: Dataset,
    kernel: KernelParams,
    beta: float,
    graph: EnvironmentGraph,
    eps: float = 1e-6,
) -> BeliefMap:
    """Fit, take the upper confidence bound, normalize. Returns ``(phi_ucb, rho)``."""
    post = fit_posterior(data, kernel, graph)
    return normalize_belief(ucb_map(post, beta), graph, eps)
