"""Gaussian-process machinery over grid vertices.

Posteriors are computed from the full observation log. Repeated readings at
one vertex are folded into their sample mean with noise variance
``noise_var / n``, which yields exactly the same posterior as treating each
reading as its own row but keeps every solve at most ``|V| x |V|``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg

from .errors import InvalidArgumentError, NumericalError
from .graph import GridGraph

JITTER = 1e-9


@dataclass(frozen=True)
class Kernel:
    """Covariance over grid vertices.

    ``kind`` is ``"se"`` (squared exponential on coordinates scaled into
    the unit square) or ``"diagonal"`` (independent vertices).
    """

    kind: str = "se"
    variance: float = 1.0
    lengthscale: float = 0.5

    def __post_init__(self):
        if self.kind not in ("se", "diagonal"):
            raise InvalidArgumentError(f"unknown kernel kind {self.kind!r}")
        if not self.variance > 0:
            raise InvalidArgumentError("kernel variance must be positive")
        if self.kind == "se" and not self.lengthscale > 0:
            raise InvalidArgumentError("length scale must be positive")

    def matrix(self, graph: GridGraph) -> np.ndarray:
        n = graph.vertex_count
        if self.kind == "diagonal":
            return self.variance * np.eye(n)
        xy = unit_coords(graph)
        sq = ((xy[:, None, :] - xy[None, :, :]) ** 2).sum(axis=-1)
        return self.variance * np.exp(-0.5 * sq / self.lengthscale**2)


def unit_coords(graph: GridGraph) -> np.ndarray:
    """Vertex coordinates rescaled so the grid spans ``[0, 1]^2``."""
    scale = np.array([max(graph.rows - 1, 1), max(graph.cols - 1, 1)], dtype=float)
    return graph.coords / scale


def dominating_diagonal(cov: np.ndarray) -> np.ndarray:
    """Diagonal matrix with absolute row sums of ``cov``; it dominates ``cov``
    in the PSD order by diagonal dominance."""
    return np.diag(np.abs(cov).sum(axis=1))


@dataclass(frozen=True)
class RewardField:
    """True reward ``values`` (non-negative) and optional safety values.

    ``shift`` records the constant added to a raw draw to make it
    non-negative.
    """

    values: np.ndarray
    safety: np.ndarray | None = None
    shift: float = 0.0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if np.any(values < 0):
            raise InvalidArgumentError("reward values must be non-negative")
        object.__setattr__(self, "values", values)
        if self.safety is not None:
            object.__setattr__(self, "safety", np.asarray(self.safety, dtype=np.float64))


def _aggregate(n: int, vertices: Sequence[int], values: Sequence[float] | None = None):
    counts = np.bincount(np.asarray(vertices, dtype=np.int64), minlength=n)
    support = np.flatnonzero(counts)
    if values is None:
        return support, counts[support], None
    sums = np.bincount(
        np.asarray(vertices, dtype=np.int64), weights=np.asarray(values, dtype=np.float64), minlength=n
    )
    return support, counts[support], sums[support] / counts[support]


def _factor(a: np.ndarray, noise_var: float):
    # noise already regularises the system; jitter only for exact observations
    if noise_var == 0.0:
        a = a + JITTER * np.eye(a.shape[0])
    for extra in (0.0, JITTER):
        try:
            return scipy.linalg.cho_factor(a + extra * np.eye(a.shape[0]), lower=True)
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
            err = exc
    raise NumericalError(f"covariance system not positive definite: {err}")


def posterior_cov_from_counts(prior_cov: np.ndarray, counts: np.ndarray, noise_var: float) -> np.ndarray:
    """Posterior covariance after ``counts[v]`` readings at each vertex.

    Only locations matter for the covariance, so this also serves
    imaginary-query conditioning.
    """
    counts = np.asarray(counts)
    support = np.flatnonzero(counts)
    if support.size == 0:
        return prior_cov.copy()
    k_vs = prior_cov[:, support]
    a = prior_cov[np.ix_(support, support)] + np.diag(noise_var / counts[support])
    cf = _factor(a, noise_var)
    cov = prior_cov - k_vs @ scipy.linalg.cho_solve(cf, k_vs.T)
    return 0.5 * (cov + cov.T)


@dataclass(frozen=True, eq=False)
class GpState:
    """Prior plus the ordered observation log; the posterior is derived.

    Instances are immutable; :meth:`update` returns a new state.
    """

    prior_mean: np.ndarray
    prior_cov: np.ndarray
    noise_var: float
    obs_vertices: tuple[int, ...] = ()
    obs_values: tuple[float, ...] = ()

    @classmethod
    def prior(cls, kernel: Kernel, graph: GridGraph, noise_var: float, mean=0.0) -> "GpState":
        """``mean`` is a constant or one value per vertex."""
        if noise_var < 0:
            raise InvalidArgumentError("noise variance must be non-negative")
        n = graph.vertex_count
        m = np.asarray(mean, dtype=np.float64)
        if m.ndim > 1 or (m.ndim == 1 and m.shape != (n,)):
            raise InvalidArgumentError(f"prior mean must be a scalar or have {n} entries")
        return cls(np.broadcast_to(m, (n,)).copy(), kernel.matrix(graph), float(noise_var))

    @property
    def n_vertices(self) -> int:
        return self.prior_mean.shape[0]

    @cached_property
    def _posterior(self):
        if not self.obs_vertices:
            return self.prior_mean.copy(), self.prior_cov.copy()
        support, counts, ybar = _aggregate(self.n_vertices, self.obs_vertices, self.obs_values)
        k_vs = self.prior_cov[:, support]
        a = self.prior_cov[np.ix_(support, support)] + np.diag(self.noise_var / counts)
        cf = _factor(a, self.noise_var)
        mean = self.prior_mean + k_vs @ scipy.linalg.cho_solve(cf, ybar - self.prior_mean[support])
        cov = self.prior_cov - k_vs @ scipy.linalg.cho_solve(cf, k_vs.T)
        return mean, 0.5 * (cov + cov.T)

    @property
    def mean(self) -> np.ndarray:
        return self._posterior[0]

    @property
    def cov(self) -> np.ndarray:
        return self._posterior[1]

    @cached_property
    def std(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.cov), 0.0, None))

    @cached_property
    def counts(self) -> np.ndarray:
        return np.bincount(np.asarray(self.obs_vertices, dtype=np.int64), minlength=self.n_vertices)

    def update(self, batch: Iterable[tuple[int, float]]) -> "GpState":
        batch = list(batch)
        if not batch:
            return self
        verts, vals = zip(*batch)
        if min(verts) < 0 or max(verts) >= self.n_vertices:
            raise InvalidArgumentError("observation vertex out of range")
        return GpState(
            self.prior_mean,
            self.prior_cov,
            self.noise_var,
            self.obs_vertices + tuple(int(v) for v in verts),
            self.obs_values + tuple(float(y) for y in vals),
        )


def posterior_update(state: GpState, batch: Iterable[tuple[int, float]]) -> GpState:
    return state.update(batch)


def _sqrt_factor(cov: np.ndarray) -> np.ndarray:
    lam, vec = np.linalg.eigh(cov)
    floor = -1e-9 * max(1.0, float(lam.max(initial=0.0)))
    if lam.min() < floor:
        raise NumericalError(f"kernel matrix not PSD (min eigenvalue {lam.min():.3e})")
    return vec * np.sqrt(np.clip(lam, 0.0, None))


def sample_prior(kernel: Kernel, graph: GridGraph, rng: np.random.Generator, size: int = 1,
                 mean: float = 0.0) -> np.ndarray:
    """Raw draws from the prior, shape ``(size, |V|)``."""
    root = _sqrt_factor(kernel.matrix(graph))
    z = rng.standard_normal((size, graph.vertex_count))
    return mean + z @ root.T


def sample_prior_field(kernel: Kernel, graph: GridGraph, seed) -> RewardField:
    """One prior draw shifted so its minimum is exactly zero."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    raw = sample_prior(kernel, graph, rng)[0]
    shift = -float(raw.min())
    return RewardField(raw + shift, shift=shift)


def info_gain(cov: np.ndarray, noise_var: float, samples: Sequence[int]) -> float:
    """Mutual information ``0.5 * log det(I + cov[s, s] / noise_var)`` in nats.

    ``samples`` may repeat vertices; the determinant is evaluated on the
    distinct vertices through ``det(I + A B) = det(I + B A)``.
    """
    if len(samples) == 0:
        raise InvalidArgumentError("info_gain needs at least one sample")
    if not noise_var > 0:
        raise InvalidArgumentError("info_gain needs positive noise variance")
    support, counts, _ = _aggregate(cov.shape[0], samples)
    root = np.sqrt(counts)
    m = np.eye(support.size) + (root[:, None] * cov[np.ix_(support, support)] * root[None, :]) / noise_var
    sign, logdet = np.linalg.slogdet(m)
    if sign <= 0:
        raise NumericalError("information-gain determinant is not positive")
    return 0.5 * float(logdet)


def diagonal_posterior_variance(prior_var: float, n_obs: int, noise_var: float) -> float:
    if not prior_var > 0:
        raise InvalidArgumentError("prior variance must be positive")
    if n_obs == 0:
        return float(prior_var)
    return 1.0 / (n_obs / noise_var + 1.0 / prior_var)


def schur_complement(x: np.ndarray, keep: Sequence[int]) -> np.ndarray:
    """Schur complement of the block outside ``keep`` in ``x``:
    ``X11 - X12 X22^{-1} X21`` with ``X11 = x[keep, keep]``."""
    keep = np.asarray(keep, dtype=np.int64)
    rest = np.setdiff1d(np.arange(x.shape[0]), keep)
    x11 = x[np.ix_(keep, keep)]
    if rest.size == 0:
        return x11.copy()
    x12 = x[np.ix_(keep, rest)]
    x22 = x[np.ix_(rest, rest)]
    return x11 - x12 @ np.linalg.solve(x22, x12.T)
