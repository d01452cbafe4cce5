"""Quantization models for local descriptors: a k-means vocabulary for the
histogram encoding and a diagonal-covariance Gaussian mixture for the
aggregate encodings.

Both fits are fully deterministic given (data order, seed): seeded
D^2-weighted initialization, Lloyd iterations to an assignment fixpoint
with farthest-point reseeding of empty clusters, and expectation-
maximization started from the k-means solution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import (
    DimMismatchError,
    InsufficientDataError,
    InvalidParamsError,
    NumericalFailureError,
)

VARIANCE_FLOOR_SCALE = 1e-4


@dataclass(frozen=True)
class Vocabulary:
    """k-means cluster centers acting as the visual-word dictionary."""

    centroids: np.ndarray  # (k, dim) float64

    def __post_init__(self):
        c = np.ascontiguousarray(self.centroids, dtype=np.float64)
        if c.ndim != 2 or c.shape[0] < 1:
            raise InvalidParamsError(f"centroids must be (k, dim), got {c.shape}")
        if not np.isfinite(c).all():
            raise InvalidParamsError("centroids must be finite")
        if c.shape[0] > 1:
            srt = c[np.lexsort(c.T[::-1])]
            if any((srt[i] == srt[i + 1]).all() for i in range(len(srt) - 1)):
                raise InvalidParamsError("centroids must be pairwise distinct")
        c.flags.writeable = False
        object.__setattr__(self, "centroids", c)

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    @property
    def dim(self) -> int:
        return self.centroids.shape[1]


@dataclass(frozen=True)
class GmmModel:
    """Diagonal-covariance Gaussian mixture."""

    weights: np.ndarray  # (k,)
    means: np.ndarray  # (k, dim)
    variances: np.ndarray  # (k, dim), strictly positive

    def __post_init__(self):
        w = np.ascontiguousarray(self.weights, dtype=np.float64).reshape(-1)
        m = np.ascontiguousarray(self.means, dtype=np.float64)
        v = np.ascontiguousarray(self.variances, dtype=np.float64)
        if m.ndim != 2 or v.shape != m.shape or w.shape[0] != m.shape[0]:
            raise InvalidParamsError(
                f"inconsistent shapes: weights {w.shape}, means {m.shape}, "
                f"variances {v.shape}"
            )
        if not (np.isfinite(w).all() and np.isfinite(m).all() and np.isfinite(v).all()):
            raise InvalidParamsError("mixture parameters must be finite")
        if abs(w.sum() - 1.0) > 1e-9 or (w <= 0.0).any():
            raise InvalidParamsError("weights must be positive and sum to 1")
        if (v <= 0.0).any():
            raise InvalidParamsError("variances must be strictly positive")
        for a in (w, m, v):
            a.flags.writeable = False
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "variances", v)

    @property
    def k(self) -> int:
        return self.means.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]


def _as_data(data) -> np.ndarray:
    try:
        x = np.asarray(data, dtype=np.float64)
    except ValueError:
        raise DimMismatchError(
            "training data must be a list of equal-length vectors"
        ) from None
    if x.ndim != 2:
        raise DimMismatchError(
            "training data must be a list of equal-length vectors"
        )
    if not np.isfinite(x).all():
        raise InvalidParamsError("training data must be finite")
    return np.ascontiguousarray(x)


def _sqdist_to(x: np.ndarray, center: np.ndarray) -> np.ndarray:
    diff = x - center
    return np.einsum("nd,nd->n", diff, diff)


def _plusplus_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """D^2-weighted seeding: each next center sampled proportionally to the
    squared distance to the nearest center chosen so far."""
    n = x.shape[0]
    centroids = np.empty((k, x.shape[1]))
    first = int(rng.integers(n))
    centroids[0] = x[first]
    d2 = _sqdist_to(x, centroids[0])
    for j in range(1, k):
        total = d2.sum()
        if total > 0.0:
            pick = int(rng.choice(n, p=d2 / total))
        else:
            pick = int(rng.integers(n))
        centroids[j] = x[pick]
        np.minimum(d2, _sqdist_to(x, centroids[j]), out=d2)
    return centroids


def _reseed_empty(x, centroids, idx, d2):
    """Move each empty cluster to the point farthest from its own centroid."""
    k = centroids.shape[0]
    counts = np.bincount(idx, minlength=k)
    rounds = 0
    while (counts == 0).any():
        rounds += 1
        if rounds > k + 1:
            raise InsufficientDataError(
                "data has fewer distinct points than clusters"
            )
        taken = d2.copy()
        for j in np.nonzero(counts == 0)[0]:
            far = int(np.argmax(taken))
            centroids[j] = x[far]
            taken[far] = -1.0  # keep later empties from reusing this point
        idx, d2 = _kernels.assign_nearest(x, centroids)
        counts = np.bincount(idx, minlength=k)
    return centroids, idx, d2


def _lloyd(x: np.ndarray, k: int, seed: int, max_iter: int, trace=None):
    rng = np.random.default_rng(seed)
    centroids = _plusplus_init(x, k, rng)
    idx, d2 = _kernels.assign_nearest(x, centroids)
    centroids, idx, d2 = _reseed_empty(x, centroids, idx, d2)
    if trace is not None:
        trace.append(float(d2.sum()))
    for _ in range(max_iter):
        sums = _kernels.vlad_sums(x, idx, k)
        counts = np.bincount(idx, minlength=k).astype(np.float64)
        centroids = sums / counts[:, None]
        new_idx, new_d2 = _kernels.assign_nearest(x, centroids)
        centroids, new_idx, new_d2 = _reseed_empty(x, centroids, new_idx, new_d2)
        if trace is not None:
            trace.append(float(new_d2.sum()))
        converged = (new_idx == idx).all()
        idx, d2 = new_idx, new_d2
        if converged:
            break
    return centroids, idx


def kmeans_fit(
    data,
    k: int,
    seed: int,
    max_iter: int = 100,
    trace: list | None = None,
) -> Vocabulary:
    """Cluster descriptors into ``k`` visual words.

    Runs seeded D^2 initialization then Lloyd iterations until the
    assignment stops changing or ``max_iter`` is reached; empty clusters
    are reseeded to the point farthest from its assigned centroid. When
    ``trace`` is a list, the clustering objective (sum of squared
    distances to assigned centroids) is appended once per iteration.
    """
    x = _as_data(data)
    if k < 1:
        raise InvalidParamsError(f"k must be >= 1, got {k}")
    if x.shape[0] < k:
        raise InsufficientDataError(f"{x.shape[0]} points cannot fill {k} clusters")
    centroids, _ = _lloyd(x, k, seed, max_iter, trace=trace)
    return Vocabulary(centroids)


def _variance_floor(x: np.ndarray) -> float:
    return VARIANCE_FLOOR_SCALE * float(x.var(axis=0).mean())


def gmm_fit(
    data,
    k: int,
    seed: int,
    max_iter: int = 100,
    tol: float = 1e-6,
    trace: list | None = None,
) -> GmmModel:
    """Fit a diagonal-covariance mixture by expectation-maximization.

    Initialization comes from :func:`kmeans_fit` on the same (data, seed):
    means are the centroids, variances the within-cluster variances (floored
    at 1e-4 times the mean per-dimension data variance), weights the cluster
    fractions. Iterations stop when the relative improvement of the mean
    per-point log-likelihood drops below ``tol`` or after ``max_iter``
    rounds. When ``trace`` is a list the log-likelihood is appended once
    per iteration; the sequence is non-decreasing up to roundoff.
    """
    x = _as_data(data)
    n = x.shape[0]
    if k < 1:
        raise InvalidParamsError(f"k must be >= 1, got {k}")
    if n < k:
        raise InsufficientDataError(f"{n} points cannot support {k} components")

    centroids, idx = _lloyd(x, k, seed, max_iter)
    floor = _variance_floor(x)
    counts = np.bincount(idx, minlength=k).astype(np.float64)
    sums = _kernels.vlad_sums(x, idx, k)
    means = sums / counts[:, None]
    sq = _kernels.vlad_sums(x * x, idx, k)
    variances = np.maximum(sq / counts[:, None] - means**2, floor)
    weights = counts / n
    if not (variances > 0.0).all():
        raise NumericalFailureError(
            "training data is fully degenerate (zero variance in every cluster)"
        )

    prev_ll = None
    for _ in range(max_iter):
        log_joint = _kernels.gmm_log_joint(x, means, variances, np.log(weights))
        log_norm = _logsumexp_rows(log_joint)
        ll = float(log_norm.mean())
        if not math.isfinite(ll):
            raise NumericalFailureError("log-likelihood became non-finite")
        if trace is not None:
            trace.append(ll)
        if prev_ll is not None and ll - prev_ll < tol * abs(prev_ll):
            break
        prev_ll = ll

        resp = np.exp(log_joint - log_norm[:, None])
        nk = resp.sum(axis=0)
        if (nk <= 0.0).any():
            raise NumericalFailureError("a component lost all responsibility")
        weights = nk / n
        means = (resp.T @ x) / nk[:, None]
        variances = np.maximum((resp.T @ (x * x)) / nk[:, None] - means**2, floor)
    return GmmModel(weights=weights, means=means, variances=variances)


def _logsumexp_rows(a: np.ndarray) -> np.ndarray:
    peak = a.max(axis=1)
    return peak + np.log(np.exp(a - peak[:, None]).sum(axis=1))


def log_responsibilities(x: np.ndarray, model: GmmModel):
    """Log posterior assignment weights for each row of ``x``.

    Returns ``(log_resp (n, k), log_likelihood (n,))`` computed in the log
    domain, stable far from all component means.
    """
    x = np.ascontiguousarray(np.atleast_2d(np.asarray(x, dtype=np.float64)))
    if x.shape[1] != model.dim:
        raise DimMismatchError(f"vector dim {x.shape[1]} != mixture dim {model.dim}")
    log_joint = _kernels.gmm_log_joint(
        x, model.means, model.variances, np.log(model.weights)
    )
    log_norm = _logsumexp_rows(log_joint)
    return log_joint - log_norm[:, None], log_norm


def posteriors(model: GmmModel, x) -> np.ndarray:
    """Posterior component weights for one vector; non-negative, sums to 1."""
    log_resp, _ = log_responsibilities(np.asarray(x, dtype=np.float64).reshape(1, -1), model)
    return np.exp(log_resp[0])
