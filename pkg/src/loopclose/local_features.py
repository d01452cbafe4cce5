"""Dense local gradient-histogram descriptors and the linear projection
applied to them before the aggregate encodings."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _kernels
from .errors import (
    DegenerateCovarianceError,
    DimMismatchError,
    ImageTooSmallError,
    InsufficientDataError,
    InvalidParamsError,
)
from .imaging import GrayImage

N_CELLS = 4
N_ORI_BINS = 8
DESCRIPTOR_DIM = N_CELLS * N_CELLS * N_ORI_BINS  # 128
CLIP_THRESHOLD = 0.2


@dataclass(frozen=True)
class LocalFeatureSet:
    """Per-image set of local descriptors with their sampling positions.

    ``positions[i]`` is the (x, y) top-left corner of the patch that
    produced ``descriptors[i]``.
    """

    descriptors: np.ndarray  # (n, dim) float64
    positions: np.ndarray  # (n, 2) int64

    def __post_init__(self):
        d = np.ascontiguousarray(self.descriptors, dtype=np.float64)
        p = np.ascontiguousarray(self.positions, dtype=np.int64)
        if d.ndim != 2:
            raise InvalidParamsError(f"descriptors must be 2-D, got shape {d.shape}")
        if p.ndim != 2 or p.shape[1] != 2:
            raise InvalidParamsError(f"positions must be (n, 2), got shape {p.shape}")
        if d.shape[0] != p.shape[0]:
            raise InvalidParamsError(
                f"{d.shape[0]} descriptors but {p.shape[0]} positions"
            )
        if d.size and not np.isfinite(d).all():
            raise InvalidParamsError("descriptor values must be finite")
        d.flags.writeable = False
        p.flags.writeable = False
        object.__setattr__(self, "descriptors", d)
        object.__setattr__(self, "positions", p)

    @property
    def dim(self) -> int:
        return self.descriptors.shape[1]

    @property
    def count(self) -> int:
        return self.descriptors.shape[0]


def _gradients(pixels: np.ndarray):
    """Central differences with replicated borders."""
    p = np.pad(pixels, 1, mode="edge")
    gx = (p[1:-1, 2:] - p[1:-1, :-2]) * 0.5
    gy = (p[2:, 1:-1] - p[:-2, 1:-1]) * 0.5
    return gx, gy


def _normalize_rows(raw: np.ndarray) -> np.ndarray:
    """Unit-normalize, clip large entries, renormalize. Zero rows stay zero."""
    norms = np.sqrt(np.einsum("nd,nd->n", raw, raw))
    nz = norms > 0.0
    raw[nz] /= norms[nz, None]
    np.minimum(raw, CLIP_THRESHOLD, out=raw)
    norms = np.sqrt(np.einsum("nd,nd->n", raw, raw))
    nz = norms > 0.0
    raw[nz] /= norms[nz, None]
    return raw


def dense_descriptors(img: GrayImage, step: int = 8, patch: int = 16) -> LocalFeatureSet:
    """Sample 128-dim gradient-histogram descriptors on a regular grid.

    At each grid point a ``patch x patch`` window is described by 4x4
    spatial cells of 8 gradient-orientation bins with trilinear vote
    spreading, then unit-normalized, clipped at 0.2, and renormalized.
    Grid points per axis: ``floor((extent - patch) / step) + 1``.
    """
    if step < 1:
        raise InvalidParamsError(f"step must be >= 1, got {step}")
    if patch < 1:
        raise InvalidParamsError(f"patch must be >= 1, got {patch}")
    h, w = img.height, img.width
    if patch > min(w, h):
        raise ImageTooSmallError(
            f"patch {patch} exceeds image extent {w}x{h}"
        )
    gx, gy = _gradients(img.pixels)
    mag = np.hypot(gx, gy)
    ang = np.mod(np.arctan2(gy, gx), 2.0 * np.pi)

    # Orientation votes split linearly across the two nearest bins.
    ob = ang * (N_ORI_BINS / (2.0 * np.pi))
    o0 = np.floor(ob)
    frac = ob - o0
    b0 = o0.astype(np.int64) % N_ORI_BINS
    b1 = (b0 + 1) % N_ORI_BINS
    m0 = mag * (1.0 - frac)
    m1 = mag * frac

    xs = np.arange(0, w - patch + 1, step, dtype=np.int64)
    ys = np.arange(0, h - patch + 1, step, dtype=np.int64)
    raw = _kernels.sift_grid(m0, b0, m1, b1, xs, ys, patch, N_CELLS, N_ORI_BINS)
    descs = _normalize_rows(raw)

    pos_x, pos_y = np.meshgrid(xs, ys)
    positions = np.stack([pos_x.reshape(-1), pos_y.reshape(-1)], axis=1)
    return LocalFeatureSet(descs, positions)


@dataclass(frozen=True)
class PcaModel:
    """Affine projection onto the leading principal axes of training data."""

    mean: np.ndarray  # (in_dim,)
    basis: np.ndarray  # (out_dim, in_dim), orthonormal rows

    def __post_init__(self):
        mean = np.ascontiguousarray(self.mean, dtype=np.float64).reshape(-1)
        basis = np.ascontiguousarray(self.basis, dtype=np.float64)
        if basis.ndim != 2 or basis.shape[1] != mean.shape[0]:
            raise InvalidParamsError(
                f"basis shape {basis.shape} does not match mean length {mean.shape[0]}"
            )
        if basis.shape[0] > basis.shape[1]:
            raise InvalidParamsError("more basis rows than input dimensions")
        gram = basis @ basis.T
        if not np.allclose(gram, np.eye(basis.shape[0]), atol=1e-8):
            raise InvalidParamsError("basis rows must be orthonormal")
        mean.flags.writeable = False
        basis.flags.writeable = False
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "basis", basis)

    @property
    def in_dim(self) -> int:
        return self.basis.shape[1]

    @property
    def out_dim(self) -> int:
        return self.basis.shape[0]


def fit_pca(training: Sequence[LocalFeatureSet], out_dim: int) -> PcaModel:
    """Fit the projection from pooled training descriptors.

    Basis rows are the eigenvectors of the (1/N) covariance with the
    largest eigenvalues, ordered by descending eigenvalue; each row is
    sign-fixed so its first nonzero component is positive. Deterministic
    for a fixed input order.
    """
    stacks = [fs.descriptors for fs in training if fs.count > 0]
    if not stacks:
        raise InsufficientDataError("no training descriptors supplied")
    x = np.concatenate(stacks, axis=0)
    n, in_dim = x.shape
    if out_dim < 1 or out_dim > in_dim:
        raise InvalidParamsError(
            f"out_dim must be in [1, {in_dim}], got {out_dim}"
        )
    if n < out_dim:
        raise InsufficientDataError(
            f"{n} descriptors cannot support {out_dim} components"
        )
    mean = x.mean(axis=0)
    centered = x - mean
    cov = (centered.T @ centered) / n
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    eigvals = eigvals[order]
    basis = eigvecs[:, order].T

    rank_tol = max(eigvals[0], 0.0) * 1e-10
    rank = int(np.count_nonzero(eigvals > rank_tol))
    if rank < out_dim:
        raise DegenerateCovarianceError(achievable_rank=rank, requested=out_dim)

    basis = basis[:out_dim].copy()
    for row in basis:
        nz = np.nonzero(row)[0]
        if nz.size and row[nz[0]] < 0.0:
            row *= -1.0
    return PcaModel(mean=mean, basis=basis)


def apply_pca(model: PcaModel, features: LocalFeatureSet) -> LocalFeatureSet:
    """Project every descriptor: ``basis @ (x - mean)``. Positions carry over."""
    if features.count and features.dim != model.in_dim:
        raise DimMismatchError(
            f"features have dim {features.dim}, projection expects {model.in_dim}"
        )
    if features.count == 0:
        return LocalFeatureSet(
            np.zeros((0, model.out_dim)), features.positions
        )
    projected = (features.descriptors - model.mean) @ model.basis.T
    return LocalFeatureSet(projected, features.positions)
