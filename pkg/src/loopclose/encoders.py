"""Whole-image encodings of local feature sets: histogram of quantized
descriptors, aggregated first-order residuals, and soft-assignment
gradient statistics. All outputs end with the shared unit-norm scaling."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import _kernels
from .codebook import GmmModel, Vocabulary, log_responsibilities
from .errors import DimMismatchError, EmptyFeatureSetError, NonFiniteInputError
from .local_features import LocalFeatureSet


@dataclass(frozen=True)
class Descriptor:
    """One whole-image feature vector with a provenance label."""

    values: np.ndarray
    source: str
    image_id: str = ""

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=np.float64).reshape(-1)
        if not np.isfinite(v).all():
            raise NonFiniteInputError(f"descriptor {self.source!r} has non-finite values")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def dim(self) -> int:
        return self.values.shape[0]


def normalized(values: np.ndarray) -> np.ndarray:
    """Divide by the Euclidean norm; the all-zero vector passes through."""
    values = np.asarray(values, dtype=np.float64)
    if not np.isfinite(values).all():
        raise NonFiniteInputError("cannot normalize a non-finite vector")
    peak = np.abs(values).max() if values.size else 0.0
    if peak == 0.0:
        return values.copy()
    # pre-scale by the largest magnitude so the squared sum cannot
    # underflow (denormal inputs) or overflow (huge inputs)
    scaled = values / peak
    return scaled / float(np.sqrt(scaled @ scaled))


def l2_normalize(d: Descriptor) -> Descriptor:
    """Scale a descriptor to unit Euclidean norm (zero vectors unchanged)."""
    return replace(d, values=normalized(d.values))


def _canonical_order(x: np.ndarray) -> np.ndarray:
    """Row order independent of input permutation (lexicographic).

    Aggregations run over rows in this order, so any permutation of the
    input features yields bitwise-identical encodings.
    """
    if x.shape[0] <= 1:
        return x
    return x[np.lexsort(x.T[::-1])]


def encode_bovw(
    features: LocalFeatureSet, vocab: Vocabulary, image_id: str = ""
) -> Descriptor:
    """Histogram of nearest-word assignments over the vocabulary, unit-normalized.

    Hard assignment, ties to the lowest word index, no reweighting. Output
    length equals the vocabulary size.
    """
    if features.dim != vocab.dim and features.count > 0:
        raise DimMismatchError(
            f"features have dim {features.dim}, vocabulary has dim {vocab.dim}"
        )
    hist = np.zeros(vocab.k)
    if features.count > 0:
        idx, _ = _kernels.assign_nearest(features.descriptors, vocab.centroids)
        hist = np.bincount(idx, minlength=vocab.k).astype(np.float64)
    return Descriptor(normalized(hist), source="bovw", image_id=image_id)


def encode_vlad(
    features: LocalFeatureSet,
    model: GmmModel,
    image_id: str = "",
    intra_normalize: bool = True,
) -> Descriptor:
    """Concatenated per-component residual sums against the mixture means.

    Each feature is hard-assigned to its nearest mean; residuals are summed
    per component, each block scaled to unit norm (when ``intra_normalize``,
    zero blocks kept as zero), and the concatenation unit-normalized.
    Output length is ``k * dim``.
    """
    k, dim = model.k, model.dim
    if features.count > 0 and features.dim != dim:
        raise DimMismatchError(
            f"features have dim {features.dim}, mixture has dim {dim}"
        )
    blocks = np.zeros((k, dim))
    if features.count > 0:
        x = _canonical_order(features.descriptors)
        idx, _ = _kernels.assign_nearest(x, model.means)
        sums = _kernels.vlad_sums(x, idx, k)
        counts = np.bincount(idx, minlength=k).astype(np.float64)
        blocks = sums - counts[:, None] * model.means
    if intra_normalize:
        norms = np.sqrt(np.einsum("kd,kd->k", blocks, blocks))
        nonzero = norms > 0.0
        blocks[nonzero] /= norms[nonzero, None]
    return Descriptor(normalized(blocks.reshape(-1)), source="vlad", image_id=image_id)


def encode_fv(
    features: LocalFeatureSet,
    model: GmmModel,
    image_id: str = "",
    power_normalize: bool = True,
) -> Descriptor:
    """Soft-assignment gradient encoding over a diagonal Gaussian mixture.

    Per component i, with responsibilities g_n(i), sample count N, weight
    w_i, mean m_i and standard deviation s_i:

        mean block  = sum_n g_n(i) (x_n - m_i) / s_i / (N sqrt(w_i))
        sd block    = sum_n g_n(i) [((x_n - m_i)/s_i)^2 - 1] / (N sqrt(2 w_i))

    Mean blocks for all components come first, then sd blocks (length
    ``2 * k * dim``). Signed square-root scaling is applied before the
    final unit normalization when ``power_normalize`` is set.
    """
    if features.count == 0:
        raise EmptyFeatureSetError("gradient encoding requires at least one feature")
    if features.dim != model.dim:
        raise DimMismatchError(
            f"features have dim {features.dim}, mixture has dim {model.dim}"
        )
    x = _canonical_order(features.descriptors)
    n = x.shape[0]
    log_resp, _ = log_responsibilities(x, model)
    resp = np.exp(log_resp)
    s0, s1, s2 = _kernels.fv_sums(x, resp)

    sd = np.sqrt(model.variances)
    # sum_n g (x - m) / s  ==  (s1 - m s0) / s
    g_mean = (s1 - model.means * s0[:, None]) / sd
    g_mean /= n * np.sqrt(model.weights)[:, None]
    # sum_n g [((x - m)/s)^2 - 1]  ==  (s2 - 2 m s1 + m^2 s0) / s^2 - s0
    g_sd = (s2 - 2.0 * model.means * s1 + model.means**2 * s0[:, None]) / model.variances
    g_sd -= s0[:, None]
    g_sd /= n * np.sqrt(2.0 * model.weights)[:, None]

    vec = np.concatenate([g_mean.reshape(-1), g_sd.reshape(-1)])
    if power_normalize:
        vec = np.sign(vec) * np.sqrt(np.abs(vec))
    return Descriptor(normalized(vec), source="fv", image_id=image_id)
