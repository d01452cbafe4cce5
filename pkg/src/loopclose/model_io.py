"""Binary container for trained models (vocabulary, mixture, projection).

Layout, all little-endian:

    magic   4 bytes  b"LCDM"
    version u32      1
    kind    u8       1 = vocabulary, 2 = gaussian mixture, 3 = pca projection
    shape   2 x u64  vocabulary/gmm: (k, dim); pca: (in_dim, out_dim)
    payload f64[]    vocabulary: centroids (k*dim, row-major)
                     gmm: weights (k), means (k*dim), variances (k*dim)
                     pca: mean (in_dim), basis (out_dim*in_dim, row-major)

Round-trips are bit-exact.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .codebook import GmmModel, Vocabulary
from .errors import FormatError
from .local_features import PcaModel

MAGIC = b"LCDM"
VERSION = 1

_KIND_VOCABULARY = 1
_KIND_GMM = 2
_KIND_PCA = 3

_HEADER = struct.Struct("<4sIBQQ")

Model = Vocabulary | GmmModel | PcaModel


def _payload(model: Model) -> tuple[int, int, int, np.ndarray]:
    if isinstance(model, Vocabulary):
        return _KIND_VOCABULARY, model.k, model.dim, model.centroids.reshape(-1)
    if isinstance(model, GmmModel):
        flat = np.concatenate(
            [model.weights, model.means.reshape(-1), model.variances.reshape(-1)]
        )
        return _KIND_GMM, model.k, model.dim, flat
    if isinstance(model, PcaModel):
        flat = np.concatenate([model.mean, model.basis.reshape(-1)])
        return _KIND_PCA, model.in_dim, model.out_dim, flat
    raise TypeError(f"cannot serialize {type(model).__name__}")


def save_model(path: str | Path, model: Model) -> None:
    """Write a model file; see the module docstring for the layout."""
    kind, a, b, flat = _payload(model)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, kind, a, b))
        fh.write(np.ascontiguousarray(flat, dtype="<f8").tobytes())


def load_model(path: str | Path) -> Model:
    """Read a model file back; raises FormatError on any malformation."""
    blob = Path(path).read_bytes()
    if len(blob) < _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, kind, a, b = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if kind == _KIND_VOCABULARY:
        count = a * b
    elif kind == _KIND_GMM:
        count = a + 2 * a * b
    elif kind == _KIND_PCA:
        count = a + a * b
    else:
        raise FormatError(f"{path}: unknown model kind {kind}")
    body = blob[_HEADER.size :]
    if len(body) != count * 8:
        raise FormatError(
            f"{path}: payload is {len(body)} bytes, expected {count * 8}"
        )
    flat = np.frombuffer(body, dtype="<f8").astype(np.float64)
    if kind == _KIND_VOCABULARY:
        return Vocabulary(flat.reshape(a, b))
    if kind == _KIND_GMM:
        weights = flat[:a]
        means = flat[a : a + a * b].reshape(a, b)
        variances = flat[a + a * b :].reshape(a, b)
        return GmmModel(weights=weights, means=means, variances=variances)
    mean = flat[:a]
    basis = flat[a:].reshape(b, a)
    return PcaModel(mean=mean, basis=basis)
