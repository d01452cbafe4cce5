"""Feature-vector files: import/export of whole-image descriptors.

One descriptor per file, little-endian:

    magic    4 bytes  b"LCDF"
    version  u32      1
    name_len u16      + that many UTF-8 bytes (layer / source name)
    id_len   u16      + that many UTF-8 bytes (image id)
    dim      u64
    payload  f32[dim] raw (unnormalized) values

Raw values are stored; unit normalization is applied on read. When the
name matches a known network layer, the dimension is validated against
the layer table. A directory of these files constitutes a dataset's
feature set.

Local-feature sets reuse the same container under the naming convention
``local<d>``: the payload holds ``n * d`` values, reshaped to ``(n, d)``.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .encoders import Descriptor, l2_normalize
from .errors import (
    DimMismatchError,
    FormatError,
    NonFiniteInputError,
    UnknownLayerError,
)
from .local_features import LocalFeatureSet

MAGIC = b"LCDF"
VERSION = 1

#: Flattened activation length of each layer of the reference network.
LAYER_DIMS: dict[str, int] = {
    "CONV1": 290400,
    "POOL1": 69984,
    "CONV2": 186624,
    "POOL2": 43264,
    "CONV3": 64896,
    "CONV4": 64896,
    "CONV5": 43264,
    "POOL5": 9216,
    "FC6": 4096,
    "FC7": 4096,
    "FC8": 1000,
}


def expected_layer_dim(name: str) -> int:
    """Flattened dimension of a known network layer."""
    try:
        return LAYER_DIMS[name]
    except KeyError:
        raise UnknownLayerError(f"unknown layer {name!r}") from None


def write_feature_file(path: str | Path, layer: str, image_id: str, values) -> None:
    """Store raw values for one image under a layer/source name."""
    raw = np.asarray(values, dtype=np.float64).reshape(-1)
    if not np.isfinite(raw).all():
        raise NonFiniteInputError("feature values must be finite")
    with np.errstate(over="ignore"):
        payload = raw.astype("<f4")
    if not np.isfinite(payload).all():
        raise NonFiniteInputError("feature values overflow 32-bit floats")
    name_b = layer.encode("utf-8")
    id_b = image_id.encode("utf-8")
    if len(name_b) > 0xFFFF or len(id_b) > 0xFFFF:
        raise FormatError("layer name / image id longer than 65535 bytes")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<H", len(name_b)))
        fh.write(name_b)
        fh.write(struct.pack("<H", len(id_b)))
        fh.write(id_b)
        fh.write(struct.pack("<Q", payload.shape[0]))
        fh.write(payload.tobytes())


def _parse(path: str | Path) -> tuple[str, str, np.ndarray]:
    blob = Path(path).read_bytes()
    view = memoryview(blob)
    off = 0

    def take(n: int) -> memoryview:
        nonlocal off
        if off + n > len(view):
            raise FormatError(f"{path}: truncated at byte {off}")
        chunk = view[off : off + n]
        off += n
        return chunk

    if bytes(take(4)) != MAGIC:
        raise FormatError(f"{path}: bad magic")
    (version,) = struct.unpack("<I", take(4))
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    (name_len,) = struct.unpack("<H", take(2))
    layer = bytes(take(name_len)).decode("utf-8")
    (id_len,) = struct.unpack("<H", take(2))
    image_id = bytes(take(id_len)).decode("utf-8")
    (dim,) = struct.unpack("<Q", take(8))
    remaining = len(view) - off
    if remaining < dim * 4:
        if remaining % 4 == 0:
            raise DimMismatchError(
                f"{path}: header declares {dim} values, payload has {remaining // 4}"
            )
        raise FormatError(f"{path}: truncated payload")
    payload = take(dim * 4)
    if off != len(view):
        raise FormatError(f"{path}: {len(view) - off} trailing bytes")
    raw = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    return layer, image_id, raw


def read_feature_file(path: str | Path) -> tuple[str, str, Descriptor]:
    """Read one descriptor, unit-normalize it, and validate its dimension.

    Known layer names must carry exactly the dimension from the layer
    table; other names are accepted as-is.
    """
    layer, image_id, raw = _parse(path)
    if layer in LAYER_DIMS and raw.shape[0] != LAYER_DIMS[layer]:
        raise DimMismatchError(
            f"{path}: layer {layer} must have dim {LAYER_DIMS[layer]}, "
            f"file has {raw.shape[0]}"
        )
    desc = l2_normalize(Descriptor(raw, source=layer, image_id=image_id))
    return layer, image_id, desc


def write_local_features(
    path: str | Path, image_id: str, features: LocalFeatureSet
) -> None:
    """Store a local-feature set under the ``local<d>`` naming convention."""
    write_feature_file(
        path, f"local{features.dim}", image_id, features.descriptors.reshape(-1)
    )


def read_local_features(path: str | Path) -> tuple[str, LocalFeatureSet]:
    """Read a local-feature set written by :func:`write_local_features`."""
    layer, image_id, raw = _parse(path)
    if not layer.startswith("local"):
        raise FormatError(f"{path}: not a local-feature file (name {layer!r})")
    try:
        dim = int(layer[len("local") :])
    except ValueError:
        raise FormatError(f"{path}: malformed local-feature name {layer!r}") from None
    if dim < 1 or raw.shape[0] % dim:
        raise DimMismatchError(
            f"{path}: payload of {raw.shape[0]} values is not a multiple of {dim}"
        )
    n = raw.shape[0] // dim
    return image_id, LocalFeatureSet(raw.reshape(n, dim), np.zeros((n, 2), np.int64))
