import struct

import numpy as np
import pytest

from loopclose import (
    LAYER_DIMS,
    expected_layer_dim,
    read_feature_file,
    write_feature_file,
)
from loopclose.errors import (
    DimMismatchError,
    FormatError,
    NonFiniteInputError,
    UnknownLayerError,
)
from loopclose.feature_io import read_local_features, write_local_features
from loopclose.local_features import LocalFeatureSet

EXPECTED_DIMS = {
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


class TestLayerDims:
    def test_all_eleven_layers(self):
        assert LAYER_DIMS == EXPECTED_DIMS
        for name, dim in EXPECTED_DIMS.items():
            assert expected_layer_dim(name) == dim

    def test_unknown_layer(self):
        with pytest.raises(UnknownLayerError):
            expected_layer_dim("POOL9")


class TestRoundTrip:
    def test_normalization_on_read(self, tmp_path):
        path = tmp_path / "x.lcdf"
        write_feature_file(path, "custom", "img7", [3.0, 4.0])
        layer, image_id, desc = read_feature_file(path)
        assert (layer, image_id) == ("custom", "img7")
        assert desc.values.tolist() == [0.6, 0.8]
        assert desc.source == "custom"

    def test_zero_vector_rule(self, tmp_path):
        path = tmp_path / "z.lcdf"
        write_feature_file(path, "POOL5", "img", np.zeros(9216))
        _, _, desc = read_feature_file(path)
        assert desc.dim == 9216
        assert (desc.values == 0.0).all()

    def test_raw_payload_bytes_identical(self, tmp_path, rng):
        values = rng.normal(size=10_000)
        path = tmp_path / "r.lcdf"
        write_feature_file(path, "custom", "id", values)
        blob = path.read_bytes()
        payload = blob[-10_000 * 4 :]
        assert payload == values.astype("<f4").tobytes()

    def test_valid_known_layer(self, tmp_path, rng):
        path = tmp_path / "p5.lcdf"
        values = rng.normal(size=9216)
        write_feature_file(path, "POOL5", "frame4", values)
        layer, _, desc = read_feature_file(path)
        assert layer == "POOL5"
        assert desc.dim == 9216
        assert abs(np.linalg.norm(desc.values) - 1.0) < 1e-6

    def test_unknown_layer_any_dim_accepted(self, tmp_path):
        path = tmp_path / "c.lcdf"
        write_feature_file(path, "custom", "id", np.arange(7, dtype=float))
        layer, _, desc = read_feature_file(path)
        assert layer == "custom" and desc.dim == 7

    def test_unicode_names(self, tmp_path):
        path = tmp_path / "u.lcdf"
        write_feature_file(path, "ablage-é", "bild-ü", [1.0])
        layer, image_id, _ = read_feature_file(path)
        assert layer == "ablage-é" and image_id == "bild-ü"


class TestValidation:
    def _writer_blob(self, tmp_path, layer, dim, payload_count):
        path = tmp_path / "f.lcdf"
        name_b = layer.encode()
        with open(path, "wb") as fh:
            fh.write(b"LCDF")
            fh.write(struct.pack("<I", 1))
            fh.write(struct.pack("<H", len(name_b)))
            fh.write(name_b)
            fh.write(struct.pack("<H", 2))
            fh.write(b"id")
            fh.write(struct.pack("<Q", dim))
            fh.write(np.zeros(payload_count, dtype="<f4").tobytes())
        return path

    def test_known_layer_wrong_dim(self, tmp_path):
        path = self._writer_blob(tmp_path, "POOL5", 9000, 9000)
        with pytest.raises(DimMismatchError):
            read_feature_file(path)

    def test_payload_count_mismatch(self, tmp_path):
        # header declares 9216 values but the payload holds only 9000
        path = self._writer_blob(tmp_path, "custom", 9216, 9000)
        with pytest.raises(DimMismatchError):
            read_feature_file(path)

    def test_mid_value_truncation(self, tmp_path):
        path = self._writer_blob(tmp_path, "custom", 8, 8)
        blob = path.read_bytes()
        path.write_bytes(blob[:-3])  # cut inside the final float
        with pytest.raises(FormatError):
            read_feature_file(path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.lcdf"
        path.write_bytes(b"NOPE" + b"\x00" * 32)
        with pytest.raises(FormatError):
            read_feature_file(path)

    def test_bad_version(self, tmp_path):
        path = tmp_path / "v.lcdf"
        path.write_bytes(b"LCDF" + struct.pack("<I", 9) + b"\x00" * 16)
        with pytest.raises(FormatError):
            read_feature_file(path)

    def test_trailing_bytes(self, tmp_path):
        path = self._writer_blob(tmp_path, "custom", 3, 3)
        with open(path, "ab") as fh:
            fh.write(b"junk")
        with pytest.raises(FormatError):
            read_feature_file(path)

    def test_non_finite_write_rejected(self, tmp_path):
        with pytest.raises(NonFiniteInputError):
            write_feature_file(tmp_path / "n.lcdf", "c", "i", [1.0, np.nan])

    def test_f32_overflow_rejected(self, tmp_path):
        with pytest.raises(NonFiniteInputError):
            write_feature_file(tmp_path / "o.lcdf", "c", "i", [1e300])


class TestLocalFeatureFiles:
    def test_round_trip(self, tmp_path, rng):
        fs = LocalFeatureSet(
            rng.random((6, 4)).astype(np.float32).astype(np.float64),
            np.zeros((6, 2), np.int64),
        )
        path = tmp_path / "lf.lcdf"
        write_local_features(path, "img3", fs)
        image_id, back = read_local_features(path)
        assert image_id == "img3"
        assert back.dim == 4 and back.count == 6
        np.testing.assert_array_equal(back.descriptors, fs.descriptors)

    def test_payload_not_multiple_of_dim(self, tmp_path):
        path = tmp_path / "bad.lcdf"
        write_feature_file(path, "local4", "id", np.zeros(6))
        with pytest.raises(DimMismatchError):
            read_local_features(path)

    def test_wrong_name_rejected(self, tmp_path):
        path = tmp_path / "x.lcdf"
        write_feature_file(path, "custom", "id", np.zeros(6))
        with pytest.raises(FormatError):
            read_local_features(path)
