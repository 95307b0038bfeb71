"""Volume/projection file format: JSON sidecar + raw float32 blob."""

import json

import numpy as np
import pytest

from sparsebeam.containers import ImageVolume, ProjectionSet
from sparsebeam.errors import DataError, ShapeError
from sparsebeam.geometry import desk_preset
from sparsebeam.io import (array_checksum, load_projections, load_volume,
                           save_projections, save_volume)
from sparsebeam.projector import downsample_views


def _volume(seed=0, dims=(6, 5, 4), voxel=1.5, dtype=np.float32):
    gen = np.random.default_rng(seed)
    nx, ny, nz = dims
    data = gen.normal(size=(nz, ny, nx)).astype(dtype)
    return ImageVolume(dims=dims, voxel_size=voxel, data=data)


def _projections(seed=0, keep_every=1):
    geo = desk_preset()
    gen = np.random.default_rng(seed)
    data = gen.normal(size=(geo.n_views, geo.det_rows, geo.det_cols))
    full = ProjectionSet(geometry=geo, data=data.astype(np.float32))
    if keep_every == 1:
        return full
    return downsample_views(full, keep_every=keep_every)


class TestVolumeRoundTrip:
    def test_bit_exact_round_trip(self, tmp_path):
        vol = _volume()
        path = tmp_path / "vol.json"
        save_volume(vol, path)
        back = load_volume(path)
        assert back.dims == vol.dims
        assert back.voxel_size == vol.voxel_size
        assert back.data.dtype == np.float32
        np.testing.assert_array_equal(back.data, vol.data)

    def test_sidecar_declares_layout_and_checksum(self, tmp_path):
        vol = _volume()
        path = tmp_path / "vol.json"
        save_volume(vol, path)
        doc = json.loads(path.read_text())
        assert doc["dtype"] == "f32le"
        assert doc["dims"] == [6, 5, 4]
        assert doc["voxel_size"] == 1.5
        assert "slowest" in doc["order"]
        blob = (tmp_path / doc["data_file"]).read_bytes()
        import hashlib
        assert doc["checksum"] == "sha256:" + hashlib.sha256(blob).hexdigest()
        # blob is little-endian float32 in z-slowest order
        flat = np.frombuffer(blob, dtype="<f4")
        np.testing.assert_array_equal(flat.reshape(vol.data.shape), vol.data)

    def test_float64_input_is_stored_as_float32(self, tmp_path):
        vol = _volume(dtype=np.float64)
        path = tmp_path / "vol.json"
        save_volume(vol, path)
        back = load_volume(path)
        assert back.data.dtype == np.float32
        np.testing.assert_array_equal(back.data, vol.data.astype(np.float32))

    def test_missing_file_raises_data_error(self, tmp_path):
        with pytest.raises(DataError):
            load_volume(tmp_path / "nope.json")

    def test_malformed_sidecar_raises_data_error(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        with pytest.raises(DataError):
            load_volume(path)

    def test_unrecognized_format_tag_rejected(self, tmp_path):
        vol = _volume()
        path = tmp_path / "vol.json"
        save_volume(vol, path)
        doc = json.loads(path.read_text())
        doc["format"] = "something-else"
        path.write_text(json.dumps(doc))
        with pytest.raises(DataError):
            load_volume(path)

    def test_tampered_blob_fails_checksum(self, tmp_path):
        vol = _volume()
        path = tmp_path / "vol.json"
        save_volume(vol, path)
        blob_path = tmp_path / json.loads(path.read_text())["data_file"]
        blob = bytearray(blob_path.read_bytes())
        blob[0] ^= 0xFF
        blob_path.write_bytes(bytes(blob))
        with pytest.raises(DataError):
            load_volume(path)

    def test_truncated_blob_raises_shape_error(self, tmp_path):
        vol = _volume()
        path = tmp_path / "vol.json"
        save_volume(vol, path)
        doc = json.loads(path.read_text())
        blob_path = tmp_path / doc["data_file"]
        blob = blob_path.read_bytes()[:-8]
        blob_path.write_bytes(blob)
        import hashlib
        doc["checksum"] = "sha256:" + hashlib.sha256(blob).hexdigest()
        path.write_text(json.dumps(doc))
        with pytest.raises(ShapeError):
            load_volume(path)


class TestProjectionRoundTrip:
    def test_bit_exact_round_trip_with_mask(self, tmp_path):
        pset = _projections(keep_every=3)
        path = tmp_path / "proj.json"
        save_projections(pset, path)
        back = load_projections(path)
        assert back.geometry == pset.geometry
        np.testing.assert_array_equal(back.view_mask, pset.view_mask)
        assert back.data.dtype == np.float32
        np.testing.assert_array_equal(back.data, pset.data)

    def test_present_only_round_trip_keeps_explicit_angles(self, tmp_path):
        pset = _projections(keep_every=3).present_only()
        path = tmp_path / "proj.json"
        save_projections(pset, path)
        back = load_projections(path)
        assert back.geometry.view_angles == pset.geometry.view_angles
        assert back.geometry.n_views == 20
        np.testing.assert_array_equal(back.data, pset.data)

    def test_tampered_blob_fails_checksum(self, tmp_path):
        pset = _projections()
        path = tmp_path / "proj.json"
        save_projections(pset, path)
        blob_path = tmp_path / json.loads(path.read_text())["data_file"]
        blob = bytearray(blob_path.read_bytes())
        blob[-1] ^= 0x01
        blob_path.write_bytes(bytes(blob))
        with pytest.raises(DataError):
            load_projections(path)

    def test_nonzero_absent_view_rejected_on_load(self, tmp_path):
        pset = _projections(keep_every=2)
        path = tmp_path / "proj.json"
        save_projections(pset, path)
        doc = json.loads(path.read_text())
        blob_path = tmp_path / doc["data_file"]
        data = np.frombuffer(blob_path.read_bytes(), dtype="<f4").copy()
        view_len = pset.geometry.det_rows * pset.geometry.det_cols
        data[view_len] = 1.0  # first cell of view 1, which is masked out
        blob = data.tobytes()
        blob_path.write_bytes(blob)
        import hashlib
        doc["checksum"] = "sha256:" + hashlib.sha256(blob).hexdigest()
        path.write_text(json.dumps(doc))
        with pytest.raises(DataError):
            load_projections(path)


class TestArrayChecksum:
    def test_deterministic(self):
        a = np.arange(24, dtype=np.float32).reshape(2, 3, 4)
        assert array_checksum(a) == array_checksum(a.copy())
        assert array_checksum(a).startswith("sha256:")

    def test_sensitive_to_values_shape_and_dtype(self):
        a = np.zeros((2, 3), dtype=np.float32)
        b = a.copy()
        b[0, 0] = 1.0
        assert array_checksum(a) != array_checksum(b)
        assert array_checksum(a) != array_checksum(a.reshape(3, 2))
        assert array_checksum(a) != array_checksum(np.zeros((2, 3), dtype=np.int32))
