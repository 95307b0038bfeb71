"""Image-quality metrics and windowed PNG slice export."""

import math

import numpy as np
import pytest
from PIL import Image

from sparsebeam.containers import ImageVolume
from sparsebeam.errors import ConfigurationError, ShapeError
from sparsebeam.export import export_png, extract_slice, window_to_u8
from sparsebeam.metrics import evaluate_volumes, psnr, rmse, ssim


def _grid_volume(dims=(4, 5, 6)):
    """Volume whose value encodes its own index: data[z,y,x] = 100z + 10y + x."""
    nx, ny, nz = dims
    z, y, x = np.meshgrid(np.arange(nz), np.arange(ny), np.arange(nx),
                          indexing="ij")
    data = (100 * z + 10 * y + x).astype(np.float32)
    return ImageVolume(dims=dims, voxel_size=1.0, data=data)


class TestRMSE:
    def test_identical_is_exact_zero(self):
        a = np.random.default_rng(0).normal(size=(8, 8, 8)).astype(np.float32)
        assert rmse(a, a) == 0.0

    def test_constant_offset_is_exactly_the_offset(self):
        # Values on a 2^-10 grid so adding 0.5 is exact in float32.
        gen = np.random.default_rng(1)
        truth = (gen.integers(0, 1024, size=(16, 16, 16)) / 1024.0).astype(np.float32)
        shifted = truth + np.float32(0.5)
        assert rmse(shifted, truth) == 0.5

    def test_hand_value(self):
        a = np.array([0.0, 0.0, 3.0, 4.0])
        assert rmse(a, np.zeros(4)) == 2.5

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            rmse(np.zeros((2, 2)), np.zeros((2, 3)))


class TestPSNR:
    def test_identical_is_infinite(self):
        a = np.random.default_rng(0).normal(size=(6, 6, 6))
        assert math.isinf(psnr(a, a))

    def test_known_value_against_direct_formula(self):
        # truth spans [0, 2]; error is exactly 0.25 everywhere -> mse = 0.0625
        truth = np.linspace(0.0, 2.0, 64).reshape(4, 4, 4)
        x = truth + 0.25
        expected = 10.0 * math.log10(2.0 ** 2 / 0.0625)
        assert psnr(x, truth) == pytest.approx(expected, rel=1e-12)

    def test_decreases_with_noise_level(self):
        gen = np.random.default_rng(2)
        truth = gen.normal(size=(16, 16, 16))
        small = truth + 0.01 * gen.normal(size=truth.shape)
        large = truth + 0.1 * gen.normal(size=truth.shape)
        assert psnr(small, truth) > psnr(large, truth)

    def test_explicit_data_range(self):
        truth = np.zeros((4, 4, 4))
        x = truth + 0.5
        expected = 10.0 * math.log10(1.0 / 0.25)
        assert psnr(x, truth, data_range=1.0) == pytest.approx(expected, rel=1e-12)


class TestSSIM:
    def test_identical_is_one(self):
        a = np.random.default_rng(3).normal(size=(12, 12, 12)).astype(np.float32)
        assert ssim(a, a, data_range=1.0) == 1.0

    def test_noise_lowers_similarity(self):
        gen = np.random.default_rng(4)
        truth = gen.normal(size=(16, 16, 16))
        rng_range = float(truth.max() - truth.min())
        small = truth + 0.05 * gen.normal(size=truth.shape)
        large = truth + 0.5 * gen.normal(size=truth.shape)
        s_small = ssim(small, truth, data_range=rng_range)
        s_large = ssim(large, truth, data_range=rng_range)
        assert 1.0 > s_small > s_large

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            ssim(np.zeros((4, 4, 4)), np.zeros((4, 4, 5)))


class TestEvaluateVolumes:
    def test_identical_volumes(self):
        vol = _grid_volume()
        out = evaluate_volumes(vol, vol)
        assert math.isinf(out["psnr"])
        assert out["ssim"] == 1.0
        assert out["rmse"] == 0.0

    def test_dim_mismatch(self):
        with pytest.raises(ShapeError):
            evaluate_volumes(_grid_volume((4, 5, 6)), _grid_volume((4, 5, 7)))


class TestExtractSlice:
    def test_axial_is_fixed_z(self):
        vol = _grid_volume()  # dims (nx,ny,nz) = (4,5,6) -> data shape (6,5,4)
        sl = extract_slice(vol, "axial", 2)
        np.testing.assert_array_equal(sl, vol.data[2, :, :])
        assert sl.shape == (5, 4)  # rows = y, cols = x

    def test_coronal_is_fixed_y(self):
        vol = _grid_volume()
        sl = extract_slice(vol, "coronal", 3)
        np.testing.assert_array_equal(sl, vol.data[:, 3, :])
        assert sl.shape == (6, 4)  # rows = z, cols = x

    def test_sagittal_is_fixed_x(self):
        vol = _grid_volume()
        sl = extract_slice(vol, "sagittal", 1)
        np.testing.assert_array_equal(sl, vol.data[:, :, 1])
        assert sl.shape == (6, 5)  # rows = z, cols = y

    def test_default_index_is_middle(self):
        vol = _grid_volume()
        np.testing.assert_array_equal(extract_slice(vol, "axial"),
                                      vol.data[3, :, :])

    def test_out_of_range_index(self):
        with pytest.raises(ConfigurationError):
            extract_slice(_grid_volume(), "axial", 6)

    def test_unknown_plane(self):
        with pytest.raises(ConfigurationError):
            extract_slice(_grid_volume(), "diagonal", 0)


class TestWindowToU8:
    def test_linear_ramp_matches_per_pixel_arithmetic(self):
        lo, hi = -100.0, 550.0
        values = np.linspace(-300.0, 800.0, 23 * 17).reshape(23, 17)
        img = window_to_u8(values, lo, hi)
        assert img.dtype == np.uint8
        # independent per-pixel route: scalar arithmetic, one pixel at a time
        oracle = np.empty_like(img)
        for i in range(values.shape[0]):
            for j in range(values.shape[1]):
                v = float(values[i, j])
                p = np.rint((v - lo) / (hi - lo) * 255.0)
                oracle[i, j] = int(min(255.0, max(0.0, p)))
        np.testing.assert_array_equal(img, oracle)

    def test_saturation_and_interior(self):
        lo, hi = -100.0, 550.0
        vals = np.array([-500.0, -100.0, 550.0, 1000.0, 225.0])
        img = window_to_u8(vals, lo, hi)
        assert img[0] == 0 and img[1] == 0
        assert img[2] == 255 and img[3] == 255
        # midpoint of the window maps to 127.5, rounded half-to-even -> 128
        assert img[4] == 128

    def test_degenerate_window_rejected(self):
        with pytest.raises(ConfigurationError):
            window_to_u8(np.zeros(4), 100.0, 100.0)


class TestExportPNG:
    def test_png_matches_windowed_slice(self, tmp_path):
        gen = np.random.default_rng(5)
        nx, ny, nz = 10, 12, 8
        data = gen.uniform(-300, 800, size=(nz, ny, nx)).astype(np.float32)
        vol = ImageVolume(dims=(nx, ny, nz), voxel_size=1.0, data=data)
        out = tmp_path / "slice.png"
        export_png(vol, out, window=(-100.0, 550.0), plane="coronal", index=5)
        img = Image.open(out)
        assert img.mode == "L"
        expected = window_to_u8(extract_slice(vol, "coronal", 5), -100.0, 550.0)
        np.testing.assert_array_equal(np.asarray(img), expected)

    def test_default_window_and_plane(self, tmp_path):
        vol = _grid_volume()
        out = tmp_path / "default.png"
        export_png(vol, out)
        expected = window_to_u8(extract_slice(vol, "axial"), -100.0, 550.0)
        np.testing.assert_array_equal(np.asarray(Image.open(out)), expected)
