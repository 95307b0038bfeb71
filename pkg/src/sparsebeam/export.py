"""Windowed 8-bit grayscale PNG export of volume slices.

A slice is taken along one of the three canonical planes of the volume's
(z, y, x)-ordered data, then mapped linearly from a display window
[lo, hi] onto pixel values 0..255 (clamped outside, rounded half-to-even).
The default window is [-100, 550], intended for HU-converted volumes.
"""

from __future__ import annotations

import os

import numpy as np
from PIL import Image

from .containers import ImageVolume
from .errors import ConfigurationError

__all__ = ["PLANES", "extract_slice", "window_to_u8", "export_png"]

PLANES = ("axial", "sagittal", "coronal")

_PLANE_AXIS = {"axial": 0, "coronal": 1, "sagittal": 2}  # axis of data[z,y,x]


def extract_slice(volume: ImageVolume, plane: str, index: int | None = None) -> np.ndarray:
    """2D slice of the volume: axial fixes z, coronal fixes y, sagittal fixes x."""
    if plane not in _PLANE_AXIS:
        raise ConfigurationError(f"unknown plane {plane!r}; choose from {PLANES}")
    axis = _PLANE_AXIS[plane]
    n = volume.data.shape[axis]
    if index is None:
        index = n // 2
    index = int(index)
    if not 0 <= index < n:
        raise ConfigurationError(f"slice index {index} outside 0..{n - 1} "
                                 f"for plane {plane!r}")
    return np.take(volume.data, index, axis=axis)


def window_to_u8(values, lo: float, hi: float) -> np.ndarray:
    """Linear display-window map: <= lo -> 0, >= hi -> 255."""
    lo, hi = float(lo), float(hi)
    if not hi > lo:
        raise ConfigurationError(f"window needs hi > lo, got [{lo}, {hi}]")
    values = np.asarray(values, dtype=np.float64)
    scaled = np.rint((values - lo) / (hi - lo) * 255.0)
    return np.clip(scaled, 0.0, 255.0).astype(np.uint8)


def export_png(volume: ImageVolume, out_path, window=(-100.0, 550.0),
               plane: str = "axial", index: int | None = None) -> None:
    """Write one windowed slice of the volume as an 8-bit grayscale PNG."""
    sl = extract_slice(volume, plane, index)
    img = window_to_u8(sl, window[0], window[1])
    Image.fromarray(img, mode="L").save(os.fspath(out_path), format="PNG")
