"""Data containers for image volumes and projection sets.

Volumes are indexed ``data[z, y, x]`` while ``dims`` is declared as
``(nx, ny, nz)``; projections are indexed ``(view, row, col)``.  World
coordinates are millimetres with the isocenter at the origin and voxel/cell
centers on a symmetric grid.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DataError, ShapeError
from .geometry import ConeBeamGeometry


def _axis_coords(n: int, spacing: float) -> np.ndarray:
    """Centers of ``n`` cells of width ``spacing`` centered on the origin."""
    return (np.arange(n) - (n - 1) / 2.0) * spacing


@dataclass
class ImageVolume:
    """A 3-D attenuation field (1/mm) on an isotropic voxel grid."""

    dims: tuple[int, int, int]  # (nx, ny, nz)
    voxel_size: float  # mm
    data: np.ndarray  # indexed [z, y, x]

    def __post_init__(self):
        self.dims = tuple(int(d) for d in self.dims)
        if len(self.dims) != 3 or any(d <= 0 for d in self.dims):
            raise ConfigurationError(f"dims must be three positive ints, got {self.dims}")
        if not self.voxel_size > 0:
            raise ConfigurationError(f"voxel_size must be positive, got {self.voxel_size}")
        self.data = np.asarray(self.data)
        nx, ny, nz = self.dims
        if self.data.shape != (nz, ny, nx):
            raise ShapeError(
                f"volume data shape {self.data.shape} does not match dims "
                f"(nx, ny, nz)={self.dims}; expected (nz, ny, nx)=({nz}, {ny}, {nx})")

    def axis_coords(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """World coordinates (xs, ys, zs) of voxel centers, in mm."""
        nx, ny, nz = self.dims
        v = self.voxel_size
        return _axis_coords(nx, v), _axis_coords(ny, v), _axis_coords(nz, v)

    def copy(self) -> "ImageVolume":
        return ImageVolume(dims=self.dims, voxel_size=self.voxel_size,
                           data=self.data.copy())


@dataclass
class ProjectionSet:
    """Line integrals (dimensionless) indexed (view, row, col) with a
    per-view present/absent mask; absent views must hold zeros."""

    geometry: ConeBeamGeometry
    data: np.ndarray
    view_mask: np.ndarray = None

    def __post_init__(self):
        self.data = np.asarray(self.data)
        g = self.geometry
        expected = (g.n_views, g.det_rows, g.det_cols)
        if self.data.shape != expected:
            raise ShapeError(
                f"projection data shape {self.data.shape} does not match "
                f"geometry (view, row, col)={expected}")
        if self.view_mask is None:
            self.view_mask = np.ones(g.n_views, dtype=bool)
        else:
            self.view_mask = np.asarray(self.view_mask, dtype=bool)
            if self.view_mask.shape != (g.n_views,):
                raise ShapeError(
                    f"view_mask shape {self.view_mask.shape} does not match "
                    f"n_views={g.n_views}")
        absent = ~self.view_mask
        if absent.any() and np.any(self.data[absent] != 0):
            raise DataError("masked-absent views must be all-zero")

    @property
    def n_present(self) -> int:
        return int(self.view_mask.sum())

    def present_only(self) -> "ProjectionSet":
        """The present views as a dense set with explicit view angles.

        ``angular_range`` is kept from the full scan so the sparse angular
        step scales as range / n_present.
        """
        idx = np.flatnonzero(self.view_mask)
        if idx.size == 0:
            raise DataError("projection set has no present views")
        angles = tuple(float(self.geometry.view_angles[i]) for i in idx)
        sub_geometry = dataclasses.replace(self.geometry, n_views=idx.size,
                                           view_angles=angles)
        return ProjectionSet(geometry=sub_geometry, data=self.data[idx].copy())

    def copy(self) -> "ProjectionSet":
        return ProjectionSet(geometry=self.geometry, data=self.data.copy(),
                             view_mask=self.view_mask.copy())
