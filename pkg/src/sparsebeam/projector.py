"""Ray-driven numerical forward projection and dose-reducing view masking."""

from __future__ import annotations

import math

import numpy as np
from scipy.ndimage import map_coordinates

from .containers import ImageVolume, ProjectionSet
from .errors import ConfigurationError, GeometryError
from .geometry import ConeBeamGeometry

_MAX_CHUNK_SAMPLES = 2_000_000  # per map_coordinates call, keeps memory flat


def project(volume: ImageVolume, geometry: ConeBeamGeometry) -> ProjectionSet:
    """Line integrals from the source to each detector cell center.

    Rays are sampled with a fixed step of half the voxel size (midpoint rule)
    over the segment that can intersect the volume's bounding sphere, with
    trilinear interpolation; samples outside the volume contribute zero.
    """
    g = geometry
    nx, ny, nz = volume.dims
    vox = volume.voxel_size
    corner_radius = math.hypot(nx, ny) / 2.0 * vox
    if corner_radius > g.fov_radius():
        raise GeometryError(
            f"volume xy corner radius {corner_radius:.2f} mm exceeds the "
            f"fully-sampled cylinder radius {g.fov_radius():.2f} mm")
    if nz / 2.0 * vox > g.fov_half_height():
        raise GeometryError(
            f"volume half-height {nz / 2.0 * vox:.2f} mm exceeds the "
            f"illuminated half-height {g.fov_half_height():.2f} mm")

    step = vox / 2.0
    bound_radius = math.sqrt(nx * nx + ny * ny + nz * nz) / 2.0 * vox + vox
    t_start = max(g.source_to_iso - bound_radius, 0.0)
    n_steps = int(math.ceil(2.0 * bound_radius / step))
    t = t_start + (np.arange(n_steps) + 0.5) * step  # (K,)

    field = volume.data.astype(np.float64, copy=False)
    u = g.detector_u()  # (C,)
    v = g.detector_v()  # (R,)
    data = np.zeros((g.n_views, g.det_rows, g.det_cols), dtype=np.float64)
    rows_per_chunk = max(1, _MAX_CHUNK_SAMPLES // (g.det_cols * n_steps))

    for k, angle in enumerate(g.view_angles):
        beta = math.radians(angle)
        cb, sb = math.cos(beta), math.sin(beta)
        sx, sy = g.source_to_iso * cb, g.source_to_iso * sb
        # unit ray directions to the (R, C) detector cell centers; the (1, C)
        # in-plane and (R, 1) axial pieces broadcast through the shared norm
        ru = -g.source_to_detector * cb - u[None, :] * sb
        rv = -g.source_to_detector * sb + u[None, :] * cb
        rw = v[:, None]
        norm = np.sqrt(ru * ru + rv * rv + rw * rw)
        rx, ry, rz = ru / norm, rv / norm, rw / norm

        for r0 in range(0, g.det_rows, rows_per_chunk):
            r1 = min(r0 + rows_per_chunk, g.det_rows)
            px = sx + t[None, None, :] * rx[r0:r1, :, None]
            py = sy + t[None, None, :] * ry[r0:r1, :, None]
            pz = t[None, None, :] * rz[r0:r1, :, None]
            ix = px / vox + (nx - 1) / 2.0
            iy = py / vox + (ny - 1) / 2.0
            iz = pz / vox + (nz - 1) / 2.0
            vals = map_coordinates(field, [iz, iy, ix], order=1,
                                   mode="constant", cval=0.0)
            data[k, r0:r1] = vals.sum(axis=-1) * step
    return ProjectionSet(geometry=g, data=data)


def downsample_views(full: ProjectionSet, keep_every: int) -> ProjectionSet:
    """Keep every ``keep_every``-th view (indices 0 mod keep_every), zeroing
    the rest, at unchanged array dimensions.  Emulates dose reduction by
    view-count reduction."""
    if not (isinstance(keep_every, (int, np.integer)) and keep_every >= 1):
        raise ConfigurationError(f"keep_every must be a positive integer, "
                                 f"got {keep_every!r}")
    n = full.geometry.n_views
    if n % keep_every != 0:
        raise ConfigurationError(
            f"keep_every={keep_every} does not divide n_views={n}")
    mask = (np.arange(n) % keep_every == 0) & full.view_mask
    data = np.where(mask[:, None, None], full.data, 0.0)
    return ProjectionSet(geometry=full.geometry, data=data, view_mask=mask)
