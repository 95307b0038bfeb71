"""Synthetic ellipsoid phantoms: voxelization and exact line integrals.

An ellipsoid is placed by center (mm), semi-axes (mm) and an intrinsic
z-y-x Euler rotation (degrees).  Its attenuation contribution is +mu when
``additive`` and -mu otherwise (carve-outs such as cavities); contributions
of overlapping ellipsoids sum.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation

from .containers import ImageVolume, ProjectionSet
from .errors import ConfigurationError, DataError
from .geometry import ConeBeamGeometry


@dataclass(frozen=True)
class Ellipsoid:
    center: tuple[float, float, float]  # mm
    semi_axes: tuple[float, float, float]  # mm
    mu: float  # attenuation, 1/mm
    rotation: tuple[float, float, float] = (0.0, 0.0, 0.0)  # deg, intrinsic z-y-x
    additive: bool = True

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        object.__setattr__(self, "semi_axes", tuple(float(a) for a in self.semi_axes))
        object.__setattr__(self, "rotation", tuple(float(r) for r in self.rotation))
        if len(self.center) != 3 or len(self.semi_axes) != 3 or len(self.rotation) != 3:
            raise ConfigurationError("center, semi_axes and rotation must have 3 entries")
        if any(a <= 0 for a in self.semi_axes):
            raise ConfigurationError(f"semi-axes must be positive, got {self.semi_axes}")
        if self.mu < 0:
            raise ConfigurationError(f"mu must be non-negative, got {self.mu}")

    def rotation_matrix(self) -> np.ndarray:
        """Body-to-world rotation matrix."""
        return Rotation.from_euler("zyx", self.rotation, degrees=True).as_matrix()

    @property
    def signed_mu(self) -> float:
        return self.mu if self.additive else -self.mu

    def to_dict(self) -> dict:
        return {"center": list(self.center), "semi_axes": list(self.semi_axes),
                "mu": self.mu, "rotation": list(self.rotation),
                "additive": self.additive}

    @classmethod
    def from_dict(cls, payload: dict) -> "Ellipsoid":
        unknown = set(payload) - {"center", "semi_axes", "mu", "rotation", "additive"}
        if unknown:
            raise DataError(f"unknown ellipsoid keys: {sorted(unknown)}")
        missing = {"center", "semi_axes", "mu"} - set(payload)
        if missing:
            raise DataError(f"missing ellipsoid keys: {sorted(missing)}")
        return cls(center=tuple(payload["center"]),
                   semi_axes=tuple(payload["semi_axes"]),
                   mu=payload["mu"],
                   rotation=tuple(payload.get("rotation", (0.0, 0.0, 0.0))),
                   additive=bool(payload.get("additive", True)))


@dataclass(frozen=True)
class EllipsoidPhantom:
    ellipsoids: tuple

    def __init__(self, ellipsoids):
        object.__setattr__(self, "ellipsoids", tuple(ellipsoids))
        if not all(isinstance(e, Ellipsoid) for e in self.ellipsoids):
            raise ConfigurationError("phantom entries must be Ellipsoid instances")

    def to_dict(self) -> dict:
        return {"ellipsoids": [e.to_dict() for e in self.ellipsoids]}

    @classmethod
    def from_dict(cls, payload: dict) -> "EllipsoidPhantom":
        if set(payload) != {"ellipsoids"}:
            raise DataError(f"phantom payload must have exactly the 'ellipsoids' "
                            f"key, got {sorted(payload)}")
        return cls([Ellipsoid.from_dict(e) for e in payload["ellipsoids"]])


def save_phantom(path, phantom: EllipsoidPhantom) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(phantom.to_dict(), fh, indent=2)
        fh.write("\n")


def load_phantom(path) -> EllipsoidPhantom:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read phantom file {path}: {exc}") from exc
    if not isinstance(payload, dict):
        raise DataError("phantom file must hold a JSON object")
    return EllipsoidPhantom.from_dict(payload)


def voxelize(phantom: EllipsoidPhantom, dims, voxel_size: float) -> ImageVolume:
    """Rasterize with a 2x supersampled membership test (8 sub-points per
    voxel), so partial coverage contributes in eighths of mu."""
    nx, ny, nz = (int(d) for d in dims)
    vol = ImageVolume(dims=(nx, ny, nz), voxel_size=float(voxel_size),
                      data=np.zeros((nz, ny, nx), dtype=np.float32))
    xs, ys, zs = vol.axis_coords()
    accum = np.zeros((nz, ny, nx), dtype=np.float64)
    quarter = voxel_size / 4.0
    offsets = [(sz * quarter, sy * quarter, sx * quarter)
               for sz in (-1, 1) for sy in (-1, 1) for sx in (-1, 1)]

    for e in phantom.ellipsoids:
        m = e.rotation_matrix().T  # world -> body
        inv_axes = 1.0 / np.asarray(e.semi_axes)
        cx, cy, cz = e.center
        reach = max(e.semi_axes) + voxel_size
        ix = np.flatnonzero(np.abs(xs - cx) <= reach)
        iy = np.flatnonzero(np.abs(ys - cy) <= reach)
        iz = np.flatnonzero(np.abs(zs - cz) <= reach)
        if ix.size == 0 or iy.size == 0 or iz.size == 0:
            continue
        sl = np.s_[iz[0]:iz[-1] + 1, iy[0]:iy[-1] + 1, ix[0]:ix[-1] + 1]
        gx = xs[ix[0]:ix[-1] + 1][None, None, :] - cx
        gy = ys[iy[0]:iy[-1] + 1][None, :, None] - cy
        gz = zs[iz[0]:iz[-1] + 1][:, None, None] - cz
        share = e.signed_mu / len(offsets)
        for oz, oy, ox in offsets:
            px, py, pz = gx + ox, gy + oy, gz + oz
            q0 = (m[0, 0] * px + m[0, 1] * py + m[0, 2] * pz) * inv_axes[0]
            q1 = (m[1, 0] * px + m[1, 1] * py + m[1, 2] * pz) * inv_axes[1]
            q2 = (m[2, 0] * px + m[2, 1] * py + m[2, 2] * pz) * inv_axes[2]
            inside = q0 * q0 + q1 * q1 + q2 * q2 <= 1.0
            accum[sl] += share * inside
    vol.data = accum.astype(np.float32)
    return vol


def project_analytic(phantom: EllipsoidPhantom,
                     geometry: ConeBeamGeometry) -> ProjectionSet:
    """Exact line integrals: per ray and ellipsoid, the chord length from the
    quadratic ray/ellipsoid intersection, scaled by signed attenuation."""
    g = geometry
    u = g.detector_u()[None, :]  # (1, C)
    v = g.detector_v()[:, None]  # (R, 1)
    data = np.zeros((g.n_views, g.det_rows, g.det_cols), dtype=np.float64)

    for k, angle in enumerate(g.view_angles):
        beta = np.radians(angle)
        cb, sb = np.cos(beta), np.sin(beta)
        source = np.array([g.source_to_iso * cb, g.source_to_iso * sb, 0.0])
        # ray directions to detector cell centers; (1, C) and (R, 1) pieces
        # broadcast to (R, C) through the shared norm
        ru = -g.source_to_detector * cb - u * sb
        rv = -g.source_to_detector * sb + u * cb
        norm = np.sqrt(ru * ru + rv * rv + v * v)
        rx, ry, rz = ru / norm, rv / norm, v / norm

        for e in phantom.ellipsoids:
            m = e.rotation_matrix().T
            inv_axes = 1.0 / np.asarray(e.semi_axes)
            o = m @ (source - np.asarray(e.center)) * inv_axes
            d0 = (m[0, 0] * rx + m[0, 1] * ry + m[0, 2] * rz) * inv_axes[0]
            d1 = (m[1, 0] * rx + m[1, 1] * ry + m[1, 2] * rz) * inv_axes[1]
            d2 = (m[2, 0] * rx + m[2, 1] * ry + m[2, 2] * rz) * inv_axes[2]
            qa = d0 * d0 + d1 * d1 + d2 * d2
            qb = 2.0 * (o[0] * d0 + o[1] * d1 + o[2] * d2)
            qc = float(o @ o) - 1.0
            disc = qb * qb - 4.0 * qa * qc
            chord = np.sqrt(np.maximum(disc, 0.0)) / qa
            data[k] += e.signed_mu * chord
    return ProjectionSet(geometry=g, data=data)


def random_phantom(seed: int, geometry: ConeBeamGeometry,
                   max_radius: float = None, max_half_height: float = None,
                   n_features=(3, 8), mu_background: float = 0.02,
                   feature_fraction=(0.1, 0.45)) -> EllipsoidPhantom:
    """A breast-like test object: one large background ellipsoid plus a few
    internal features, additive or subtractive, all inside the scanner's
    fully-sampled cylinder.  Deterministic given the seed.

    Subtractive features are kept mutually disjoint and weaker than the
    background so the summed attenuation never goes negative.
    """
    if max_radius is None:
        max_radius = 0.75 * geometry.fov_radius()
    if max_half_height is None:
        max_half_height = 0.75 * geometry.fov_half_height()
    if max_radius > geometry.fov_radius() or max_half_height > geometry.fov_half_height():
        raise ConfigurationError("phantom bounds exceed the scanner field of view")
    rng = np.random.default_rng(seed)

    bg_a = rng.uniform(0.55, 0.8) * max_radius
    bg_b = rng.uniform(0.55, 0.8) * max_radius
    bg_c = rng.uniform(0.5, 0.8) * max_half_height
    bg_reach = max(bg_a, bg_b, bg_c)
    cz_room = max(max_half_height - bg_reach, 0.0)
    bg_center = (0.0, 0.0, rng.uniform(-0.5, 0.5) * cz_room)
    background = Ellipsoid(center=bg_center, semi_axes=(bg_a, bg_b, bg_c),
                           mu=mu_background,
                           rotation=(rng.uniform(0, 360), 0.0, 0.0))

    ellipsoids = [background]
    subtractive_placed = []
    count = int(rng.integers(n_features[0], n_features[1] + 1))
    min_bg = min(bg_a, bg_b, bg_c)
    for _ in range(count):
        axes = tuple(rng.uniform(0.08, 0.25) * min_bg for _ in range(3))
        reach = max(axes)
        room = (min_bg - reach) * 0.85
        subtractive = bool(rng.uniform() < 0.5) and room > 0
        for _attempt in range(20):
            direction = rng.normal(size=3)
            direction /= np.linalg.norm(direction)
            radius = rng.uniform(0.0, max(room, 0.0))
            center = tuple(np.asarray(bg_center) + radius * direction)
            if not subtractive:
                break
            if all(np.linalg.norm(np.asarray(center) - np.asarray(c)) > reach + r
                   for c, r in subtractive_placed):
                break
        else:
            subtractive = False
        fraction = rng.uniform(*feature_fraction)
        rotation = tuple(rng.uniform(-90, 90, size=3))
        ellipsoids.append(Ellipsoid(center=center, semi_axes=axes,
                                    mu=fraction * mu_background,
                                    rotation=rotation, additive=not subtractive))
        if subtractive:
            subtractive_placed.append((center, reach))
    return EllipsoidPhantom(ellipsoids)
