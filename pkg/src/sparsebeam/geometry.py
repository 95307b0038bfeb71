"""Circular cone-beam acquisition geometry.

The source orbits the isocenter in the z = 0 plane; at orbit angle beta
(degrees) the source sits at ``source_to_iso * (cos b, sin b, 0)`` and a flat
detector panel, centered on the central ray and perpendicular to it, sits
``source_to_detector`` mm further along the ray.  Detector columns run along
the in-plane direction ``(-sin b, cos b, 0)`` and rows along +z, with cell
centers on a symmetric grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import GeometryError

_GEOMETRY_KEYS = ("source_to_iso", "source_to_detector", "det_rows",
                  "det_cols", "det_pitch", "n_views", "angular_range",
                  "view_angles")


@dataclass
class ConeBeamGeometry:
    source_to_iso: float  # mm
    source_to_detector: float  # mm
    det_rows: int
    det_cols: int
    det_pitch: float  # mm per detector cell
    n_views: int
    angular_range: float = 360.0  # degrees
    view_angles: tuple[float, ...] = None  # degrees; derived if omitted

    def __post_init__(self):
        if not self.source_to_iso > 0:
            raise GeometryError(
                f"source_to_iso must be positive, got {self.source_to_iso}")
        if not self.source_to_detector > self.source_to_iso:
            raise GeometryError(
                f"source_to_detector ({self.source_to_detector}) must exceed "
                f"source_to_iso ({self.source_to_iso})")
        for name in ("det_rows", "det_cols", "n_views"):
            value = getattr(self, name)
            if not (isinstance(value, (int, np.integer)) and value >= 1):
                raise GeometryError(f"{name} must be a positive integer, got {value!r}")
            setattr(self, name, int(value))
        if not self.det_pitch > 0:
            raise GeometryError(f"det_pitch must be positive, got {self.det_pitch}")
        if not 0 < self.angular_range <= 360.0:
            raise GeometryError(
                f"angular_range must be in (0, 360], got {self.angular_range}")
        if self.view_angles is None:
            step = self.angular_range / self.n_views
            self.view_angles = tuple(k * step for k in range(self.n_views))
        else:
            self.view_angles = tuple(float(a) for a in self.view_angles)
            if len(self.view_angles) != self.n_views:
                raise GeometryError(
                    f"view_angles has {len(self.view_angles)} entries for "
                    f"n_views={self.n_views}")

    def angular_step(self) -> float:
        """Angular increment per view, in radians."""
        return math.radians(self.angular_range) / self.n_views

    def magnification(self) -> float:
        return self.source_to_detector / self.source_to_iso

    def detector_u(self) -> np.ndarray:
        """In-plane (column) cell-center offsets on the panel, mm."""
        return (np.arange(self.det_cols) - (self.det_cols - 1) / 2.0) * self.det_pitch

    def detector_v(self) -> np.ndarray:
        """Axial (row) cell-center offsets on the panel, mm."""
        return (np.arange(self.det_rows) - (self.det_rows - 1) / 2.0) * self.det_pitch

    def fov_radius(self) -> float:
        """Radius of the fully-sampled cylinder at the isocenter, mm."""
        half_w = (self.det_cols * self.det_pitch / 2.0) / self.magnification()
        return self.source_to_iso * half_w / math.hypot(self.source_to_iso, half_w)

    def fov_half_height(self) -> float:
        """Half-height of the illuminated region at the isocenter, mm."""
        return (self.det_rows * self.det_pitch / 2.0) / self.magnification()

    def to_dict(self) -> dict:
        return {
            "source_to_iso": self.source_to_iso,
            "source_to_detector": self.source_to_detector,
            "det_rows": self.det_rows,
            "det_cols": self.det_cols,
            "det_pitch": self.det_pitch,
            "n_views": self.n_views,
            "angular_range": self.angular_range,
            "view_angles": list(self.view_angles),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "ConeBeamGeometry":
        unknown = set(payload) - set(_GEOMETRY_KEYS)
        if unknown:
            raise GeometryError(f"unknown geometry keys: {sorted(unknown)}")
        missing = set(_GEOMETRY_KEYS) - {"view_angles"} - set(payload)
        if missing:
            raise GeometryError(f"missing geometry keys: {sorted(missing)}")
        kwargs = dict(payload)
        if kwargs.get("view_angles") is not None:
            kwargs["view_angles"] = tuple(kwargs["view_angles"])
        return cls(**kwargs)


def desk_preset() -> ConeBeamGeometry:
    """Minutes-scale bench geometry: 96x96 panel of 2 mm cells, 60 views
    over a full circle, magnification 2.  Pairs with 64 mm^3 volumes of
    1 mm voxels."""
    return ConeBeamGeometry(source_to_iso=300.0, source_to_detector=600.0,
                            det_rows=96, det_cols=96, det_pitch=2.0,
                            n_views=60, angular_range=360.0)


def koning_preset() -> ConeBeamGeometry:
    """Full-scale breast-CT geometry: 768x1024 panel of 0.388 mm cells,
    300 views over a full circle.  Source distances are placeholder values
    (the panel and sampling specs do not determine them); reconstruct the
    inscribed cylinder, not a full-width cube."""
    return ConeBeamGeometry(source_to_iso=650.0, source_to_detector=923.0,
                            det_rows=768, det_cols=1024, det_pitch=0.388,
                            n_views=300, angular_range=360.0)
