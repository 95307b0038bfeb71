"""File formats for volumes and projection sets.

Each field is stored as a pair of files: a JSON sidecar describing layout
(``dims``/``voxel_size`` or ``geometry``, ``dtype: "f32le"``, axis order
slowest-to-fastest) and a raw little-endian float32 blob, guarded by a
SHA-256 content checksum.  Loaders verify the checksum and the declared
shape before handing data to the container constructors.
"""

from __future__ import annotations

import hashlib
import json
import os

import numpy as np

from .containers import ImageVolume, ProjectionSet
from .errors import DataError, ShapeError
from .geometry import ConeBeamGeometry

__all__ = ["array_checksum", "save_volume", "load_volume",
           "save_projections", "load_projections", "load_json", "save_json"]

VOLUME_FORMAT = "volume-f32le-v1"
PROJECTIONS_FORMAT = "projections-f32le-v1"


def array_checksum(arr) -> str:
    """Content checksum of an array: dtype, shape, and raw bytes."""
    arr = np.ascontiguousarray(arr)
    h = hashlib.sha256()
    h.update(f"{arr.dtype.str}|{arr.shape}|".encode("ascii"))
    h.update(arr.tobytes())
    return "sha256:" + h.hexdigest()


def _blob_checksum(blob: bytes) -> str:
    return "sha256:" + hashlib.sha256(blob).hexdigest()


def save_json(doc: dict, path) -> None:
    with open(os.fspath(path), "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def load_json(path) -> dict:
    path = os.fspath(path)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise DataError(f"file not found: {path}")
    except json.JSONDecodeError as exc:
        raise DataError(f"{path} is not valid JSON: {exc}")


def _write_pair(json_path, doc: dict, blob: bytes) -> None:
    json_path = os.fspath(json_path)
    if not json_path.endswith(".json"):
        raise DataError(f"sidecar path must end in .json, got {json_path!r}")
    bin_name = os.path.basename(json_path)[:-5] + ".bin"
    doc = dict(doc, data_file=bin_name, checksum=_blob_checksum(blob))
    with open(os.path.join(os.path.dirname(json_path) or ".", bin_name), "wb") as fh:
        fh.write(blob)
    save_json(doc, json_path)


def _read_blob(json_path: str, doc: dict) -> np.ndarray:
    bin_path = os.path.join(os.path.dirname(json_path) or ".", doc["data_file"])
    try:
        with open(bin_path, "rb") as fh:
            blob = fh.read()
    except FileNotFoundError:
        raise DataError(f"data blob not found: {bin_path}")
    if _blob_checksum(blob) != doc.get("checksum"):
        raise DataError(f"checksum mismatch for {bin_path}")
    return np.frombuffer(blob, dtype="<f4")


def _check_doc(json_path: str, doc: dict, expected_format: str, keys) -> None:
    if doc.get("format") != expected_format:
        raise DataError(f"{json_path}: expected format {expected_format!r}, "
                        f"got {doc.get('format')!r}")
    if doc.get("dtype") != "f32le":
        raise DataError(f"{json_path}: unsupported dtype {doc.get('dtype')!r}")
    missing = [k for k in keys if k not in doc]
    if missing:
        raise DataError(f"{json_path}: sidecar is missing keys {missing}")


def save_volume(volume: ImageVolume, json_path) -> None:
    """Write an image volume as sidecar + blob (z slowest, x fastest)."""
    blob = np.ascontiguousarray(volume.data, dtype="<f4").tobytes()
    doc = {
        "format": VOLUME_FORMAT,
        "dims": list(volume.dims),
        "voxel_size": volume.voxel_size,
        "dtype": "f32le",
        "order": "z,y,x (slowest to fastest)",
    }
    _write_pair(json_path, doc, blob)


def load_volume(json_path) -> ImageVolume:
    json_path = os.fspath(json_path)
    doc = load_json(json_path)
    _check_doc(json_path, doc, VOLUME_FORMAT,
               ("dims", "voxel_size", "data_file", "checksum"))
    flat = _read_blob(json_path, doc)
    nx, ny, nz = (int(d) for d in doc["dims"])
    if flat.size != nx * ny * nz:
        raise ShapeError(f"{json_path}: blob holds {flat.size} values, "
                         f"dims {doc['dims']} need {nx * ny * nz}")
    data = flat.reshape(nz, ny, nx).copy()
    return ImageVolume(dims=(nx, ny, nz), voxel_size=float(doc["voxel_size"]),
                       data=data)


def save_projections(projections: ProjectionSet, json_path) -> None:
    """Write a projection set: geometry + view mask sidecar, f32le blob."""
    blob = np.ascontiguousarray(projections.data, dtype="<f4").tobytes()
    doc = {
        "format": PROJECTIONS_FORMAT,
        "geometry": projections.geometry.to_dict(),
        "view_mask": [int(m) for m in projections.view_mask],
        "dtype": "f32le",
        "order": "view,row,col (slowest to fastest)",
    }
    _write_pair(json_path, doc, blob)


def load_projections(json_path) -> ProjectionSet:
    json_path = os.fspath(json_path)
    doc = load_json(json_path)
    _check_doc(json_path, doc, PROJECTIONS_FORMAT,
               ("geometry", "view_mask", "data_file", "checksum"))
    geometry = ConeBeamGeometry.from_dict(doc["geometry"])
    flat = _read_blob(json_path, doc)
    shape = (geometry.n_views, geometry.det_rows, geometry.det_cols)
    if flat.size != int(np.prod(shape)):
        raise ShapeError(f"{json_path}: blob holds {flat.size} values, "
                         f"geometry needs {int(np.prod(shape))}")
    mask = np.asarray(doc["view_mask"], dtype=bool)
    if mask.shape != (geometry.n_views,):
        raise ShapeError(f"{json_path}: view_mask length {mask.size} != "
                         f"n_views {geometry.n_views}")
    data = flat.reshape(shape).copy()
    return ProjectionSet(geometry=geometry, data=data, view_mask=mask)
