"""Non-overlapped 16^3 sub-volume partitioning of 3D fields.

A grid covers a source field of shape ``source_dims`` with blocks of shape
``sub_size`` laid edge to edge (stride equals block size).  Fields whose
dimensions are not multiples of the block size are zero-padded at the high
end; assembly crops the padding back off, so partition -> assemble is a
bit-exact round trip.

Blocks are enumerated in C order over their (axis0, axis1, axis2) grid
coordinates — lexicographic in the block index tuple.  Volumes are stored
(z, y, x) and projection stacks (view, row, col), so this is lexicographic
(block_z, block_y, block_x) ordering for volumes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AssemblyError, ConfigurationError, ShapeError

__all__ = ["SubVolumeGrid", "SubVolume", "partition", "assemble"]


def _dims3(name: str, dims) -> tuple:
    dims = tuple(int(d) for d in dims)
    if len(dims) != 3 or any(d < 1 for d in dims):
        raise ConfigurationError(f"{name} must be three positive integers, got {dims}")
    return dims


@dataclass(eq=False)
class SubVolumeGrid:
    """Geometry of a non-overlapped block partition."""

    source_dims: tuple
    sub_size: tuple = (16, 16, 16)
    stride: tuple | None = None

    def __post_init__(self):
        self.source_dims = _dims3("source_dims", self.source_dims)
        self.sub_size = _dims3("sub_size", self.sub_size)
        if self.stride is None:
            self.stride = self.sub_size
        else:
            self.stride = _dims3("stride", self.stride)
        if self.stride != self.sub_size:
            raise ConfigurationError(
                f"partition is non-overlapped: stride {self.stride} must equal "
                f"sub_size {self.sub_size}")
        self.blocks_per_axis = tuple(-(-d // s) for d, s in zip(self.source_dims, self.sub_size))
        self.padded_dims = tuple(n * s for n, s in zip(self.blocks_per_axis, self.sub_size))

    @property
    def count(self) -> int:
        n0, n1, n2 = self.blocks_per_axis
        return n0 * n1 * n2

    def block_coords(self, index: int) -> tuple:
        """Grid coordinates (b0, b1, b2) of the block with the given flat index."""
        if not 0 <= index < self.count:
            raise AssemblyError(f"block index {index} outside 0..{self.count - 1}")
        n0, n1, n2 = self.blocks_per_axis
        b0, rest = divmod(index, n1 * n2)
        b1, b2 = divmod(rest, n2)
        return (b0, b1, b2)

    def block_slices(self, index: int) -> tuple:
        """Slices into the padded field for the given block."""
        coords = self.block_coords(index)
        return tuple(slice(b * s, (b + 1) * s) for b, s in zip(coords, self.sub_size))

    def to_dict(self) -> dict:
        return {"source_dims": list(self.source_dims),
                "sub_size": list(self.sub_size),
                "stride": list(self.stride)}

    @classmethod
    def from_dict(cls, d: dict) -> "SubVolumeGrid":
        return cls(source_dims=d["source_dims"], sub_size=d["sub_size"],
                   stride=d.get("stride"))


@dataclass(eq=False)
class SubVolume:
    """One block of a partitioned field, tagged with its grid position."""

    index: int
    coords: tuple
    data: np.ndarray


def partition(field, grid: SubVolumeGrid) -> list:
    """Split a field into grid blocks, zero-padding the ragged edge."""
    field = np.asarray(field)
    if field.shape != grid.source_dims:
        raise ShapeError(f"field shape {field.shape} != grid source_dims {grid.source_dims}")
    if field.shape == grid.padded_dims:
        padded = field
    else:
        padded = np.zeros(grid.padded_dims, dtype=field.dtype)
        padded[tuple(slice(0, d) for d in field.shape)] = field
    return [SubVolume(index=i, coords=grid.block_coords(i),
                      data=padded[grid.block_slices(i)].copy())
            for i in range(grid.count)]


def assemble(blocks, grid: SubVolumeGrid) -> np.ndarray:
    """Reassemble blocks into the original field shape.

    Every grid position must be covered exactly once; padding introduced by
    :func:`partition` is cropped off.
    """
    blocks = list(blocks)
    seen = {}
    for blk in blocks:
        if not 0 <= blk.index < grid.count:
            raise AssemblyError(f"block index {blk.index} does not belong to this grid "
                                f"(count {grid.count})")
        if blk.index in seen:
            raise AssemblyError(f"duplicate block index {blk.index}")
        data = np.asarray(blk.data)
        if data.shape != grid.sub_size:
            raise AssemblyError(f"block {blk.index} has shape {data.shape}, "
                                f"expected {grid.sub_size}")
        seen[blk.index] = data
    missing = [i for i in range(grid.count) if i not in seen]
    if missing:
        raise AssemblyError(f"missing block indices: {missing[:8]}"
                            + ("..." if len(missing) > 8 else ""))
    dtype = seen[0].dtype
    padded = np.empty(grid.padded_dims, dtype=dtype)
    for i in range(grid.count):
        padded[grid.block_slices(i)] = seen[i]
    return padded[tuple(slice(0, d) for d in grid.source_dims)].copy()
