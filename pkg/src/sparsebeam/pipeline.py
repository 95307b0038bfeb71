"""Dual-domain reconstruction pipeline.

Sparse projections are partitioned into sub-volumes, each block is inpainted
by a conditional reverse-diffusion chain, the assembled full projection set
is reconstructed with FDK, and the image volume is refined block-wise by a
second chain.  Block tasks are pure functions of (condition, seed) — every
stochastic draw is keyed by a per-block seed — so a worker pool of any size
produces bit-identical results.  Blocks are batched through the denoiser in
fixed groups of ``block_batch`` (grouping depends only on block index, never
on worker count).

A denoiser's ``data_scale`` is honored on both domains: condition fields are
divided by it before sampling and outputs multiplied back afterwards.

Stage failures re-raise the original exception with two attributes attached:
``stage`` (the stage name) and ``manifest`` (a RunManifest of the stages that
completed before the failure).
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .containers import ImageVolume, ProjectionSet
from .denoiser import Denoiser, load_model
from .errors import ConfigurationError, ContractViolation, SparseBeamError
from .fdk import RampFilter, fdk_reconstruct
from .grid import SubVolume, SubVolumeGrid, assemble, partition
from .io import array_checksum
from .schedule import NoiseSchedule, linear_schedule

__all__ = ["PipelineConfig", "RunManifest", "inpaint_projections",
           "refine_image", "run"]


@dataclass
class PipelineConfig:
    """Everything a reconstruction run depends on besides the input data."""

    run_seed: int = 0
    workers: int = 1
    schedule: NoiseSchedule = field(default_factory=linear_schedule)
    denoiser_p: object = None   # Denoiser instance or model file path
    denoiser_i: object = None
    keep_every: int = 1         # view sparsity the input is expected to carry
    sub_size: tuple = (16, 16, 16)
    data_consistency: bool = True
    skip_refine: bool = False
    block_batch: int = 8
    out_dims: tuple = (64, 64, 64)
    out_voxel: float = 1.0
    filter_window: str = "ram-lak"

    def __post_init__(self):
        for name in ("workers", "keep_every", "block_batch"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 1:
                raise ConfigurationError(f"{name} must be a positive integer, got {v!r}")
        if not float(self.out_voxel) > 0:
            raise ConfigurationError(f"out_voxel must be positive, got {self.out_voxel!r}")
        self.sub_size = tuple(int(s) for s in self.sub_size)
        self.out_dims = tuple(int(d) for d in self.out_dims)

    def to_dict(self) -> dict:
        def den(d):
            if d is None:
                return None
            if isinstance(d, (str, os.PathLike)):
                return os.fspath(d)
            return f"<in-memory {type(d).__name__}>"

        return {
            "run_seed": int(self.run_seed),
            "workers": int(self.workers),
            "schedule": self.schedule.to_dict(),
            "denoiser_p": den(self.denoiser_p),
            "denoiser_i": den(self.denoiser_i),
            "keep_every": int(self.keep_every),
            "sub_size": list(self.sub_size),
            "data_consistency": bool(self.data_consistency),
            "skip_refine": bool(self.skip_refine),
            "block_batch": int(self.block_batch),
            "out_dims": list(self.out_dims),
            "out_voxel": float(self.out_voxel),
            "filter_window": self.filter_window,
        }


@dataclass
class RunManifest:
    """Audit record of one pipeline run; all fields JSON-compatible."""

    config: dict
    projection_grid: dict
    image_grid: dict | None
    block_seeds: dict
    timings: dict
    checksums: dict
    stages_completed: list

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "projection_grid": self.projection_grid,
            "image_grid": self.image_grid,
            "block_seeds": self.block_seeds,
            "timings": self.timings,
            "checksums": self.checksums,
            "stages_completed": self.stages_completed,
        }


def _as_denoiser(spec) -> Denoiser:
    if isinstance(spec, Denoiser):
        return spec
    if isinstance(spec, (str, os.PathLike)):
        return load_model(spec)
    raise ConfigurationError(f"expected a Denoiser or a model path, got {spec!r}")


def _sample_block_batch(conds: np.ndarray, seeds, denoiser, schedule) -> np.ndarray:
    """Reverse chains for a batch of blocks, one seed per block.

    Elementwise arithmetic and the per-block draw keys are identical to
    diffusion.sample, so per block this reproduces the single-field chain.
    """
    dtype = conds.dtype
    block_shape = conds.shape[1:]
    ys = np.stack([rng.gaussian_field(block_shape, s, t=schedule.T, purpose="init")
                   for s in seeds]).astype(dtype, copy=False)
    for t in range(schedule.T, 0, -1):
        eps_hat = np.asarray(denoiser.evaluate_batch(ys, conds, t))
        if eps_hat.shape != ys.shape:
            raise ContractViolation(
                f"denoiser returned shape {eps_hat.shape}, expected {ys.shape}")
        alpha = schedule.alpha(t)
        abar = schedule.alpha_bar(t)
        lead = schedule.reverse_lead(t)
        mean = lead * (ys - float((1.0 - alpha) / np.sqrt(1.0 - abar)) * eps_hat)
        sigma = schedule.sigma(t)
        if sigma == 0.0:
            ys = mean
        else:
            xi = np.stack([rng.gaussian_field(block_shape, s, t=t, purpose="xi")
                           for s in seeds]).astype(dtype, copy=False)
            ys = mean + sigma * xi
    return ys


def _sample_field(field_data: np.ndarray, denoiser: Denoiser, schedule, grid,
                  seeds, workers: int, block_batch: int) -> np.ndarray:
    """Partition, sample every block (grouped, optionally threaded), assemble."""
    if len(seeds) != grid.count:
        raise ConfigurationError(f"got {len(seeds)} block seeds for "
                                 f"{grid.count} blocks")
    scale = float(getattr(denoiser, "data_scale", 1.0))
    cond_field = np.asarray(field_data)
    if scale != 1.0:
        cond_field = cond_field / scale
    blocks = partition(cond_field, grid)
    groups = [list(range(s, min(s + block_batch, grid.count)))
              for s in range(0, grid.count, block_batch)]

    def work(group):
        conds = np.stack([blocks[j].data for j in group])
        return group, _sample_block_batch(conds, [seeds[j] for j in group],
                                          denoiser, schedule)

    if workers == 1:
        results = [work(g) for g in groups]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(work, groups))

    out = [None] * grid.count
    for group, ys in results:
        for k, j in enumerate(group):
            out[j] = SubVolume(index=j, coords=blocks[j].coords, data=ys[k])
    assembled = assemble(out, grid)
    if scale != 1.0:
        assembled = assembled * scale
    return assembled


def inpaint_projections(sparse: ProjectionSet, denoiser_p: Denoiser,
                        schedule: NoiseSchedule, grid: SubVolumeGrid, seeds,
                        *, data_consistency: bool = True, workers: int = 1,
                        block_batch: int = 8) -> ProjectionSet:
    """Fill absent views by conditional sampling over projection blocks.

    Each block's condition is the co-indexed block of the masked sparse data
    (absent views zero-filled).  With ``data_consistency`` on, cells of
    measured views are overwritten by their measurements after assembly.
    Returns a ProjectionSet with every view present.
    """
    sampled = _sample_field(sparse.data, denoiser_p, schedule, grid, seeds,
                            workers, block_batch)
    if data_consistency:
        sampled[sparse.view_mask] = sparse.data[sparse.view_mask]
    return ProjectionSet(geometry=sparse.geometry, data=sampled)


def refine_image(degraded: ImageVolume, denoiser_i: Denoiser,
                 schedule: NoiseSchedule, grid: SubVolumeGrid, seeds,
                 *, workers: int = 1, block_batch: int = 8) -> ImageVolume:
    """Refine an image volume block-wise, conditioning on the degraded blocks."""
    refined = _sample_field(degraded.data, denoiser_i, schedule, grid, seeds,
                            workers, block_batch)
    return ImageVolume(dims=degraded.dims, voxel_size=degraded.voxel_size,
                       data=refined)


def run(config: PipelineConfig, sparse: ProjectionSet):
    """Full pipeline: inpaint -> FDK -> refine.  Returns (volume, manifest)."""
    geo = sparse.geometry
    p_grid = SubVolumeGrid(source_dims=sparse.data.shape, sub_size=config.sub_size)
    p_seeds = [rng.derive_seed(config.run_seed, "inpaint", i)
               for i in range(p_grid.count)]
    i_grid = None
    block_seeds = {"inpaint": p_seeds}
    timings, checksums, completed = {}, {}, []

    def manifest() -> RunManifest:
        return RunManifest(config=config.to_dict(),
                           projection_grid=p_grid.to_dict(),
                           image_grid=i_grid.to_dict() if i_grid else None,
                           block_seeds=block_seeds, timings=timings,
                           checksums=checksums, stages_completed=completed)

    class _stage:
        def __init__(self, name):
            self.name = name

        def __enter__(self):
            self.start = time.perf_counter()
            return self

        def __exit__(self, exc_type, exc, tb):
            timings[self.name] = time.perf_counter() - self.start
            if exc is None:
                completed.append(self.name)
            elif isinstance(exc, SparseBeamError):
                exc.stage = self.name
                exc.manifest = manifest()
            return False

    with _stage("inpaint"):
        denoiser_p = _as_denoiser(config.denoiser_p)
        inpainted = inpaint_projections(
            sparse, denoiser_p, config.schedule, p_grid, p_seeds,
            data_consistency=config.data_consistency, workers=config.workers,
            block_batch=config.block_batch)
        checksums["inpainted_projections"] = array_checksum(inpainted.data)

    with _stage("fdk"):
        ramp = RampFilter(geo.det_cols, window=config.filter_window)
        volume = fdk_reconstruct(inpainted, out_dims=config.out_dims,
                                 out_voxel=config.out_voxel, ramp=ramp)
        checksums["fdk_volume"] = array_checksum(volume.data)

    if not config.skip_refine:
        i_grid = SubVolumeGrid(source_dims=volume.data.shape,
                               sub_size=config.sub_size)
        i_seeds = [rng.derive_seed(config.run_seed, "refine", i)
                   for i in range(i_grid.count)]
        block_seeds["refine"] = i_seeds
        with _stage("refine"):
            denoiser_i = _as_denoiser(config.denoiser_i)
            volume = refine_image(volume, denoiser_i, config.schedule, i_grid,
                                  i_seeds, workers=config.workers,
                                  block_batch=config.block_batch)
            checksums["refined_volume"] = array_checksum(volume.data)

    return volume, manifest()
