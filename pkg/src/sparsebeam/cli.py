"""Command-line interface for reproducible experiments.

Subcommands: phantom, scan, train, reconstruct, eval, export.  A single JSON
experiment config (schema-validated, unknown keys rejected) carries the
schedule, grid, training, pipeline, and dataset settings shared by train and
reconstruct; the remaining commands take direct arguments.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
failure.  The environment variable SPARSEBEAM_WORKERS overrides the
configured worker count.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys

import jsonschema
import numpy as np

from . import io
from .denoiser import ConvDenoiser, load_model, save_model
from .errors import (ConfigurationError, DataError, NumericalError,
                     SparseBeamError)
from .export import PLANES, export_png
from .fdk import RampFilter, fdk_reconstruct, hu_convert
from .geometry import desk_preset, koning_preset
from .grid import SubVolumeGrid
from .layers import default_descriptor
from .metrics import evaluate_volumes
from .phantom import load_phantom, project_analytic, random_phantom, save_phantom, voxelize
from .pipeline import PipelineConfig, inpaint_projections, run
from .projector import downsample_views, project
from .rng import derive_seed
from .schedule import linear_schedule
from .training import TrainConfig, VolumePairSampler, suggest_data_scale, train

_PRESETS = {"desk": desk_preset, "koning": koning_preset}

_POS_INT = {"type": "integer", "minimum": 1}
_POS_NUM = {"type": "number", "exclusiveMinimum": 0}
_TRIPLE = {"type": "array", "items": _POS_INT, "minItems": 3, "maxItems": 3}

_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "geometry": {
            "type": "object", "additionalProperties": False,
            "properties": {"preset": {"enum": sorted(_PRESETS)},
                           "n_views": _POS_INT},
        },
        "schedule": {
            "type": "object", "additionalProperties": False,
            "properties": {"T": _POS_INT, "beta_start": _POS_NUM,
                           "beta_end": _POS_NUM,
                           "reverse_coeff": {"enum": ["alpha", "alpha_bar"]}},
        },
        "grid": {
            "type": "object", "additionalProperties": False,
            "properties": {"sub_size": _TRIPLE},
        },
        "train": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "iterations": {"type": "integer", "minimum": 0},
                "batch_size": _POS_INT,
                "lr_start": _POS_NUM,
                "lr_end": _POS_NUM,
                "weight_decay": {"type": "number", "minimum": 0},
                "seed": {"type": "integer", "minimum": 0},
                "descriptor": {
                    "type": "object", "additionalProperties": False,
                    "properties": {"base_width": _POS_INT,
                                   "level2_width": _POS_INT,
                                   "temb_width": _POS_INT},
                },
            },
        },
        "pipeline": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "run_seed": {"type": "integer", "minimum": 0},
                "workers": _POS_INT,
                "keep_every": _POS_INT,
                "data_consistency": {"type": "boolean"},
                "skip_refine": {"type": "boolean"},
                "block_batch": _POS_INT,
                "out_dims": _TRIPLE,
                "out_voxel": _POS_NUM,
                "filter_window": {"enum": ["ram-lak", "hann"]},
                "denoiser_p": {"type": "string"},
                "denoiser_i": {"type": "string"},
            },
        },
        "dataset": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "cases": {
                    "type": "array",
                    "items": {
                        "type": "object", "additionalProperties": False,
                        "properties": {
                            "projections_full": {"type": "string"},
                            "projections_sparse": {"type": "string"},
                        },
                        "required": ["projections_full", "projections_sparse"],
                    },
                },
            },
        },
        "output_dir": {"type": "string"},
    },
}


def _load_config(path) -> dict:
    try:
        doc = io.load_json(path)
    except DataError as exc:
        raise ConfigurationError(str(exc))
    try:
        jsonschema.validate(doc, _SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigurationError(f"config {path}: {exc.message} (at {where})")
    return doc


def _schedule_from(doc: dict):
    s = doc.get("schedule", {})
    return linear_schedule(T=s.get("T", 1000),
                           beta_start=s.get("beta_start", 1e-4),
                           beta_end=s.get("beta_end", 2e-2),
                           reverse_coeff=s.get("reverse_coeff", "alpha"))


def _effective_workers(configured: int) -> int:
    env = os.environ.get("SPARSEBEAM_WORKERS")
    if env is None or env == "":
        return int(configured)
    try:
        value = int(env)
    except ValueError:
        raise ConfigurationError(f"SPARSEBEAM_WORKERS must be an integer, got {env!r}")
    if value < 1:
        raise ConfigurationError(f"SPARSEBEAM_WORKERS must be >= 1, got {value}")
    return value


def _sub_size(doc: dict) -> tuple:
    return tuple(doc.get("grid", {}).get("sub_size", (16, 16, 16)))


def _pipeline_config_from(doc: dict) -> PipelineConfig:
    pl = doc.get("pipeline", {})
    return PipelineConfig(
        run_seed=pl.get("run_seed", 0),
        workers=_effective_workers(pl.get("workers", 1)),
        schedule=_schedule_from(doc),
        denoiser_p=pl.get("denoiser_p"),
        denoiser_i=pl.get("denoiser_i"),
        keep_every=pl.get("keep_every", 1),
        sub_size=_sub_size(doc),
        data_consistency=pl.get("data_consistency", True),
        skip_refine=pl.get("skip_refine", False),
        block_batch=pl.get("block_batch", 8),
        out_dims=tuple(pl.get("out_dims", (64, 64, 64))),
        out_voxel=pl.get("out_voxel", 1.0),
        filter_window=pl.get("filter_window", "ram-lak"),
    )


def _geometry_for(preset: str, n_views=None):
    geo = _PRESETS[preset]()
    if n_views is not None:
        geo = dataclasses.replace(geo, n_views=int(n_views), view_angles=None)
    return geo


# -- commands ---------------------------------------------------------------


def cmd_phantom(args) -> int:
    if (args.spec is None) == (args.random is None):
        raise ConfigurationError("give either a spec file or --random SEED")
    if args.random is not None:
        phantom = random_phantom(args.random, _geometry_for(args.geometry))
    else:
        phantom = load_phantom(args.spec)
    volume = voxelize(phantom, dims=tuple(args.dims), voxel_size=args.voxel)
    save_phantom(f"{args.out}.phantom.json", phantom)
    io.save_volume(volume, f"{args.out}.volume.json")
    print(f"wrote {args.out}.phantom.json and {args.out}.volume.json "
          f"({'x'.join(str(d) for d in args.dims)} @ {args.voxel} mm)")
    return 0


def cmd_scan(args) -> int:
    geometry = _geometry_for(args.geometry, args.views)
    doc = io.load_json(args.input)
    if isinstance(doc, dict) and doc.get("format") == io.VOLUME_FORMAT:
        full = project(io.load_volume(args.input), geometry)
    else:
        full = project_analytic(load_phantom(args.input), geometry)
    sparse = downsample_views(full, keep_every=args.keep_every)
    io.save_projections(full, f"{args.out}.full.json")
    io.save_projections(sparse, f"{args.out}.sparse.json")
    print(f"wrote {args.out}.full.json ({full.n_present} views) and "
          f"{args.out}.sparse.json ({sparse.n_present} present)")
    return 0


def _loss_csv(path, log) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("iteration,loss,lr\n")
        for i, (loss, lr) in enumerate(zip(log.losses, log.lrs)):
            fh.write(f"{i},{loss!r},{lr!r}\n")


def _pad_to_blocks(field, block_size):
    """Zero-pad each axis to the next block multiple so training fields cover
    the padded-edge layout the pipeline grid produces at inference."""
    pad = [(0, -(-d // b) * b - d) for d, b in zip(field.shape, block_size)]
    return np.pad(field, pad) if any(p for _, p in pad) else field


def cmd_train(args) -> int:
    doc = _load_config(args.config)
    cases = doc.get("dataset", {}).get("cases", [])
    if not cases:
        raise ConfigurationError("config dataset.cases must list at least one "
                                 "projections_full/projections_sparse pair")
    out_dir = doc.get("output_dir", ".")
    os.makedirs(out_dir, exist_ok=True)
    schedule = _schedule_from(doc)
    tr = doc.get("train", {})
    tconf = TrainConfig(iterations=tr.get("iterations", 2000),
                        batch_size=tr.get("batch_size", 8),
                        lr_start=tr.get("lr_start", 1e-4),
                        lr_end=tr.get("lr_end", 1e-5),
                        weight_decay=tr.get("weight_decay", 1e-4),
                        seed=tr.get("seed", 0))
    descriptor = default_descriptor(**tr.get("descriptor", {}))
    block_size = _sub_size(doc)

    if args.domain == "p":
        # clean = full-scan projections; condition = masked sparse projections
        pairs = []
        for case in cases:
            full = io.load_projections(case["projections_full"])
            sparse = io.load_projections(case["projections_sparse"])
            pairs.append((_pad_to_blocks(full.data, block_size),
                          _pad_to_blocks(sparse.data, block_size)))
        name = "ddpm_p"
    else:
        # clean = full-view reconstruction; condition = reconstruction of
        # projections inpainted by the already-trained projection model
        pconf = _pipeline_config_from(doc)
        if not isinstance(pconf.denoiser_p, str):
            raise ConfigurationError("training domain i needs pipeline.denoiser_p "
                                     "to point at a trained projection model")
        den_p = load_model(pconf.denoiser_p)
        pairs = []
        for idx, case in enumerate(cases):
            full = io.load_projections(case["projections_full"])
            sparse = io.load_projections(case["projections_sparse"])
            grid = SubVolumeGrid(source_dims=sparse.data.shape,
                                 sub_size=block_size)
            seeds = [derive_seed(tconf.seed, f"traindata-{idx}", b)
                     for b in range(grid.count)]
            inpainted = inpaint_projections(
                sparse, den_p, schedule, grid, seeds,
                data_consistency=pconf.data_consistency,
                workers=pconf.workers, block_batch=pconf.block_batch)
            ramp = RampFilter(sparse.geometry.det_cols, window=pconf.filter_window)
            degraded = fdk_reconstruct(inpainted, out_dims=pconf.out_dims,
                                       out_voxel=pconf.out_voxel, ramp=ramp)
            target = fdk_reconstruct(full, out_dims=pconf.out_dims,
                                     out_voxel=pconf.out_voxel, ramp=ramp)
            pairs.append((_pad_to_blocks(target.data, block_size),
                          _pad_to_blocks(degraded.data, block_size)))
        name = "ddpm_i"

    scale = suggest_data_scale([clean for clean, _ in pairs])
    scaled = [(np.asarray(c, dtype=np.float32) / np.float32(scale),
               np.asarray(d, dtype=np.float32) / np.float32(scale))
              for c, d in pairs]
    sampler = VolumePairSampler(scaled, block_size=block_size)
    denoiser = ConvDenoiser(descriptor, seed=tconf.seed, data_scale=scale)
    log = train(denoiser, sampler, schedule, tconf)
    model_path = os.path.join(out_dir, f"{name}.json")
    save_model(denoiser, model_path)
    _loss_csv(os.path.join(out_dir, f"{name}_loss.csv"), log)
    final = log.losses[-1] if log.losses else float("nan")
    print(f"wrote {model_path} ({tconf.iterations} iterations, "
          f"final loss {final:.6g}, data_scale {scale:.6g})")
    return 0


def cmd_reconstruct(args) -> int:
    doc = _load_config(args.config)
    config = _pipeline_config_from(doc)
    sparse = io.load_projections(args.projections)
    volume, manifest = run(config, sparse)
    io.save_volume(volume, f"{args.out}.volume.json")
    io.save_json(manifest.to_dict(), f"{args.out}.manifest.json")
    spent = ", ".join(f"{k} {v:.2f}s" for k, v in manifest.timings.items())
    print(f"wrote {args.out}.volume.json and {args.out}.manifest.json ({spent})")
    return 0


def cmd_eval(args) -> int:
    recon = io.load_volume(args.recon)
    truth = io.load_volume(args.truth)
    metrics = evaluate_volumes(recon, truth)
    doc = {k: ("inf" if isinstance(v, float) and math.isinf(v) else v)
           for k, v in metrics.items()}
    text = json.dumps(doc, indent=2)
    print(text)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    return 0


def cmd_export(args) -> int:
    volume = io.load_volume(args.volume)
    if args.mu_water is not None:
        volume = hu_convert(volume, args.mu_water)
    export_png(volume, args.out, window=tuple(args.window),
               plane=args.plane, index=args.slice)
    print(f"wrote {args.out}")
    return 0


# -- parser / entry point -----------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sparsebeam",
        description="Sparse-view cone-beam CT reconstruction toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom", help="voxelize an ellipsoid phantom")
    p.add_argument("spec", nargs="?", default=None,
                   help="phantom JSON (omit when using --random)")
    p.add_argument("out", help="output path prefix")
    p.add_argument("--random", type=int, default=None, metavar="SEED",
                   help="generate a random phantom instead of reading a spec")
    p.add_argument("--geometry", choices=sorted(_PRESETS), default="desk")
    p.add_argument("--dims", type=int, nargs=3, default=(64, 64, 64),
                   metavar=("NX", "NY", "NZ"))
    p.add_argument("--voxel", type=float, default=1.0, help="voxel size in mm")
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("scan", help="simulate cone-beam projections")
    p.add_argument("input", help="phantom JSON or volume sidecar")
    p.add_argument("out", help="output path prefix")
    p.add_argument("--geometry", choices=sorted(_PRESETS), default="desk")
    p.add_argument("--views", type=int, default=None,
                   help="override the preset view count")
    p.add_argument("--keep-every", type=int, default=1, dest="keep_every",
                   help="keep every K-th view in the sparse output")
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("train", help="train a projection- or image-domain model")
    p.add_argument("--config", required=True, help="experiment config JSON")
    p.add_argument("--domain", choices=("p", "i"), required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("reconstruct", help="run the full pipeline on sparse views")
    p.add_argument("--config", required=True, help="experiment config JSON")
    p.add_argument("projections", help="sparse projection sidecar")
    p.add_argument("out", help="output path prefix")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("eval", help="PSNR/SSIM/RMSE of a reconstruction")
    p.add_argument("recon", help="reconstructed volume sidecar")
    p.add_argument("truth", help="reference volume sidecar")
    p.add_argument("--out", default=None, help="also write metrics JSON here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("export", help="write a windowed slice as 8-bit PNG")
    p.add_argument("volume", help="volume sidecar")
    p.add_argument("out", help="output PNG path")
    p.add_argument("--window", type=float, nargs=2, default=(-100.0, 550.0),
                   metavar=("LO", "HI"))
    p.add_argument("--plane", choices=PLANES, default="axial")
    p.add_argument("--slice", type=int, default=None,
                   help="slice index (default: middle)")
    p.add_argument("--mu-water", type=float, default=None, dest="mu_water",
                   help="convert from attenuation to HU with this mu_water first")
    p.set_defaults(func=cmd_export)

    return parser


def _exit_code(exc: SparseBeamError) -> int:
    if isinstance(exc, ConfigurationError):
        return 2
    if isinstance(exc, NumericalError):
        return 4
    return 3


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SparseBeamError as exc:
        stage = getattr(exc, "stage", None)
        where = f" [stage: {stage}]" if stage else ""
        print(f"error{where}: {exc}", file=sys.stderr)
        return _exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
