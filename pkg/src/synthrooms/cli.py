"""Command-line interface.

Subcommands: gen-objects, gen-scenes, render-depth, crop, stats, validate.
Configuration comes from an optional TOML file plus flag overrides; the
output directory can also be set through the SYNTHROOMS_OUTPUT environment
variable.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

from . import analysis, crops, fractal, harmonics, meshio, pipeline
from .seeds import rng_for


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="TOML configuration file")
    p.add_argument("--output", help=f"output directory (default: ${pipeline.OUTPUT_ENV_VAR} or ./dataset)")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--workers", type=int, help="parallel worker processes")
    p.add_argument("--limit", type=int, help="generate at most this many scenes")
    p.add_argument("--source", choices=["harmonics", "fractal", "cad"], help="object source")
    p.add_argument("--objects", type=int, dest="n_objects", help="object set size")
    p.add_argument("--scenes", type=int, dest="n_scenes", help="scene count")
    p.add_argument("--object-multiplier", type=float, help="scale factor on the object count")
    p.add_argument("--scene-multiplier", type=float, help="scale factor on the scene count")
    p.add_argument("--cad-dir", help="directory of OFF/OBJ meshes for the cad source")


def _build_config(args, view_mode: str | None = None) -> pipeline.GenerationConfig:
    if args.config:
        cfg = pipeline.load_config(args.config)
    else:
        cfg = pipeline.GenerationConfig()
    updates = {}
    if view_mode is not None:
        updates["view_mode"] = view_mode
    if args.output:
        updates["output_dir"] = args.output
    elif os.environ.get(pipeline.OUTPUT_ENV_VAR):
        updates["output_dir"] = os.environ[pipeline.OUTPUT_ENV_VAR]
    for flag, name in [
        ("seed", "master_seed"),
        ("workers", "workers"),
        ("limit", "limit"),
        ("source", "object_source"),
        ("n_objects", "n_objects"),
        ("n_scenes", "n_scenes"),
        ("object_multiplier", "object_multiplier"),
        ("scene_multiplier", "scene_multiplier"),
        ("cad_dir", "cad_dir"),
    ]:
        value = getattr(args, flag, None)
        if value is not None:
            updates[name] = value
    frames = getattr(args, "frames", None)
    if frames is not None:
        updates["frames_per_scene"] = frames
    return dataclasses.replace(cfg, **updates)


def _cmd_gen_objects(args) -> int:
    cfg = _build_config(args)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    _, info = pipeline.generate_object_set(cfg, out)
    print(json.dumps(info, sort_keys=True, indent=2))
    return 0


def _cmd_gen_scenes(args) -> int:
    cfg = _build_config(args, view_mode=args.view)
    manifest = pipeline.run_generation(cfg)
    print(f"manifest: {manifest}")
    return 0


def _cmd_render_depth(args) -> int:
    cfg = _build_config(args, view_mode="single")
    manifest = pipeline.run_generation(cfg)
    print(f"manifest: {manifest}")
    return 0


def _cmd_crop(args) -> int:
    header, records = pipeline.read_manifest(args.manifest)
    base = Path(args.manifest).parent
    crop_cfg = crops.CropConfig(**header.get("config", {}).get("crop", {}))
    if args.knn is not None:
        crop_cfg = dataclasses.replace(crop_cfg, knn_count=args.knn)
    point_records = [r for r in records if r.get("files", {}).get("points")]
    if not point_records:
        print("manifest has no point-cloud records", file=sys.stderr)
        return 1
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    for i in range(args.count):
        record = point_records[i % len(point_records)]
        cloud = meshio.read_ply_points(base / record["files"]["points"]["path"])
        rng = rng_for(args.seed, "crop", i)
        if args.mode == "mae":
            parts = [("", crops.crop_knn(cloud, rng, crop_cfg.knn_count))]
        else:
            a, b = crops.crop_pair_contrastive(cloud, rng, crop_cfg)
            parts = [("_a", a), ("_b", b)]
        for suffix, part in parts:
            if args.augment:
                part = crops.standard_augment(part, rng)
            if args.pseudo_color:
                part = crops.pseudo_color(part, rng, crop_cfg)
            meshio.write_ply_points(out / f"crop_{i:06d}{suffix}.ply", part)
    print(f"wrote {args.count} {args.mode} crop(s) to {out}")
    return 0


def _cmd_stats(args) -> int:
    archive = Path(args.objects_file)
    if args.source == "harmonics":
        objects = pipeline.HarmonicObjectSet(harmonics.load_coefficients(archive))
    elif args.source == "fractal":
        objects = pipeline.FractalObjectSet(
            fractal.load_systems(archive), args.seed,
            fractal.DEFAULT_N_POINTS, fractal.DEFAULT_BURN_IN,
        )
    else:
        paths = [line for line in archive.read_text().splitlines() if line.strip()]
        objects = pipeline.CadObjectSet(paths, base_dir=args.cad_dir)
    rng = rng_for(args.seed, "stats")
    report = analysis.diversity_report(objects, args.pairs, rng, n_points=args.points)
    text = report.to_json()
    if args.report:
        Path(args.report).write_text(text + "\n")
    print(text)
    return 0


def _cmd_validate(args) -> int:
    report = pipeline.validate_dataset(args.manifest, voxel_check_scenes=args.voxel_scenes)
    print(report.summary())
    return 0 if report.ok else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="synthrooms",
        description="Deterministic generator of randomized synthetic 3D indoor scenes.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-objects", help="generate the object set archive only")
    _add_config_flags(p)
    p.set_defaults(func=_cmd_gen_objects)

    p = sub.add_parser("gen-scenes", help="generate scenes (multi-view by default)")
    _add_config_flags(p)
    p.add_argument("--view", choices=["multi", "single", "both"], default="multi")
    p.add_argument("--frames", type=int, help="depth frames per scene (single/both)")
    p.set_defaults(func=_cmd_gen_scenes)

    p = sub.add_parser("render-depth", help="generate single-view depth-map scenes")
    _add_config_flags(p)
    p.add_argument("--frames", type=int, help="depth frames per scene")
    p.set_defaults(func=_cmd_render_depth)

    p = sub.add_parser("crop", help="stream training crops from a generated dataset")
    p.add_argument("--manifest", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mode", choices=["mae", "contrastive"], default="mae")
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--output", required=True)
    p.add_argument("--knn", type=int, help="override the crop point count")
    p.add_argument("--pseudo-color", action="store_true")
    p.add_argument("--augment", action="store_true")
    p.set_defaults(func=_cmd_crop)

    p = sub.add_parser("stats", help="object-set diversity report")
    p.add_argument("--objects-file", required=True, help="object archive (objects.txt)")
    p.add_argument("--source", choices=["harmonics", "fractal", "cad"], default="harmonics")
    p.add_argument("--cad-dir", help="base directory for cad archives")
    p.add_argument("--pairs", type=int, default=2000)
    p.add_argument("--points", type=int, default=analysis.REPORT_POINTS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--report", help="also write the JSON report to this file")
    p.set_defaults(func=_cmd_stats)

    p = sub.add_parser("validate", help="re-check a dataset against its manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--voxel-scenes", type=int, default=10,
                   help="scenes to re-check for voxel uniqueness")
    p.set_defaults(func=_cmd_validate)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
