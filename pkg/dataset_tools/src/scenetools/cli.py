"""scenetools CLI: inspect, preview, verify."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .manifest import load_manifest
from .preview import render_depth_preview, render_preview
from .verify import verify_dataset


def _cmd_inspect(args) -> int:
    header, records = load_manifest(args.manifest)
    cfg = header.get("config", {})
    print(f"tool:     {header.get('tool')} {header.get('version')}")
    print(f"source:   {header.get('objects', {}).get('source')}"
          f" ({header.get('objects', {}).get('count')} objects)")
    print(f"view:     {cfg.get('view_mode')}")
    print(f"seed:     {cfg.get('master_seed')}")
    print(f"records:  {len(records)}")
    n_points = sum(1 for r in records if r.points is not None)
    n_frames = sum(len(r.frames) for r in records)
    print(f"clouds:   {n_points}")
    print(f"frames:   {n_frames}")
    if args.index is not None:
        rec = records[args.index]
        print(f"-- record {rec.index} --")
        print(f"objects:  {rec.n_placements}")
        print(f"room:     {rec.scene.get('room_width'):.2f} x "
              f"{rec.scene.get('room_length'):.2f} m")
        if rec.points:
            print(f"points:   {rec.points.path.name}")
        for fi, frame in enumerate(rec.frames):
            print(f"frame {fi}:  {frame.depth.path.name} "
                  f"({len(frame.object_ids)} qualifying objects)")
    return 0


def _cmd_preview(args) -> int:
    _, records = load_manifest(args.manifest)
    out = Path(args.output)
    wrote = []
    for index in args.index or [records[0].index]:
        record = next(r for r in records if r.index == index)
        if record.points is not None:
            wrote.append(render_preview(record, out / f"scene_{index:06d}.png"))
        for fi in range(len(record.frames)):
            wrote.append(
                render_depth_preview(record, fi, out / f"depth_{index:06d}_{fi:02d}.png")
            )
    for path in wrote:
        print(path)
    return 0


def _cmd_verify(args) -> int:
    header, records = load_manifest(args.manifest)
    if args.limit is not None:
        records = records[: args.limit]
    report = verify_dataset(header, records, voxel_scenes=args.voxel_scenes)
    print(report.summary())
    return 0 if report.ok else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="scenetools",
        description="Inspect, preview, and verify generated scene datasets.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("inspect", help="summarize a dataset manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--index", type=int, help="also show one record in detail")
    p.set_defaults(func=_cmd_inspect)

    p = sub.add_parser("preview", help="write static preview images")
    p.add_argument("--manifest", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--index", type=int, nargs="*", help="record indices (default: first)")
    p.set_defaults(func=_cmd_preview)

    p = sub.add_parser("verify", help="re-check dataset invariants and checksums")
    p.add_argument("--manifest", required=True)
    p.add_argument("--limit", type=int, help="verify only the first N records")
    p.add_argument("--voxel-scenes", type=int, default=10)
    p.set_defaults(func=_cmd_verify)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
