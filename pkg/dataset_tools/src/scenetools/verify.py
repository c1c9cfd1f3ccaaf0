"""Independent dataset integrity checks.

Re-derives the generator's invariants from the files alone: checksums,
object counts per scene, exported point counts, voxel uniqueness, and
depth-frame object counts. Intentionally shares no code with the
generator's own validator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .manifest import ChecksumError, DatasetRecord, load_sample


@dataclass
class VerifyReport:
    n_records: int
    problems: list[str]

    @property
    def ok(self) -> bool:
        return not self.problems

    def summary(self) -> str:
        head = f"{self.n_records} record(s): " + (
            "OK" if self.ok else f"{len(self.problems)} problem(s)"
        )
        return "\n".join([head, *self.problems])


def verify_dataset(
    header: dict,
    records: list[DatasetRecord],
    voxel_scenes: int = 10,
) -> VerifyReport:
    cfg = header.get("config", {})
    rules = cfg.get("rules", {})
    min_objects = rules.get("min_objects", 12)
    max_objects = rules.get("max_objects", 16)
    scene_points = rules.get("scene_points", 40000)
    voxel = rules.get("voxel_size", 0.04)
    min_view_objects = cfg.get("min_view_objects", 7)

    problems: list[str] = []
    voxel_checked = 0
    for record in records:
        tag = f"scene {record.index}"
        if not (min_objects <= record.n_placements <= max_objects):
            problems.append(
                f"{tag}: {record.n_placements} objects outside "
                f"[{min_objects}, {max_objects}]"
            )
        if record.points is not None:
            try:
                sample = load_sample(record, verify=True)
            except (ChecksumError, ValueError) as exc:
                problems.append(f"{tag}: {exc}")
                sample = None
            if sample is not None:
                if len(sample) != scene_points:
                    problems.append(
                        f"{tag}: {len(sample)} points, expected {scene_points}"
                    )
                if voxel_checked < voxel_scenes:
                    idx = np.floor(sample.positions / voxel).astype(np.int64)
                    dupes = len(sample) - len(np.unique(idx, axis=0))
                    if dupes:
                        problems.append(f"{tag}: {dupes} duplicate voxel(s)")
                    voxel_checked += 1
        for fi, frame in enumerate(record.frames):
            try:
                frame.depth.verify()
                frame.meta.verify()
            except ChecksumError as exc:
                problems.append(f"{tag} frame {fi}: {exc}")
                continue
            if len(frame.object_ids) < min_view_objects:
                problems.append(
                    f"{tag} frame {fi}: {len(frame.object_ids)} qualifying "
                    f"objects below {min_view_objects}"
                )
    return VerifyReport(len(records), problems)
