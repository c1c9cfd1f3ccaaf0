"""Manifest loading and sample access with checksum verification."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .ply import PlyCloud, read_ply

SUPPORTED_TOOL = "synthrooms"
SUPPORTED_VERSIONS = ("0.1",)  # major.minor prefixes this reader understands


class ManifestError(ValueError):
    pass


class ChecksumError(ValueError):
    pass


@dataclass
class FileRef:
    path: Path  # resolved absolute path
    sha256: str

    def verify(self) -> None:
        if not self.path.exists():
            raise ChecksumError(f"missing file: {self.path}")
        h = hashlib.sha256()
        with open(self.path, "rb") as f:
            for chunk in iter(lambda: f.read(1 << 20), b""):
                h.update(chunk)
        if h.hexdigest() != self.sha256:
            raise ChecksumError(f"checksum mismatch: {self.path}")


@dataclass
class FrameRef:
    depth: FileRef
    meta: FileRef
    object_ids: list[int]


@dataclass
class DatasetRecord:
    index: int
    seed: int
    scene: dict
    points: FileRef | None
    frames: list[FrameRef]
    raw: dict = field(repr=False, default_factory=dict)

    @property
    def n_placements(self) -> int:
        return len(self.scene.get("placements", []))


@dataclass
class LoadedSample:
    record: DatasetRecord
    positions: np.ndarray
    colors: np.ndarray | None
    object_ids: np.ndarray | None

    def __len__(self) -> int:
        return self.positions.shape[0]


def _file_ref(base: Path, entry: dict) -> FileRef:
    return FileRef(path=(base / entry["path"]).resolve(), sha256=entry["sha256"])


def load_manifest(path) -> tuple[dict, list[DatasetRecord]]:
    """Parse a manifest, check tool/version compatibility, and resolve all
    file references to absolute paths. Checksums are verified lazily via
    FileRef.verify / load_sample."""
    path = Path(path)
    base = path.parent
    with open(path, "r", encoding="utf-8") as f:
        lines = [json.loads(line) for line in f if line.strip()]
    if not lines:
        raise ManifestError(f"{path}: empty manifest")
    header = lines[0]
    if header.get("kind") != "header":
        raise ManifestError(f"{path}: first record is not a header")
    if header.get("tool") != SUPPORTED_TOOL:
        raise ManifestError(f"{path}: unsupported tool {header.get('tool')!r}")
    version = str(header.get("version", ""))
    if not any(version.startswith(v) for v in SUPPORTED_VERSIONS):
        raise ManifestError(
            f"{path}: tool version {version!r} not in supported {SUPPORTED_VERSIONS}"
        )

    records = []
    for raw in lines[1:]:
        files = raw.get("files", {})
        points = _file_ref(base, files["points"]) if "points" in files else None
        frames = [
            FrameRef(
                depth=_file_ref(base, fr["depth"]),
                meta=_file_ref(base, fr["meta"]),
                object_ids=list(fr.get("object_ids", [])),
            )
            for fr in raw.get("frames", [])
        ]
        records.append(
            DatasetRecord(
                index=raw["index"],
                seed=raw["seed"],
                scene=raw.get("scene", {}),
                points=points,
                frames=frames,
                raw=raw,
            )
        )
    declared = header.get("n_records")
    if declared is not None and declared != len(records):
        raise ManifestError(
            f"{path}: header declares {declared} records, found {len(records)}"
        )
    return header, records


def load_sample(record: DatasetRecord, verify: bool = True) -> LoadedSample:
    """Load a record's point cloud, verifying its checksum first."""
    if record.points is None:
        raise ManifestError(f"record {record.index} has no point-cloud file")
    if verify:
        record.points.verify()
    cloud: PlyCloud = read_ply(record.points.path)
    return LoadedSample(record, cloud.positions, cloud.colors, cloud.object_ids)


def load_depth(frame: FrameRef, verify: bool = True) -> tuple[np.ndarray, dict]:
    """Load a depth frame (meters) and its sidecar record."""
    if verify:
        frame.depth.verify()
        frame.meta.verify()
    img = Image.open(frame.depth.path)
    depth = np.asarray(img, dtype=np.uint16).astype(np.float64) / 1000.0
    meta = json.loads(frame.meta.path.read_text())
    return depth, meta
