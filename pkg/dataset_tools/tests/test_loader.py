import json

import numpy as np
import pytest

from scenetools.manifest import (
    ChecksumError,
    ManifestError,
    load_depth,
    load_manifest,
    load_sample,
)
from scenetools.ply import PlyError, read_ply


class TestManifest:
    def test_all_records_present(self, manifest_path):
        header, records = load_manifest(manifest_path)
        assert header["tool"] == "synthrooms"
        assert len(records) == 12
        for rec in records:
            assert rec.points is not None
            assert rec.points.path.is_absolute()
            assert rec.points.path.exists()
            assert len(rec.frames) == 1

    def test_version_gate(self, manifest_path, tmp_path):
        lines = manifest_path.read_text().splitlines()
        header = json.loads(lines[0])
        header["version"] = "9.9.0"
        bad = tmp_path / "manifest.jsonl"
        bad.write_text("\n".join([json.dumps(header), *lines[1:]]) + "\n")
        with pytest.raises(ManifestError):
            load_manifest(bad)

    def test_tool_gate(self, manifest_path, tmp_path):
        lines = manifest_path.read_text().splitlines()
        header = json.loads(lines[0])
        header["tool"] = "somethingelse"
        bad = tmp_path / "manifest.jsonl"
        bad.write_text("\n".join([json.dumps(header), *lines[1:]]) + "\n")
        with pytest.raises(ManifestError):
            load_manifest(bad)

    def test_record_count_gate(self, manifest_path, tmp_path):
        lines = manifest_path.read_text().splitlines()
        bad = tmp_path / "manifest.jsonl"
        bad.write_text("\n".join(lines[:-1]) + "\n")  # drop one record
        with pytest.raises(ManifestError):
            load_manifest(bad)


class TestSamples:
    def test_checksum_verified_load(self, manifest_path):
        _, records = load_manifest(manifest_path)
        sample = load_sample(records[0])
        assert len(sample) == 40000
        assert sample.object_ids is not None

    def test_positions_match_raw_bytes(self, manifest_path):
        # The loader must not reorder or transform: decode the vertex block
        # by hand and compare element-wise.
        _, records = load_manifest(manifest_path)
        path = records[0].points.path
        blob = path.read_bytes()
        body = blob[blob.find(b"end_header\n") + len(b"end_header\n"):]
        header = blob[: blob.find(b"end_header\n")].decode()
        assert "property double x" in header
        raw = np.frombuffer(
            body, dtype=[("x", "<f8"), ("y", "<f8"), ("z", "<f8"), ("object_id", "<i4")]
        )
        cloud = read_ply(path)
        assert np.array_equal(cloud.positions[:, 0], raw["x"])
        assert np.array_equal(cloud.positions[:, 1], raw["y"])
        assert np.array_equal(cloud.positions[:, 2], raw["z"])
        assert np.array_equal(cloud.object_ids, raw["object_id"])

    def test_corruption_detected(self, manifest_path):
        _, records = load_manifest(manifest_path)
        path = records[1].points.path
        data = path.read_bytes()
        try:
            path.write_bytes(data[:-4] + b"\x00\x00\x00\x00")
            with pytest.raises(ChecksumError):
                load_sample(records[1])
        finally:
            path.write_bytes(data)

    def test_missing_file_detected(self, manifest_path):
        _, records = load_manifest(manifest_path)
        path = records[2].points.path
        moved = path.with_suffix(".moved")
        path.rename(moved)
        try:
            with pytest.raises(ChecksumError):
                load_sample(records[2])
        finally:
            moved.rename(path)

    def test_truncated_ply_rejected(self, manifest_path, tmp_path):
        _, records = load_manifest(manifest_path)
        data = records[0].points.path.read_bytes()
        bad = tmp_path / "trunc.ply"
        bad.write_bytes(data[: len(data) // 2])
        with pytest.raises(PlyError):
            read_ply(bad)

    def test_depth_frames_load(self, manifest_path):
        _, records = load_manifest(manifest_path)
        depth, meta = load_depth(records[0].frames[0])
        assert depth.shape == (480, 640)
        assert depth.max() > 0.0
        assert len(meta["pose"]) == 16
        assert len(meta["intrinsics"]) == 4
