import json
import numpy as np
import pytest

from synthrooms import meshio
from synthrooms.cli import main
from synthrooms.pipeline import OUTPUT_ENV_VAR, read_manifest


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli_dataset")
    rc = main(
        [
            "gen-scenes", "--output", str(out), "--seed", "77",
            "--objects", "30", "--scenes", "3",
        ]
    )
    assert rc == 0
    return out


def test_gen_objects(tmp_path, capsys):
    rc = main(["gen-objects", "--output", str(tmp_path), "--objects", "12", "--seed", "5"])
    assert rc == 0
    info = json.loads(capsys.readouterr().out)
    assert info["count"] == 12
    assert (tmp_path / "objects.txt").exists()


def test_env_var_output(tmp_path, monkeypatch):
    monkeypatch.setenv(OUTPUT_ENV_VAR, str(tmp_path / "env_out"))
    rc = main(["gen-objects", "--objects", "12", "--seed", "5"])
    assert rc == 0
    assert (tmp_path / "env_out" / "objects.txt").exists()


def test_gen_scenes_manifest(dataset):
    header, records = read_manifest(dataset / "manifest.jsonl")
    assert len(records) == 3
    assert header["config"]["master_seed"] == 77


def test_limit_flag(tmp_path):
    rc = main(
        [
            "gen-scenes", "--output", str(tmp_path / "lim"), "--seed", "77",
            "--objects", "30", "--scenes", "10", "--limit", "2",
        ]
    )
    assert rc == 0
    _, records = read_manifest(tmp_path / "lim" / "manifest.jsonl")
    assert len(records) == 2


def test_crop_mae(dataset, tmp_path):
    out = tmp_path / "crops"
    rc = main(
        [
            "crop", "--manifest", str(dataset / "manifest.jsonl"),
            "--seed", "3", "--mode", "mae", "--count", "4",
            "--output", str(out), "--knn", "10000",
        ]
    )
    assert rc == 0
    files = sorted(out.glob("crop_*.ply"))
    assert len(files) == 4
    cloud = meshio.read_ply_points(files[0])
    assert len(cloud) == 10000


def test_crop_contrastive_with_color(dataset, tmp_path):
    out = tmp_path / "pairs"
    rc = main(
        [
            "crop", "--manifest", str(dataset / "manifest.jsonl"),
            "--seed", "4", "--mode", "contrastive", "--count", "2",
            "--output", str(out), "--knn", "8000", "--pseudo-color",
        ]
    )
    assert rc == 0
    files = sorted(out.glob("crop_*.ply"))
    assert len(files) == 4  # two pairs
    cloud = meshio.read_ply_points(files[0])
    assert cloud.colors is not None
    assert np.all((cloud.colors >= 0) & (cloud.colors <= 1))


def test_stats(dataset, tmp_path, capsys):
    report_path = tmp_path / "report.json"
    rc = main(
        [
            "stats", "--objects-file", str(dataset / "objects.txt"),
            "--source", "harmonics", "--pairs", "20", "--points", "256",
            "--seed", "1", "--report", str(report_path),
        ]
    )
    assert rc == 0
    report = json.loads(report_path.read_text())
    assert report["n_pairs"] == 20
    assert report["chamfer_min"] <= report["chamfer_p50"]


def test_validate_ok_and_corrupt(dataset, capsys):
    rc = main(["validate", "--manifest", str(dataset / "manifest.jsonl")])
    assert rc == 0

    ply = dataset / "scenes" / "scene_000000.ply"
    data = ply.read_bytes()
    try:
        ply.write_bytes(data[:-8])
        rc = main(["validate", "--manifest", str(dataset / "manifest.jsonl")])
        assert rc == 1
        assert "checksum" in capsys.readouterr().out
    finally:
        ply.write_bytes(data)


def test_render_depth_command(tmp_path):
    rc = main(
        [
            "render-depth", "--output", str(tmp_path / "sv"), "--seed", "9",
            "--objects", "30", "--scenes", "1",
        ]
    )
    assert rc == 0
    _, records = read_manifest(tmp_path / "sv" / "manifest.jsonl")
    assert len(records[0]["frames"]) == 1
    assert len(records[0]["frames"][0]["object_ids"]) >= 7
