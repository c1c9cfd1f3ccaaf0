import subprocess
import sys

import pytest

CONFIG_TOML = """
[dataset]
object_source = "harmonics"
n_objects = 30
n_scenes = 12
view_mode = "both"
master_seed = 4242
mesh_polar = 32
mesh_azimuth = 64
workers = 2
"""


@pytest.fixture(scope="session")
def dataset(tmp_path_factory):
    """A small dataset produced by the generator CLI (the only interface
    this package is allowed to consume)."""
    root = tmp_path_factory.mktemp("generated")
    cfg = root / "cfg.toml"
    cfg.write_text(CONFIG_TOML)
    out = root / "data"
    subprocess.run(
        [
            sys.executable, "-m", "synthrooms.cli", "gen-scenes",
            "--config", str(cfg), "--view", "both", "--output", str(out),
        ],
        check=True,
        capture_output=True,
        text=True,
    )
    return out


@pytest.fixture(scope="session")
def manifest_path(dataset):
    return dataset / "manifest.jsonl"
