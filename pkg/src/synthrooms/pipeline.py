"""End-to-end dataset generation.

A dataset is a pure function of (configuration, master seed): every random
stream is derived per (tag, index), scenes are generated independently by a
worker pool, and the manifest is an ordered, checksummed index of the
output files. Interrupted runs resume by regenerating only records whose
files are missing or fail their checksum.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import crops, fractal, harmonics, meshio, raycast, scenegen
from .geometry import normalize_unit_sphere
from .seeds import derive_seed, rng_for

TOOL_NAME = "synthrooms"
TOOL_VERSION = "0.1.0"

OBJECTS_FILE = "objects.txt"
OBJECTS_INFO_FILE = "objects_info.json"
MANIFEST_FILE = "manifest.jsonl"
RECORDS_DIR = "records"
SCENES_DIR = "scenes"
DEPTH_DIR = "depth"

SCENE_ATTEMPTS = 50  # whole-scene regenerations before giving up

OUTPUT_ENV_VAR = "SYNTHROOMS_OUTPUT"


@dataclass(frozen=True)
class FractalConfig:
    n_points: int = fractal.DEFAULT_N_POINTS
    burn_in: int = fractal.DEFAULT_BURN_IN
    min_axis_variance: float = fractal.DEFAULT_MIN_AXIS_VARIANCE
    min_maps: int = fractal.DEFAULT_N_MAPS_CHOICES[0]
    max_maps: int = fractal.DEFAULT_N_MAPS_CHOICES[1]
    max_attempts: int = 500


@dataclass(frozen=True)
class SceneRules:
    min_objects: int = scenegen.MIN_OBJECTS
    max_objects: int = scenegen.MAX_OBJECTS
    max_stack_height: float = scenegen.MAX_STACK_HEIGHT
    area_factor_min: float = scenegen.AREA_FACTOR_RANGE[0]
    area_factor_max: float = scenegen.AREA_FACTOR_RANGE[1]
    aspect_min: float = scenegen.ASPECT_RANGE[0]
    aspect_max: float = scenegen.ASPECT_RANGE[1]
    wall_height_min: float = scenegen.WALL_HEIGHT_RANGE[0]
    wall_height_max: float = scenegen.WALL_HEIGHT_RANGE[1]
    heightmap_cell: float = scenegen.HEIGHTMAP_CELL
    position_retries: int = scenegen.POSITION_RETRIES
    points_per_object: int = scenegen.POINTS_PER_OBJECT
    plane_spacing: float = scenegen.PLANE_SPACING
    voxel_size: float = scenegen.DEFAULT_VOXEL
    scene_points: int = scenegen.SCENE_POINTS


@dataclass
class GenerationConfig:
    object_source: str = "harmonics"  # harmonics | fractal | cad
    n_objects: int = 10000
    n_scenes: int = 78000
    object_multiplier: float = 1.0
    scene_multiplier: float = 1.0
    view_mode: str = "multi"  # multi | single | both
    master_seed: int = 0
    output_dir: str = "dataset"
    workers: int = 1
    limit: int | None = None
    cad_dir: str | None = None
    mesh_polar: int = 64
    mesh_azimuth: int = 128
    frames_per_scene: int = 1
    min_view_objects: int = raycast.DEFAULT_MIN_VIEW_OBJECTS
    camera: raycast.CameraIntrinsics = field(default_factory=raycast.CameraIntrinsics)
    fractal: FractalConfig = field(default_factory=FractalConfig)
    rules: SceneRules = field(default_factory=SceneRules)
    crop: crops.CropConfig = field(default_factory=crops.CropConfig)

    def __post_init__(self) -> None:
        if self.object_source not in ("harmonics", "fractal", "cad"):
            raise ValueError(f"unknown object_source {self.object_source!r}")
        if self.view_mode not in ("multi", "single", "both"):
            raise ValueError(f"unknown view_mode {self.view_mode!r}")
        if self.n_objects < 1 or self.n_scenes < 0:
            raise ValueError("object and scene counts must be positive")
        if self.object_source == "fractal" and self.view_mode != "multi":
            raise ValueError("fractal objects have no meshes; single-view needs ray-casting")
        if self.object_source == "cad" and not self.cad_dir:
            raise ValueError("cad source requires cad_dir")

    @property
    def n_objects_effective(self) -> int:
        return max(1, round(self.n_objects * self.object_multiplier))

    @property
    def n_scenes_effective(self) -> int:
        n = round(self.n_scenes * self.scene_multiplier)
        if self.limit is not None:
            n = min(n, self.limit)
        return n

    def snapshot(self) -> dict:
        """Config as written to the manifest. Excludes the output directory
        and worker count, which must not affect dataset contents."""
        d = dataclasses.asdict(self)
        d.pop("output_dir")
        d.pop("workers")
        return d


def _section(data: dict, name: str) -> dict:
    sec = data.get(name, {})
    if not isinstance(sec, dict):
        raise ValueError(f"TOML section [{name}] must be a table")
    return dict(sec)


def load_config(path) -> GenerationConfig:
    """Build a GenerationConfig from a TOML file with [dataset], [camera],
    [fractal], [rules] and [crop] sections (all optional)."""
    if sys.version_info >= (3, 11):
        import tomllib
    else:
        import tomli as tomllib
    with open(path, "rb") as f:
        data = tomllib.load(f)
    kwargs = _section(data, "dataset")
    cam = _section(data, "camera")
    if cam:
        kwargs["camera"] = raycast.CameraIntrinsics(**cam)
    frac = _section(data, "fractal")
    if frac:
        kwargs["fractal"] = FractalConfig(**frac)
    rules = _section(data, "rules")
    if rules:
        kwargs["rules"] = SceneRules(**rules)
    crop = _section(data, "crop")
    if crop:
        if "depth_ratio_range" in crop:
            crop["depth_ratio_range"] = tuple(crop["depth_ratio_range"])
        kwargs["crop"] = crops.CropConfig(**crop)
    return GenerationConfig(**kwargs)


# ---------------------------------------------------------------------------
# Object sets


class HarmonicObjectSet:
    is_harmonic = True
    has_meshes = True

    def __init__(self, coefficients, n_polar: int = 64, n_azimuth: int = 128):
        self.coefficients = list(coefficients)
        self.n_polar = n_polar
        self.n_azimuth = n_azimuth
        self._cache: dict[int, object] = {}

    def __len__(self) -> int:
        return len(self.coefficients)

    def __getitem__(self, i: int):
        if i not in self._cache:
            mesh = harmonics.generate_mesh(self.coefficients[i], self.n_polar, self.n_azimuth)
            if len(self._cache) > 256:
                self._cache.clear()
            self._cache[i] = normalize_unit_sphere(mesh)
        return self._cache[i]


class FractalObjectSet:
    is_harmonic = False
    has_meshes = False

    def __init__(self, systems, master_seed: int, n_points: int, burn_in: int):
        self.systems = list(systems)
        self.master_seed = master_seed
        self.n_points = n_points
        self.burn_in = burn_in

    def __len__(self) -> int:
        return len(self.systems)

    def __getitem__(self, i: int):
        rng = rng_for(self.master_seed, "fractal-points", i)
        cloud = fractal.chaos_game(self.systems[i], self.n_points, self.burn_in, rng)
        return normalize_unit_sphere(cloud)


class CadObjectSet:
    is_harmonic = False
    has_meshes = True

    def __init__(self, paths, base_dir=None):
        self.paths = [str(p) for p in paths]
        self.base_dir = None if base_dir is None else Path(base_dir)
        self._cache: dict[int, object] = {}

    def __len__(self) -> int:
        return len(self.paths)

    def __getitem__(self, i: int):
        if i not in self._cache:
            path = Path(self.paths[i])
            if self.base_dir is not None and not path.is_absolute():
                path = self.base_dir / path
            if len(self._cache) > 64:
                self._cache.clear()
            self._cache[i] = normalize_unit_sphere(meshio.load_mesh(path))
        return self._cache[i]


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _atomic_write_bytes(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + f".tmp.{os.getpid()}")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def generate_object_set(cfg: GenerationConfig, out: Path):
    """Create (or reuse) the object archive and return (set, info dict)."""
    archive = out / OBJECTS_FILE
    info_path = out / OBJECTS_INFO_FILE
    n = cfg.n_objects_effective

    if archive.exists() and info_path.exists():
        info = json.loads(info_path.read_text())
        if info.get("count") == n and info.get("source") == cfg.object_source:
            return load_object_set(cfg, archive), info

    if cfg.object_source == "harmonics":
        coeffs = [
            harmonics.sample_coefficients(rng_for(cfg.master_seed, "object", i))
            for i in range(n)
        ]
        harmonics.save_coefficients(archive, coeffs)
        info = {"source": "harmonics", "count": n}
    elif cfg.object_source == "fractal":
        systems = []
        total_attempts = 0
        for i in range(n):
            rng = rng_for(cfg.master_seed, "object", i)
            system, _, attempts = fractal.generate_accepted_system(
                rng,
                points_seed=derive_seed(cfg.master_seed, "fractal-points", i),
                n_points=cfg.fractal.n_points,
                burn_in=cfg.fractal.burn_in,
                min_axis_variance=cfg.fractal.min_axis_variance,
                n_maps_choices=(cfg.fractal.min_maps, cfg.fractal.max_maps),
                max_attempts=cfg.fractal.max_attempts,
            )
            systems.append(system)
            total_attempts += attempts
        fractal.save_systems(archive, systems)
        info = {
            "source": "fractal",
            "count": n,
            "attempts": total_attempts,
            "acceptance_rate": n / total_attempts,
        }
    else:  # cad
        cad_dir = Path(cfg.cad_dir)
        paths = sorted(
            str(p.relative_to(cad_dir))
            for ext in ("*.off", "*.obj")
            for p in cad_dir.rglob(ext)
        )
        if not paths:
            raise FileNotFoundError(f"no OFF/OBJ meshes under {cad_dir}")
        paths = paths[:n]
        archive.write_text("\n".join(paths) + "\n", encoding="utf-8")
        info = {"source": "cad", "count": len(paths), "cad_dir": str(cad_dir)}

    info["sha256"] = sha256_file(archive)
    info_path.write_text(json.dumps(info, sort_keys=True, indent=2) + "\n")
    return load_object_set(cfg, archive), info


def load_object_set(cfg: GenerationConfig, archive: Path):
    if cfg.object_source == "harmonics":
        return HarmonicObjectSet(
            harmonics.load_coefficients(archive), cfg.mesh_polar, cfg.mesh_azimuth
        )
    if cfg.object_source == "fractal":
        return FractalObjectSet(
            fractal.load_systems(archive),
            cfg.master_seed,
            cfg.fractal.n_points,
            cfg.fractal.burn_in,
        )
    paths = [line for line in archive.read_text().splitlines() if line.strip()]
    return CadObjectSet(paths, base_dir=cfg.cad_dir)


# ---------------------------------------------------------------------------
# Per-scene jobs


def generate_scene_record(cfg: GenerationConfig, object_set, index: int) -> dict:
    """Generate one scene (and its views), write its files, and return the
    manifest record. Rejected scenes restart with a derived attempt seed, so
    the result is independent of scheduling."""
    out = Path(cfg.output_dir)
    rules = cfg.rules
    for attempt in range(SCENE_ATTEMPTS):
        seed = derive_seed(derive_seed(cfg.master_seed, "scene", index), "attempt", attempt)
        rng = np.random.default_rng(seed)
        try:
            geometry = scenegen.assemble_scene(
                object_set,
                rng,
                seed=seed,
                is_harmonic=object_set.is_harmonic,
                min_objects=rules.min_objects,
                max_objects=rules.max_objects,
                max_stack_height=rules.max_stack_height,
                area_factor_range=(rules.area_factor_min, rules.area_factor_max),
                aspect_range=(rules.aspect_min, rules.aspect_max),
                wall_height_range=(rules.wall_height_min, rules.wall_height_max),
                heightmap_cell=rules.heightmap_cell,
                position_retries=rules.position_retries,
            )
            record = {
                "kind": "scene",
                "index": index,
                "seed": seed,
                "attempt": attempt,
                "scene": geometry.spec.to_record(),
            }
            files: dict[str, dict] = {}
            if cfg.view_mode in ("multi", "both"):
                cloud = scenegen.finalize_multiview(
                    geometry,
                    rng,
                    points_per_object=rules.points_per_object,
                    plane_spacing=rules.plane_spacing,
                    voxel=rules.voxel_size,
                    n_points=rules.scene_points,
                )
                rel = f"{SCENES_DIR}/scene_{index:06d}.ply"
                path = out / rel
                meshio.write_ply_points(path, cloud)
                files["points"] = {
                    "path": rel,
                    "sha256": sha256_file(path),
                    "n_points": len(cloud),
                }
            if cfg.view_mode in ("single", "both"):
                accel = raycast.build_accelerator(geometry.meshes())
                frames = []
                for fi in range(cfg.frames_per_scene):
                    frame, _pose = raycast.sample_valid_view(
                        geometry,
                        rng,
                        min_objects=cfg.min_view_objects,
                        intrinsics=cfg.camera,
                        accel=accel,
                    )
                    depth_rel = f"{DEPTH_DIR}/depth_{index:06d}_{fi:02d}.png"
                    meta_rel = f"{DEPTH_DIR}/depth_{index:06d}_{fi:02d}.json"
                    raycast.save_depth_png(out / depth_rel, frame)
                    raycast.save_frame_record(out / meta_rel, frame)
                    frames.append(
                        {
                            "depth": {
                                "path": depth_rel,
                                "sha256": sha256_file(out / depth_rel),
                            },
                            "meta": {
                                "path": meta_rel,
                                "sha256": sha256_file(out / meta_rel),
                            },
                            "object_ids": raycast.qualifying_ids(frame),
                        }
                    )
                record["frames"] = frames
            record["files"] = files
            return record
        except scenegen.SceneRejectedError:
            continue
    raise RuntimeError(f"scene {index}: rejected {SCENE_ATTEMPTS} times in a row")


def _record_path(out: Path, index: int) -> Path:
    return out / RECORDS_DIR / f"scene_{index:06d}.json"


def _record_files(record: dict) -> list[dict]:
    entries = list(record.get("files", {}).values())
    for frame in record.get("frames", []):
        entries.append(frame["depth"])
        entries.append(frame["meta"])
    return entries


def _record_is_intact(out: Path, record: dict) -> bool:
    for entry in _record_files(record):
        path = out / entry["path"]
        if not path.exists() or sha256_file(path) != entry["sha256"]:
            return False
    return True


_WORKER_CTX: tuple | None = None


def _worker_init(cfg: GenerationConfig) -> None:
    global _WORKER_CTX
    object_set = load_object_set(cfg, Path(cfg.output_dir) / OBJECTS_FILE)
    _WORKER_CTX = (cfg, object_set)


def _worker_job(index: int) -> tuple[int, dict]:
    cfg, object_set = _WORKER_CTX
    record = generate_scene_record(cfg, object_set, index)
    out = Path(cfg.output_dir)
    payload = (json.dumps(record, sort_keys=True, separators=(",", ":")) + "\n").encode()
    _atomic_write_bytes(_record_path(out, index), payload)
    return index, record


def run_generation(cfg: GenerationConfig) -> Path:
    """Generate the whole dataset and write the manifest.

    Byte-identical output for identical (config, master seed) regardless of
    worker count; completed records found on disk are verified and reused.
    """
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / RECORDS_DIR).mkdir(exist_ok=True)
    if cfg.view_mode in ("multi", "both"):
        (out / SCENES_DIR).mkdir(exist_ok=True)
    if cfg.view_mode in ("single", "both"):
        (out / DEPTH_DIR).mkdir(exist_ok=True)

    object_set, objects_info = generate_object_set(cfg, out)

    n_scenes = cfg.n_scenes_effective
    records: dict[int, dict] = {}
    pending: list[int] = []
    for index in range(n_scenes):
        rp = _record_path(out, index)
        if rp.exists():
            try:
                record = json.loads(rp.read_text())
            except json.JSONDecodeError:
                record = None
            if record is not None and _record_is_intact(out, record):
                records[index] = record
                continue
        pending.append(index)

    if pending:
        if cfg.workers <= 1:
            _worker_init(cfg)
            for index in pending:
                records[index] = _worker_job(index)[1]
        else:
            chunk = max(1, len(pending) // (cfg.workers * 8))
            with ProcessPoolExecutor(
                max_workers=cfg.workers, initializer=_worker_init, initargs=(cfg,)
            ) as pool:
                for index, record in pool.map(_worker_job, pending, chunksize=chunk):
                    records[index] = record

    header = {
        "kind": "header",
        "tool": TOOL_NAME,
        "version": TOOL_VERSION,
        "config": cfg.snapshot(),
        "objects": {"path": OBJECTS_FILE, **objects_info},
        "n_records": n_scenes,
    }
    lines = [json.dumps(header, sort_keys=True, separators=(",", ":"))]
    for index in range(n_scenes):
        lines.append(json.dumps(records[index], sort_keys=True, separators=(",", ":")))
    manifest = out / MANIFEST_FILE
    _atomic_write_bytes(manifest, ("\n".join(lines) + "\n").encode())
    return manifest


# ---------------------------------------------------------------------------
# Validation


@dataclass
class ValidationReport:
    n_records: int
    violations: list[str]

    @property
    def ok(self) -> bool:
        return not self.violations

    def summary(self) -> str:
        status = "OK" if self.ok else f"{len(self.violations)} violation(s)"
        lines = [f"{self.n_records} record(s): {status}"]
        lines.extend(self.violations)
        return "\n".join(lines)


def read_manifest(manifest_path) -> tuple[dict, list[dict]]:
    with open(manifest_path, "r", encoding="utf-8") as f:
        lines = [json.loads(line) for line in f if line.strip()]
    if not lines or lines[0].get("kind") != "header":
        raise ValueError(f"{manifest_path}: missing manifest header")
    return lines[0], lines[1:]


def validate_dataset(manifest_path, voxel_check_scenes: int = 10) -> ValidationReport:
    """Re-check checksums, per-scene object counts, point counts, frame
    object counts, and voxel uniqueness on a leading sample of scenes."""
    manifest_path = Path(manifest_path)
    base = manifest_path.parent
    header, records = read_manifest(manifest_path)
    cfg_snap = header.get("config", {})
    rules = cfg_snap.get("rules", {})
    min_objects = rules.get("min_objects", scenegen.MIN_OBJECTS)
    max_objects = rules.get("max_objects", scenegen.MAX_OBJECTS)
    scene_points = rules.get("scene_points", scenegen.SCENE_POINTS)
    voxel = rules.get("voxel_size", scenegen.DEFAULT_VOXEL)
    min_view_objects = cfg_snap.get("min_view_objects", raycast.DEFAULT_MIN_VIEW_OBJECTS)

    violations: list[str] = []
    expected = header.get("n_records")
    if expected is not None and expected != len(records):
        violations.append(f"manifest: {len(records)} records, header declares {expected}")

    objects_entry = header.get("objects", {})
    if objects_entry:
        opath = base / objects_entry["path"]
        if not opath.exists():
            violations.append(f"objects: missing {objects_entry['path']}")
        elif sha256_file(opath) != objects_entry.get("sha256"):
            violations.append(f"objects: checksum mismatch for {objects_entry['path']}")

    checked_voxels = 0
    for record in records:
        index = record.get("index", "?")
        tag = f"scene {index}"
        for entry in _record_files(record):
            path = base / entry["path"]
            if not path.exists():
                violations.append(f"{tag}: missing file {entry['path']}")
                continue
            if sha256_file(path) != entry["sha256"]:
                violations.append(f"{tag}: checksum mismatch for {entry['path']}")
        n_placed = len(record.get("scene", {}).get("placements", []))
        if not (min_objects <= n_placed <= max_objects):
            violations.append(f"{tag}: {n_placed} objects outside [{min_objects}, {max_objects}]")
        points_entry = record.get("files", {}).get("points")
        if points_entry is not None:
            path = base / points_entry["path"]
            if path.exists():
                try:
                    cloud = meshio.read_ply_points(path)
                except Exception as exc:  # defect reporting, not control flow
                    violations.append(f"{tag}: unreadable points file ({exc})")
                    cloud = None
                if cloud is not None:
                    if len(cloud) != scene_points:
                        violations.append(
                            f"{tag}: {len(cloud)} points, expected {scene_points}"
                        )
                    if checked_voxels < voxel_check_scenes:
                        idx3 = np.floor(cloud.positions / voxel).astype(np.int64)
                        n_unique = len(np.unique(idx3, axis=0))
                        if n_unique != len(cloud):
                            violations.append(
                                f"{tag}: {len(cloud) - n_unique} duplicate voxel(s) "
                                f"at {voxel} m"
                            )
                        checked_voxels += 1
        for fi, frame in enumerate(record.get("frames", [])):
            if len(frame.get("object_ids", [])) < min_view_objects:
                violations.append(
                    f"{tag} frame {fi}: {len(frame.get('object_ids', []))} objects "
                    f"below {min_view_objects}"
                )
    return ValidationReport(len(records), violations)
