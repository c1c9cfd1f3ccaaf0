"""Static preview renders of dataset records."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .manifest import DatasetRecord, load_depth, load_sample


def render_preview(record: DatasetRecord, output_path, max_points: int = 20000,
                   verify: bool = True) -> Path:
    """Write a static image of a scene record: a top-down scatter and a
    perspective scatter, colored by object id."""
    sample = load_sample(record, verify=verify)
    if len(sample) == 0:
        raise ValueError(f"record {record.index}: empty point cloud")
    pts = sample.positions
    ids = (
        sample.object_ids
        if sample.object_ids is not None
        else np.zeros(len(sample), dtype=np.int32)
    )
    if len(pts) > max_points:
        step = len(pts) // max_points + 1
        pts = pts[::step]
        ids = ids[::step]
    colors = (ids.astype(np.int64) - ids.min()) % 20

    fig = plt.figure(figsize=(11, 5))
    ax = fig.add_subplot(1, 2, 1)
    ax.scatter(pts[:, 0], pts[:, 1], c=colors, cmap="tab20", s=1.0, linewidths=0)
    ax.set_aspect("equal")
    ax.set_title(f"scene {record.index}: top-down")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")

    ax3d = fig.add_subplot(1, 2, 2, projection="3d")
    ax3d.scatter(pts[:, 0], pts[:, 1], pts[:, 2], c=colors, cmap="tab20", s=0.8,
                 linewidths=0)
    ax3d.set_title("perspective")
    ax3d.view_init(elev=35, azim=-60)

    output_path = Path(output_path)
    output_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(output_path, dpi=110)
    plt.close(fig)
    return output_path


def render_depth_preview(record: DatasetRecord, frame_index: int, output_path,
                         verify: bool = True) -> Path:
    """Grayscale visualization of a stored depth frame, annotated with its
    metric value range."""
    if not record.frames:
        raise ValueError(f"record {record.index} has no depth frames")
    depth, _meta = load_depth(record.frames[frame_index], verify=verify)
    valid = depth[depth > 0]
    lo = float(valid.min()) if valid.size else 0.0
    hi = float(valid.max()) if valid.size else 0.0

    fig, ax = plt.subplots(figsize=(7, 5.5))
    im = ax.imshow(depth, cmap="gray", vmin=0.0, vmax=hi if hi > 0 else 1.0)
    ax.set_title(
        f"scene {record.index} frame {frame_index}: depth {lo:.2f}-{hi:.2f} m"
    )
    fig.colorbar(im, ax=ax, label="depth [m]")
    output_path = Path(output_path)
    output_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(output_path, dpi=110)
    plt.close(fig)
    return output_path
