"""Independent reader for the generator's binary little-endian PLY files."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_TYPES = {
    "char": "i1", "uchar": "u1", "short": "i2", "ushort": "u2",
    "int": "i4", "uint": "u4", "float": "f4", "double": "f8",
    "int8": "i1", "uint8": "u1", "int16": "i2", "uint16": "u2",
    "int32": "i4", "uint32": "u4", "float32": "f4", "float64": "f8",
}

END_HEADER = b"end_header\n"


class PlyError(ValueError):
    pass


@dataclass
class PlyCloud:
    positions: np.ndarray  # (N, 3) float64
    colors: np.ndarray | None  # (N, 3) float64 in [0, 1]
    object_ids: np.ndarray | None  # (N,) int32

    def __len__(self) -> int:
        return self.positions.shape[0]


def read_ply(path) -> PlyCloud:
    with open(path, "rb") as f:
        blob = f.read()
    end = blob.find(END_HEADER)
    if end < 0:
        raise PlyError(f"{path}: no end_header")
    header = blob[:end].decode("ascii", errors="replace").splitlines()
    body = blob[end + len(END_HEADER):]
    if not header or header[0].strip() != "ply":
        raise PlyError(f"{path}: not a PLY file")

    n_vertices = None
    fields: list[tuple[str, str]] = []
    current_element = None
    for line in header[1:]:
        parts = line.split()
        if not parts:
            continue
        keyword = parts[0]
        if keyword == "format":
            if parts[1] != "binary_little_endian":
                raise PlyError(f"{path}: unsupported format {parts[1]!r}")
        elif keyword == "element":
            current_element = parts[1]
            if current_element == "vertex":
                n_vertices = int(parts[2])
        elif keyword == "property" and current_element == "vertex":
            if parts[1] == "list":
                raise PlyError(f"{path}: vertex list properties unsupported")
            if parts[1] not in _TYPES:
                raise PlyError(f"{path}: unknown type {parts[1]!r}")
            fields.append((parts[2], "<" + _TYPES[parts[1]]))
    if n_vertices is None:
        raise PlyError(f"{path}: no vertex element")

    dtype = np.dtype(fields)
    need = n_vertices * dtype.itemsize
    if len(body) < need:
        raise PlyError(f"{path}: truncated ({len(body)} bytes, need {need})")
    rec = np.frombuffer(body[:need], dtype=dtype)

    names = {n for n, _ in fields}
    if not {"x", "y", "z"} <= names:
        raise PlyError(f"{path}: missing x/y/z properties")
    positions = np.stack(
        [rec["x"], rec["y"], rec["z"]], axis=1
    ).astype(np.float64)
    colors = None
    if {"red", "green", "blue"} <= names:
        colors = np.stack([rec["red"], rec["green"], rec["blue"]], axis=1).astype(np.float64)
        if dtype["red"].kind == "u":
            colors /= 255.0
    object_ids = rec["object_id"].astype(np.int32) if "object_id" in names else None
    return PlyCloud(positions, colors, object_ids)
