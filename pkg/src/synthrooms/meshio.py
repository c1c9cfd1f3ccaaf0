"""Mesh and point-cloud file I/O.

Readers: OFF (ModelNet-style, including the glued ``OFF123 456 0`` header
variant) and OBJ (ShapeNet-style, v/f statements only). Writers: OBJ and
binary little-endian PLY for both meshes and point clouds. Polygons with
more than three sides are fan-triangulated.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .geometry import PointCloud, SurfaceMesh


class MeshFormatError(ValueError):
    """Malformed mesh file; message carries the file and line number."""

    def __init__(self, path, line_no: int, message: str):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = str(path)
        self.line_no = line_no


def load_mesh(path, object_id: int = 0) -> SurfaceMesh:
    """Load an OFF or OBJ file, dispatched on the extension."""
    suffix = Path(path).suffix.lower()
    if suffix == ".off":
        return read_off(path, object_id)
    if suffix == ".obj":
        return read_obj(path, object_id)
    raise MeshFormatError(path, 0, f"unsupported mesh extension {suffix!r}")


def _fan(indices: list[int]) -> list[tuple[int, int, int]]:
    return [(indices[0], indices[k], indices[k + 1]) for k in range(1, len(indices) - 1)]


def read_off(path, object_id: int = 0) -> SurfaceMesh:
    with open(path, "r", encoding="ascii", errors="replace") as f:
        raw = f.readlines()

    # Strip comments/blank lines but remember original line numbers.
    lines: list[tuple[int, str]] = []
    for no, text in enumerate(raw, start=1):
        text = text.strip()
        if text and not text.startswith("#"):
            lines.append((no, text))
    if not lines:
        raise MeshFormatError(path, 1, "empty OFF file")

    no, header = lines[0]
    if not header.upper().startswith("OFF"):
        raise MeshFormatError(path, no, "missing OFF header")
    rest = header[3:].strip()
    cursor = 1
    if rest:
        counts_line, counts_no = rest, no
    else:
        if len(lines) < 2:
            raise MeshFormatError(path, no, "missing element counts")
        counts_no, counts_line = lines[1]
        cursor = 2
    fields = counts_line.split()
    if len(fields) < 2:
        raise MeshFormatError(path, counts_no, "expected vertex and face counts")
    try:
        n_vertices, n_faces = int(fields[0]), int(fields[1])
    except ValueError:
        raise MeshFormatError(path, counts_no, f"bad element counts {counts_line!r}") from None

    vertices = np.empty((n_vertices, 3), dtype=np.float64)
    for i in range(n_vertices):
        if cursor >= len(lines):
            raise MeshFormatError(
                path, lines[-1][0], f"file ends after {i} of {n_vertices} vertices"
            )
        no, text = lines[cursor]
        parts = text.split()
        try:
            vertices[i] = [float(parts[0]), float(parts[1]), float(parts[2])]
        except (ValueError, IndexError):
            raise MeshFormatError(path, no, f"bad vertex line {text!r}") from None
        cursor += 1

    triangles: list[tuple[int, int, int]] = []
    for i in range(n_faces):
        if cursor >= len(lines):
            raise MeshFormatError(
                path, lines[-1][0], f"file ends after {i} of {n_faces} faces"
            )
        no, text = lines[cursor]
        parts = text.split()
        try:
            k = int(parts[0])
            idx = [int(v) for v in parts[1 : 1 + k]]
        except (ValueError, IndexError):
            raise MeshFormatError(path, no, f"bad face line {text!r}") from None
        if len(idx) != k or k < 3:
            raise MeshFormatError(path, no, f"face declares {k} vertices, got {len(idx)}")
        for v in idx:
            if not (0 <= v < n_vertices):
                raise MeshFormatError(path, no, f"vertex index {v} out of range")
        triangles.extend(_fan(idx))
        cursor += 1

    return SurfaceMesh(vertices, np.array(triangles, dtype=np.int64).reshape(-1, 3), object_id)


def read_obj(path, object_id: int = 0) -> SurfaceMesh:
    vertices: list[list[float]] = []
    triangles: list[tuple[int, int, int]] = []
    with open(path, "r", encoding="ascii", errors="replace") as f:
        for no, text in enumerate(f, start=1):
            text = text.strip()
            if not text or text.startswith("#"):
                continue
            parts = text.split()
            tag = parts[0]
            if tag == "v":
                try:
                    vertices.append([float(parts[1]), float(parts[2]), float(parts[3])])
                except (ValueError, IndexError):
                    raise MeshFormatError(path, no, f"bad vertex line {text!r}") from None
            elif tag == "f":
                idx = []
                for token in parts[1:]:
                    ref = token.split("/")[0]
                    try:
                        v = int(ref)
                    except ValueError:
                        raise MeshFormatError(path, no, f"bad face token {token!r}") from None
                    # OBJ indices are 1-based; negative values count from the end.
                    v = v - 1 if v > 0 else len(vertices) + v
                    if not (0 <= v < len(vertices)):
                        raise MeshFormatError(path, no, f"vertex index {token!r} out of range")
                    idx.append(v)
                if len(idx) < 3:
                    raise MeshFormatError(path, no, "face needs at least 3 vertices")
                triangles.extend(_fan(idx))
            # Other statements (vn, vt, usemtl, o, g, s, mtllib...) are ignored.
    if not vertices:
        raise MeshFormatError(path, 1, "no vertices found")
    return SurfaceMesh(
        np.array(vertices, dtype=np.float64),
        np.array(triangles, dtype=np.int64).reshape(-1, 3),
        object_id,
    )


def write_obj(path, mesh: SurfaceMesh) -> None:
    with open(path, "w", encoding="ascii") as f:
        for v in mesh.vertices:
            f.write(f"v {float(v[0])!r} {float(v[1])!r} {float(v[2])!r}\n")
        for t in mesh.triangles:
            f.write(f"f {t[0] + 1} {t[1] + 1} {t[2] + 1}\n")


_PLY_DTYPES = {
    "char": "i1", "uchar": "u1", "short": "i2", "ushort": "u2",
    "int": "i4", "uint": "u4", "float": "f4", "double": "f8",
    "int8": "i1", "uint8": "u1", "int16": "i2", "uint16": "u2",
    "int32": "i4", "uint32": "u4", "float32": "f4", "float64": "f8",
}


def write_ply_points(path, cloud: PointCloud) -> None:
    """Binary little-endian PLY: double x/y/z, optional float colors,
    optional int object_id."""
    n = len(cloud)
    header = ["ply", "format binary_little_endian 1.0", f"element vertex {n}"]
    header += ["property double x", "property double y", "property double z"]
    fields = [("x", "<f8"), ("y", "<f8"), ("z", "<f8")]
    if cloud.colors is not None:
        header += ["property float red", "property float green", "property float blue"]
        fields += [("red", "<f4"), ("green", "<f4"), ("blue", "<f4")]
    if cloud.object_ids is not None:
        header.append("property int object_id")
        fields.append(("object_id", "<i4"))
    header.append("end_header")

    rec = np.zeros(n, dtype=np.dtype(fields))
    rec["x"], rec["y"], rec["z"] = cloud.positions.T
    if cloud.colors is not None:
        rec["red"], rec["green"], rec["blue"] = cloud.colors.astype(np.float32).T
    if cloud.object_ids is not None:
        rec["object_id"] = cloud.object_ids
    with open(path, "wb") as f:
        f.write(("\n".join(header) + "\n").encode("ascii"))
        f.write(rec.tobytes())


def read_ply_points(path) -> PointCloud:
    """Read a binary little-endian PLY vertex cloud written by this module
    (any x/y/z plus optional red/green/blue and object_id properties)."""
    with open(path, "rb") as f:
        data = f.read()
    end = data.find(b"end_header\n")
    if end < 0:
        raise MeshFormatError(path, 1, "missing end_header")
    header_lines = data[:end].decode("ascii").splitlines()
    body = data[end + len(b"end_header\n"):]

    if not header_lines or header_lines[0].strip() != "ply":
        raise MeshFormatError(path, 1, "not a PLY file")
    n = None
    fields: list[tuple[str, str]] = []
    in_vertex = False
    for no, line in enumerate(header_lines[1:], start=2):
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "format":
            if parts[1] != "binary_little_endian":
                raise MeshFormatError(path, no, f"unsupported format {parts[1]!r}")
        elif parts[0] == "element":
            in_vertex = parts[1] == "vertex"
            if in_vertex:
                n = int(parts[2])
            elif fields:
                break  # only the leading vertex element is read
        elif parts[0] == "property" and in_vertex:
            if parts[1] == "list":
                raise MeshFormatError(path, no, "list property not supported in vertex")
            if parts[1] not in _PLY_DTYPES:
                raise MeshFormatError(path, no, f"unknown property type {parts[1]!r}")
            fields.append((parts[2], "<" + _PLY_DTYPES[parts[1]]))
    if n is None:
        raise MeshFormatError(path, 1, "no vertex element")
    dtype = np.dtype(fields)
    if len(body) < n * dtype.itemsize:
        raise MeshFormatError(path, len(header_lines), "truncated vertex data")
    rec = np.frombuffer(body[: n * dtype.itemsize], dtype=dtype)

    names = {name for name, _ in fields}
    positions = np.stack(
        [rec["x"].astype(np.float64), rec["y"].astype(np.float64), rec["z"].astype(np.float64)],
        axis=1,
    )
    colors = None
    if {"red", "green", "blue"} <= names:
        colors = np.stack([rec["red"], rec["green"], rec["blue"]], axis=1).astype(np.float64)
        if dtype["red"].kind == "u":  # 8-bit colors
            colors /= 255.0
    ids = rec["object_id"].astype(np.int32) if "object_id" in names else None
    return PointCloud(positions, colors, ids)


def write_ply_mesh(path, mesh: SurfaceMesh) -> None:
    header = [
        "ply",
        "format binary_little_endian 1.0",
        f"element vertex {mesh.n_vertices}",
        "property double x",
        "property double y",
        "property double z",
        f"element face {mesh.n_triangles}",
        "property list uchar int vertex_indices",
        "end_header",
    ]
    with open(path, "wb") as f:
        f.write(("\n".join(header) + "\n").encode("ascii"))
        f.write(np.ascontiguousarray(mesh.vertices, dtype="<f8").tobytes())
        tri = mesh.triangles.astype("<i4")
        counts = np.full((mesh.n_triangles, 1), 3, dtype="u1")
        rows = bytearray()
        for c, t in zip(counts, tri):
            rows += struct.pack("<B3i", 3, int(t[0]), int(t[1]), int(t[2]))
        f.write(bytes(rows))
