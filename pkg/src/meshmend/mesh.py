"""Triangle meshes: loading, canonical normalization, and PLY/OBJ I/O.

Meshes produced by the upstream reconstructor arrive as OBJ or PLY
files; here they are parsed, fan-triangulated, and normalized into the
canonical frame (axis-aligned bounding box centered at the origin, max
extent exactly 1.0). All downstream pose/scale recovery assumes that
frame.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGeometryError, EmptyGeometryError, FormatError, InputError

_MIN_TRIANGLE_AREA = 1e-12


def _triangle_areas(vertices, triangles):
    a = vertices[triangles[:, 0]]
    b = vertices[triangles[:, 1]]
    c = vertices[triangles[:, 2]]
    return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)


@dataclass(frozen=True)
class TriangleMesh:
    """Indexed triangle set, usually in the canonical object frame.

    ``albedo`` is an optional per-vertex grayscale value in [0, 1] used
    by the shaded renderer; meshes without one render at a default gray.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    albedo: np.ndarray | None = None

    def __post_init__(self):
        v = np.ascontiguousarray(np.asarray(self.vertices, dtype=np.float64))
        t = np.ascontiguousarray(np.asarray(self.triangles, dtype=np.int32))
        if v.ndim != 2 or v.shape[1] != 3 or len(v) == 0:
            raise EmptyGeometryError("mesh has no vertices")
        if t.ndim != 2 or t.shape[1] != 3 or len(t) == 0:
            raise EmptyGeometryError("mesh has no triangles")
        if not np.all(np.isfinite(v)):
            raise InputError("mesh vertices contain non-finite values")
        if t.min() < 0 or t.max() >= len(v):
            raise InputError(
                f"triangle index out of range: [{t.min()}, {t.max()}] for {len(v)} vertices"
            )
        bad = np.count_nonzero(_triangle_areas(v, t) <= _MIN_TRIANGLE_AREA)
        if bad:
            raise DegenerateGeometryError(f"{bad} degenerate triangle(s) with ~zero area")
        a = self.albedo
        if a is not None:
            a = np.ascontiguousarray(np.asarray(a, dtype=np.float64))
            if a.shape != (len(v),):
                raise InputError("albedo must be one value per vertex")
            a = np.clip(a, 0.0, 1.0)
            a.flags.writeable = False
        v.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)
        object.__setattr__(self, "albedo", a)

    @property
    def bbox_min(self) -> np.ndarray:
        return self.vertices.min(axis=0)

    @property
    def bbox_max(self) -> np.ndarray:
        return self.vertices.max(axis=0)

    @property
    def extents(self) -> np.ndarray:
        return self.bbox_max - self.bbox_min

    def canonicalize(self) -> "TriangleMesh":
        """Center the bounding box at the origin and scale max extent to 1."""
        ext = self.extents
        scale = float(ext.max())
        if scale <= 0:
            raise EmptyGeometryError("mesh has zero spatial extent")
        center = (self.bbox_max + self.bbox_min) / 2.0
        return TriangleMesh((self.vertices - center) / scale, self.triangles, self.albedo)

    def transformed(self, placement) -> "TriangleMesh":
        """Apply a ScaledPlacement (or RigidTransform) to the vertices."""
        return TriangleMesh(placement.apply(self.vertices), self.triangles, self.albedo)

    def triangle_albedo(self, default: float = 0.85) -> np.ndarray:
        """Per-triangle albedo for flat shading (mean of vertex values)."""
        if self.albedo is None:
            return np.full(len(self.triangles), default)
        return self.albedo[self.triangles].mean(axis=1)


def merge_meshes(meshes: list[TriangleMesh], default_albedo: float = 0.85):
    """Concatenate meshes into one vertex/triangle soup.

    Returns (vertices, triangles, per-triangle albedo, per-triangle mesh id).
    Used to rasterize whole scenes in one pass while keeping track of
    which input each pixel came from.
    """
    verts, tris, albs, ids = [], [], [], []
    base = 0
    for i, m in enumerate(meshes):
        verts.append(m.vertices)
        tris.append(m.triangles + base)
        albs.append(m.triangle_albedo(default_albedo))
        ids.append(np.full(len(m.triangles), i, dtype=np.int32))
        base += len(m.vertices)
    return (
        np.concatenate(verts),
        np.concatenate(tris).astype(np.int32),
        np.concatenate(albs),
        np.concatenate(ids),
    )


# ---------------------------------------------------------------------------
# Parsing


def load_mesh(data: bytes, format_tag: str) -> TriangleMesh:
    """Parse OBJ or PLY bytes and return the mesh in canonical frame.

    ``format_tag`` is "obj" or "ply". Parse failures raise FormatError
    with the byte offset where parsing stopped; meshes with no geometry
    raise EmptyGeometryError.
    """
    tag = format_tag.lower().lstrip(".")
    if tag == "obj":
        mesh = _parse_obj(data)
    elif tag == "ply":
        mesh = _parse_ply(data)
    else:
        raise InputError(f"unknown mesh format tag {format_tag!r} (expected obj or ply)")
    return mesh.canonicalize()


def _parse_obj(data: bytes) -> TriangleMesh:
    vertices = []
    faces = []
    offset = 0
    for raw in data.split(b"\n"):
        line_offset = offset
        offset += len(raw) + 1
        line = raw.decode("utf-8", errors="replace").strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if parts[0] == "v":
            if len(parts) < 4:
                raise FormatError("OBJ vertex with fewer than 3 coordinates", line_offset)
            try:
                vertices.append([float(parts[1]), float(parts[2]), float(parts[3])])
            except ValueError:
                raise FormatError(f"bad OBJ vertex line {line!r}", line_offset)
        elif parts[0] == "f":
            if len(parts) < 4:
                raise FormatError("OBJ face with fewer than 3 vertices", line_offset)
            idx = []
            for tok in parts[1:]:
                head = tok.split("/")[0]
                try:
                    i = int(head)
                except ValueError:
                    raise FormatError(f"bad OBJ face token {tok!r}", line_offset)
                # OBJ indices are 1-based; negatives count back from the end
                idx.append(i - 1 if i > 0 else len(vertices) + i)
            for k in range(1, len(idx) - 1):  # fan triangulation
                faces.append([idx[0], idx[k], idx[k + 1]])
    if not vertices or not faces:
        raise EmptyGeometryError("OBJ file contains no geometry")
    return TriangleMesh(np.array(vertices), np.array(faces, dtype=np.int32))


_PLY_TYPES = {
    "char": ("b", 1), "int8": ("b", 1),
    "uchar": ("B", 1), "uint8": ("B", 1),
    "short": ("h", 2), "int16": ("h", 2),
    "ushort": ("H", 2), "uint16": ("H", 2),
    "int": ("i", 4), "int32": ("i", 4),
    "uint": ("I", 4), "uint32": ("I", 4),
    "float": ("f", 4), "float32": ("f", 4),
    "double": ("d", 8), "float64": ("d", 8),
}


def _parse_ply(data: bytes) -> TriangleMesh:
    if not data.startswith(b"ply"):
        raise FormatError("missing 'ply' magic", 0)
    end = data.find(b"end_header")
    if end < 0:
        raise FormatError("PLY header has no end_header", len(data))
    body_start = data.find(b"\n", end) + 1
    if body_start == 0:
        raise FormatError("PLY end_header line is not terminated", end)
    header = data[:body_start].decode("ascii", errors="replace")

    fmt = None
    elements = []  # (name, count, [(prop_name, type, list_count_type|None)])
    for line in header.splitlines():
        parts = line.strip().split()
        if not parts:
            continue
        if parts[0] == "format":
            fmt = parts[1]
        elif parts[0] == "element":
            elements.append((parts[1], int(parts[2]), []))
        elif parts[0] == "property":
            if not elements:
                raise FormatError("PLY property before any element", 0)
            if parts[1] == "list":
                elements[-1][2].append((parts[4], parts[3], parts[2]))
            else:
                elements[-1][2].append((parts[2], parts[1], None))
    if fmt not in ("ascii", "binary_little_endian"):
        raise FormatError(f"unsupported PLY format {fmt!r}", 0)

    if fmt == "ascii":
        return _parse_ply_ascii(data, body_start, elements)
    return _parse_ply_binary(data, body_start, elements)


def _finish_ply(vert_rows, face_rows, vert_props):
    if not vert_rows or not face_rows:
        raise EmptyGeometryError("PLY file contains no geometry")
    names = [p[0] for p in vert_props]
    for key in ("x", "y", "z"):
        if key not in names:
            raise FormatError(f"PLY vertex element lacks property {key!r}", 0)
    arr = np.asarray(vert_rows, dtype=np.float64)
    xyz = arr[:, [names.index("x"), names.index("y"), names.index("z")]]
    albedo = None
    if "gray" in names:
        albedo = arr[:, names.index("gray")]
    tris = []
    for row in face_rows:
        for k in range(1, len(row) - 1):
            tris.append([row[0], row[k], row[k + 1]])
    return TriangleMesh(xyz, np.array(tris, dtype=np.int32), albedo)


def _parse_ply_ascii(data, body_start, elements):
    text = data[body_start:].decode("ascii", errors="replace")
    tokens = text.split()
    pos = 0
    offset_guess = body_start
    vert_rows, face_rows, vert_props = [], [], []

    def take(n):
        nonlocal pos
        if pos + n > len(tokens):
            raise FormatError("PLY data truncated", offset_guess)
        out = tokens[pos : pos + n]
        pos += n
        return out

    for name, count, props in elements:
        for _ in range(count):
            if any(p[2] is not None for p in props):  # list property (faces)
                n = int(take(1)[0])
                row = [int(t) for t in take(n)]
                if name == "face":
                    face_rows.append(row)
            else:
                row = [float(t) for t in take(len(props))]
                if name == "vertex":
                    vert_rows.append(row)
                    vert_props = props
    return _finish_ply(vert_rows, face_rows, vert_props)


def _parse_ply_binary(data, body_start, elements):
    pos = body_start
    vert_rows, face_rows, vert_props = [], [], []
    for name, count, props in elements:
        is_list = any(p[2] is not None for p in props)
        if not is_list:
            fmt = "<" + "".join(_PLY_TYPES[p[1]][0] for p in props)
            size = struct.calcsize(fmt)
            if name == "vertex":
                vert_props = props
            for _ in range(count):
                if pos + size > len(data):
                    raise FormatError("PLY data truncated", pos)
                row = struct.unpack_from(fmt, data, pos)
                pos += size
                if name == "vertex":
                    vert_rows.append(row)
        else:
            cnt_fmt, cnt_size = _PLY_TYPES[props[0][2]]
            item_fmt, item_size = _PLY_TYPES[props[0][1]]
            for _ in range(count):
                if pos + cnt_size > len(data):
                    raise FormatError("PLY data truncated", pos)
                (n,) = struct.unpack_from("<" + cnt_fmt, data, pos)
                pos += cnt_size
                if pos + n * item_size > len(data):
                    raise FormatError("PLY data truncated", pos)
                row = struct.unpack_from("<" + item_fmt * n, data, pos)
                pos += n * item_size
                if name == "face":
                    face_rows.append(list(row))
    return _finish_ply(vert_rows, face_rows, vert_props)


# ---------------------------------------------------------------------------
# Writing


def mesh_to_ply_bytes(mesh: TriangleMesh, binary: bool = True) -> bytes:
    """Serialize a mesh as PLY (binary little-endian by default)."""
    has_gray = mesh.albedo is not None
    props = ["property float x", "property float y", "property float z"]
    if has_gray:
        props.append("property float gray")
    header = (
        "ply\n"
        f"format {'binary_little_endian' if binary else 'ascii'} 1.0\n"
        f"element vertex {len(mesh.vertices)}\n" + "\n".join(props) + "\n"
        f"element face {len(mesh.triangles)}\n"
        "property list uchar int vertex_indices\n"
        "end_header\n"
    )
    buf = io.BytesIO()
    buf.write(header.encode("ascii"))
    verts = mesh.vertices.astype(np.float32)
    if binary:
        if has_gray:
            verts = np.column_stack([verts, mesh.albedo.astype(np.float32)])
        buf.write(verts.astype("<f4").tobytes())
        for tri in mesh.triangles:
            buf.write(struct.pack("<Biii", 3, int(tri[0]), int(tri[1]), int(tri[2])))
    else:
        for i, v in enumerate(verts):
            row = f"{v[0]:.9g} {v[1]:.9g} {v[2]:.9g}"
            if has_gray:
                row += f" {mesh.albedo[i]:.9g}"
            buf.write((row + "\n").encode("ascii"))
        for tri in mesh.triangles:
            buf.write(f"3 {tri[0]} {tri[1]} {tri[2]}\n".encode("ascii"))
    return buf.getvalue()
