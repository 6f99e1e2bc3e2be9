"""Triangle-mesh container, OBJ/PLY readers, PLY point-cloud export.

Meshes carry an optional per-face integer tag: -1 marks original surface,
j >= 0 marks a cap produced by cut plane j (a fracture face).
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import EmptyMesh, IoError

_DEGENERATE_AREA = 1e-14


class Mesh:
    def __init__(self, vertices, faces, face_tags=None):
        self.vertices = np.asarray(vertices, dtype=np.float64).reshape(-1, 3)
        self.faces = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
        if self.faces.size and (self.faces.min() < 0 or self.faces.max() >= len(self.vertices)):
            raise IoError("face index out of range")
        if face_tags is None:
            face_tags = np.full(len(self.faces), -1, dtype=np.int64)
        self.face_tags = np.asarray(face_tags, dtype=np.int64).reshape(-1)
        self._drop_degenerate()

    def _drop_degenerate(self):
        if len(self.faces) == 0:
            return
        keep = self.face_areas() > _DEGENERATE_AREA
        self.faces = self.faces[keep]
        self.face_tags = self.face_tags[keep]

    @property
    def n_faces(self):
        return len(self.faces)

    def is_empty(self):
        return len(self.faces) == 0

    def triangles(self):
        return self.vertices[self.faces]  # (F, 3, 3)

    def face_areas(self):
        t = self.triangles()
        return 0.5 * np.linalg.norm(np.cross(t[:, 1] - t[:, 0], t[:, 2] - t[:, 0]), axis=1)

    def face_normals(self):
        t = self.triangles()
        n = np.cross(t[:, 1] - t[:, 0], t[:, 2] - t[:, 0])
        norm = np.linalg.norm(n, axis=1, keepdims=True)
        return n / np.maximum(norm, 1e-300)

    def face_centroids(self):
        return self.triangles().mean(axis=1)

    def area(self):
        return float(self.face_areas().sum())

    def volume(self):
        """Signed volume via the divergence theorem; positive for outward orientation."""
        t = self.triangles()
        return float(np.einsum("ij,ij->i", t[:, 0], np.cross(t[:, 1], t[:, 2])).sum() / 6.0)

    def centroid(self):
        areas = self.face_areas()
        return (self.face_centroids() * areas[:, None]).sum(axis=0) / areas.sum()


# -- readers -------------------------------------------------------------------


def load_obj(path) -> Mesh:
    """ASCII OBJ: v and f records only; polygon faces are fan-triangulated."""
    path = Path(path)
    if not path.exists():
        raise IoError(f"mesh not found: {path}", path=path)
    verts, faces = [], []
    for line in path.read_text().splitlines():
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "v":
            verts.append([float(x) for x in parts[1:4]])
        elif parts[0] == "f":
            idx = [int(p.split("/")[0]) for p in parts[1:]]
            idx = [i - 1 if i > 0 else len(verts) + i for i in idx]
            for k in range(1, len(idx) - 1):
                faces.append([idx[0], idx[k], idx[k + 1]])
    if not faces:
        raise EmptyMesh(f"no faces in {path}", path=path)
    return Mesh(np.array(verts), np.array(faces))


def load_ply(path) -> Mesh:
    """Binary little-endian or ASCII PLY with vertex x/y/z and face lists."""
    path = Path(path)
    if not path.exists():
        raise IoError(f"mesh not found: {path}", path=path)
    raw = path.read_bytes()
    end = raw.find(b"end_header\n")
    if not raw.startswith(b"ply") or end < 0:
        raise IoError(f"not a PLY file: {path}", path=path)
    header = raw[: end + 11].decode("ascii", errors="replace")
    body = raw[end + 11 :]

    fmt = None
    elements = []  # (name, count, [(prop_type, prop_name) or ('list', count_t, item_t, name)])
    for line in header.splitlines():
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "format":
            fmt = parts[1]
        elif parts[0] == "element":
            elements.append((parts[1], int(parts[2]), []))
        elif parts[0] == "property":
            if parts[1] == "list":
                elements[-1][2].append(("list", parts[2], parts[3], parts[4]))
            else:
                elements[-1][2].append((parts[1], parts[2]))
    if fmt not in ("binary_little_endian", "ascii"):
        raise IoError(f"unsupported PLY format '{fmt}' in {path}", path=path)

    scalar = {
        "char": "b", "int8": "b", "uchar": "B", "uint8": "B",
        "short": "h", "int16": "h", "ushort": "H", "uint16": "H",
        "int": "i", "int32": "i", "uint": "I", "uint32": "I",
        "float": "f", "float32": "f", "double": "d", "float64": "d",
    }

    verts, faces = [], []
    if fmt == "ascii":
        tokens = body.decode("ascii").split()
        pos = 0
        for name, count, props in elements:
            for _ in range(count):
                if name == "vertex":
                    row = {}
                    for p in props:
                        row[p[-1]] = float(tokens[pos]); pos += 1
                    verts.append([row["x"], row["y"], row["z"]])
                elif name == "face":
                    n = int(tokens[pos]); pos += 1
                    idx = [int(tokens[pos + k]) for k in range(n)]; pos += n
                    for k in range(1, n - 1):
                        faces.append([idx[0], idx[k], idx[k + 1]])
                else:
                    pos += len(props)
    else:
        off = 0
        for name, count, props in elements:
            for _ in range(count):
                if name == "face" and props and props[0][0] == "list":
                    _, ct, it, _ = props[0]
                    (n,) = struct.unpack_from("<" + scalar[ct], body, off)
                    off += struct.calcsize(scalar[ct])
                    idx = struct.unpack_from("<" + scalar[it] * n, body, off)
                    off += struct.calcsize(scalar[it]) * n
                    for k in range(1, n - 1):
                        faces.append([idx[0], idx[k], idx[k + 1]])
                else:
                    row = {}
                    for p in props:
                        (v,) = struct.unpack_from("<" + scalar[p[0]], body, off)
                        off += struct.calcsize(scalar[p[0]])
                        row[p[-1]] = v
                    if name == "vertex":
                        verts.append([row["x"], row["y"], row["z"]])
    if not faces:
        raise EmptyMesh(f"no faces in {path}", path=path)
    return Mesh(np.array(verts, dtype=np.float64), np.array(faces))


def load_mesh(path) -> Mesh:
    path = Path(path)
    if path.suffix.lower() == ".obj":
        return load_obj(path)
    if path.suffix.lower() == ".ply":
        return load_ply(path)
    raise IoError(f"unsupported mesh format: {path}", path=path)


def write_ply_points(path, points, colors=None) -> None:
    """Binary little-endian PLY point cloud with optional uchar RGB colors."""
    points = np.asarray(points, dtype="<f4").reshape(-1, 3)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [
        "ply",
        "format binary_little_endian 1.0",
        f"element vertex {len(points)}",
        "property float x",
        "property float y",
        "property float z",
    ]
    if colors is not None:
        colors = np.asarray(colors, dtype=np.uint8).reshape(-1, 3)
        lines += ["property uchar red", "property uchar green", "property uchar blue"]
    lines.append("end_header")
    header = ("\n".join(lines) + "\n").encode("ascii")
    if colors is None:
        body = points.tobytes()
    else:
        body = b"".join(points[i].tobytes() + colors[i].tobytes() for i in range(len(points)))
    path.write_bytes(header + body)
