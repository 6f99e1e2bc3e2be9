"""Deterministic toy-fracture generator: convex primitives split by random planes.

Each fragment is the primitive intersected with a set of halfspaces, meshed by
sequentially clipping the primitive's triangles and capping every cross
section. Caps carry the cutting plane's index as their face tag; original
surface keeps tag -1. Because the primitives are convex, every cross section
is a convex polygon, so mating caps on both sides of a plane coincide exactly
and the fracture ground truth is exact by construction.
"""

from __future__ import annotations

import numpy as np

from .errors import DegenerateCut
from .meshio import Mesh

_CLIP_EPS = 1e-12


# -- primitives -----------------------------------------------------------------


def cube_mesh(extents=(1.0, 1.0, 1.0)) -> Mesh:
    e = np.asarray(extents, dtype=np.float64) / 2.0
    corners = np.array(
        [[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)], dtype=np.float64
    ) * e
    # outward-oriented quads, split into triangles
    quads = [
        (0, 1, 3, 2),  # -x
        (4, 6, 7, 5),  # +x
        (0, 4, 5, 1),  # -y
        (2, 3, 7, 6),  # +y
        (0, 2, 6, 4),  # -z
        (1, 5, 7, 3),  # +z
    ]
    faces = []
    for a, b, c, d in quads:
        faces += [[a, b, c], [a, c, d]]
    return Mesh(corners, np.array(faces))


def icosphere_mesh(radius=0.5, subdivisions=2) -> Mesh:
    phi = (1 + np.sqrt(5)) / 2
    verts = np.array(
        [
            [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
            [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
            [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
        ],
        dtype=np.float64,
    )
    faces = np.array(
        [
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ]
    )
    verts /= np.linalg.norm(verts, axis=1, keepdims=True)
    for _ in range(subdivisions):
        cache = {}
        vlist = list(verts)

        def midpoint(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                m = vlist[i] + vlist[j]
                m = m / np.linalg.norm(m)
                cache[key] = len(vlist)
                vlist.append(m)
            return cache[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        verts = np.array(vlist)
        faces = np.array(new_faces)
    return Mesh(verts * radius, faces)


def cylinder_mesh(radius=0.35, height=1.0, segments=48) -> Mesh:
    ang = 2 * np.pi * np.arange(segments) / segments
    ring = np.stack([radius * np.cos(ang), radius * np.sin(ang)], axis=1)
    bottom = np.column_stack([ring, np.full(segments, -height / 2)])
    top = np.column_stack([ring, np.full(segments, height / 2)])
    cb = np.array([[0.0, 0.0, -height / 2]])
    ct = np.array([[0.0, 0.0, height / 2]])
    verts = np.vstack([bottom, top, cb, ct])
    icb, ict = 2 * segments, 2 * segments + 1
    faces = []
    for i in range(segments):
        j = (i + 1) % segments
        faces += [[i, j, segments + j], [i, segments + j, segments + i]]  # side, outward
        faces += [[icb, j, i]]  # bottom cap, -z outward
        faces += [[ict, segments + i, segments + j]]  # top cap, +z outward
    return Mesh(verts, np.array(faces))


PRIMITIVES = {
    "cube": cube_mesh,
    "sphere": icosphere_mesh,
    "cylinder": cylinder_mesh,
}


def primitive_mesh(name: str, extents=None) -> Mesh:
    if name not in PRIMITIVES:
        raise ValueError(f"unknown primitive '{name}' (choose from {sorted(PRIMITIVES)})")
    if name == "cube" and extents is not None:
        return cube_mesh(extents)
    return PRIMITIVES[name]()


# -- halfspace clipping -----------------------------------------------------------


def clip_mesh_halfspace(mesh: Mesh, normal, offset: float, cap_tag: int) -> Mesh:
    """Keep {x : normal.x <= offset}; cap the convex cross section with tag cap_tag."""
    normal = np.asarray(normal, dtype=np.float64)
    verts = mesh.vertices
    sdist = verts @ normal - offset

    new_verts = list(verts)
    new_faces, new_tags = [], []
    chord_pts = []

    def cut_point(i, j):
        si, sj = sdist[i], sdist[j]
        t = si / (si - sj)
        p = verts[i] + t * (verts[j] - verts[i])
        new_verts.append(p)
        return len(new_verts) - 1, p

    for f, tag in zip(mesh.faces, mesh.face_tags):
        s = sdist[f]
        if np.all(s <= _CLIP_EPS):
            new_faces.append(list(f))
            new_tags.append(tag)
            continue
        if np.all(s >= -_CLIP_EPS):
            continue
        # mixed: clip the triangle polygon against the halfspace (keeps order)
        poly = []
        for k in range(3):
            i, j = f[k], f[(k + 1) % 3]
            if sdist[i] <= _CLIP_EPS:
                poly.append(i)
            inside_i, inside_j = sdist[i] <= _CLIP_EPS, sdist[j] <= _CLIP_EPS
            if inside_i != inside_j and abs(sdist[i]) > _CLIP_EPS and abs(sdist[j]) > _CLIP_EPS:
                idx, p = cut_point(i, j)
                poly.append(idx)
                chord_pts.append(p)
        for k in range(1, len(poly) - 1):
            tri = [poly[0], poly[k], poly[k + 1]]
            new_faces.append(tri)
            new_tags.append(tag)
        # vertices lying on the plane bound the cap too
        for i in f:
            if abs(sdist[i]) <= _CLIP_EPS:
                chord_pts.append(verts[i])

    if not new_faces:
        return Mesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64), np.zeros(0, dtype=np.int64))

    # cap: convex cross section -> sort boundary points by angle and fan out
    if chord_pts:
        pts = np.unique(np.round(np.asarray(chord_pts) / 1e-9).astype(np.int64), axis=0) * 1e-9
        if len(pts) >= 3:
            center = pts.mean(axis=0)
            e1 = pts[0] - center
            e1 -= normal * (e1 @ normal)
            n1 = np.linalg.norm(e1)
            if n1 > 1e-12:
                e1 /= n1
                e2 = np.cross(normal, e1)
                ang = np.arctan2((pts - center) @ e2, (pts - center) @ e1)
                order = np.argsort(ang)
                pts = pts[order]
                base = len(new_verts)
                new_verts.extend(pts)
                ci = len(new_verts)
                new_verts.append(center)
                for k in range(len(pts)):
                    j = (k + 1) % len(pts)
                    # oriented so the cap normal points along +normal (outward)
                    new_faces.append([ci, base + k, base + j])
                    new_tags.append(cap_tag)

    return Mesh(np.array(new_verts), np.array(new_faces), np.array(new_tags))


# -- fracture cells ----------------------------------------------------------------


def _cell_mesh(mesh: Mesh, planes, signs: dict) -> Mesh:
    out = mesh
    for j, side in sorted(signs.items()):
        n, d = planes[j]
        if side < 0:
            out = clip_mesh_halfspace(out, n, d, cap_tag=j)
        else:
            out = clip_mesh_halfspace(out, -n, -d, cap_tag=j)
        if out.is_empty():
            return out
    return out


def _split_by_planes(mesh: Mesh, planes, min_volume_frac: float):
    """Enumerate sign cells, drop empties, merge sub-threshold cells into the
    neighbor across one plane (dropping that constraint keeps regions convex).
    Returns list of meshes or None when merging cannot be done exactly."""
    n_cuts = len(planes)
    total_volume = mesh.volume()
    cells = {}
    for bits in range(2**n_cuts):
        signs = {j: (1 if bits >> j & 1 else -1) for j in range(n_cuts)}
        m = _cell_mesh(mesh, planes, signs)
        if not m.is_empty() and m.volume() > 1e-12:
            cells[tuple(sorted(signs.items()))] = m

    def volume_of(key):
        return cells[key].volume()

    changed = True
    while changed:
        changed = False
        for key in sorted(cells, key=volume_of):
            if len(cells) <= 1:
                break
            if volume_of(key) >= min_volume_frac * total_volume:
                continue
            signs = dict(key)
            merged = False
            for j in sorted(signs):
                flipped = dict(signs)
                flipped[j] = -flipped[j]
                fkey = tuple(sorted(flipped.items()))
                if fkey in cells:
                    rest = dict(signs)
                    del rest[j]
                    m = _cell_mesh(mesh, planes, rest)
                    rkey = tuple(sorted(rest.items()))
                    del cells[key]
                    del cells[fkey]
                    cells[rkey] = m
                    merged = changed = True
                    break
            if not merged:
                return None  # needs a multi-plane merge; caller resamples
            break

    if len(cells) < 2:
        return None
    return [cells[k] for k in sorted(cells)]


# cut planes nearly parallel to a primitive's flat faces make cut/original
# labels genuinely ambiguous at desk point budgets; keep cuts oblique
AVOID_AXES = {
    "cube": np.eye(3),
    "cylinder": np.array([[0.0, 0.0, 1.0]]),
    "sphere": np.zeros((0, 3)),
}
AVOID_ANGLE_DEG = 18.0


def _sample_plane(rng, radius, avoid_axes):
    cos_limit = np.cos(np.radians(AVOID_ANGLE_DEG))
    for _ in range(1000):
        n = rng.standard_normal(3)
        n /= np.linalg.norm(n)
        if len(avoid_axes) and np.abs(avoid_axes @ n).max() > cos_limit:
            continue
        p0 = rng.standard_normal(3)
        p0 *= rng.uniform(0, 0.25 * radius) / max(np.linalg.norm(p0), 1e-12)
        return n, float(n @ p0)
    raise DegenerateCut("could not sample an oblique cut plane")


def make_toy_fracture_meshes(primitive: str, n_cuts: int, rng, extents=None, min_volume_frac=0.01):
    """Split a primitive by n_cuts random oblique planes through the interior.

    Returns a list of tagged meshes in the assembled frame. Raises
    DegenerateCut when 100 plane resamples fail to produce >= 2 fragments.
    """
    if not 1 <= n_cuts <= 4:
        raise ValueError("n_cuts must be in [1, 4]")
    base = primitive_mesh(primitive, extents)
    radius = np.linalg.norm(base.vertices, axis=1).max()
    avoid = AVOID_AXES.get(primitive, np.zeros((0, 3)))
    for _ in range(100):
        planes = [_sample_plane(rng, radius, avoid) for _ in range(n_cuts)]
        pieces = _split_by_planes(base, planes, min_volume_frac)
        if pieces is not None:
            return pieces
    raise DegenerateCut(f"no valid fracture of {primitive} after 100 plane resamples")
