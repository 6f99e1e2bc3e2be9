"""Dataset construction and persistence.

A stored AssemblyProblem keeps every fragment's sampled points in the shared
assembled frame with identity ground-truth poses (the toy generator's output
after normalization). ``gt_poses`` remain in the schema for generality: a
problem whose fragments live in other frames carries the poses that assemble
them.

On-disk layout:
    <root>/manifest.json
    <root>/<id>/meta.json        gt poses (7 floats wxyz+xyz), counts, category
    <root>/<id>/frag_<k>.bin     float32 LE points | normals | scale, then a
                                 packed label bitset
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptyMesh, IoError, SchemaError, TooFewPoints
from .manifold import Pose, quat_rotate, sample_uniform_rotation
from .meshio import Mesh
from .sampling import poisson_disk_sample

SCHEMA_VERSION = 1
MIN_FRAGMENT_POINTS = 8


@dataclass
class Fragment:
    """One rigid piece: sampled surface points with normals, a per-point size
    cue (fragment radius / object radius), and fracture-surface labels."""

    points: np.ndarray          # (M, 3) float32
    normals: np.ndarray         # (M, 3) float32, unit
    scale: np.ndarray           # (M,)   float32
    fracture_label: np.ndarray  # (M,)   bool

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float32).reshape(-1, 3)
        self.normals = np.asarray(self.normals, dtype=np.float32).reshape(-1, 3)
        self.scale = np.asarray(self.scale, dtype=np.float32).reshape(-1)
        self.fracture_label = np.asarray(self.fracture_label, dtype=bool).reshape(-1)
        m = len(self.points)
        if m < MIN_FRAGMENT_POINTS:
            raise TooFewPoints(f"fragment has {m} points (< {MIN_FRAGMENT_POINTS})")
        if not (len(self.normals) == len(self.scale) == len(self.fracture_label) == m):
            raise SchemaError("fragment arrays disagree on point count")

    @property
    def n_points(self):
        return len(self.points)


@dataclass
class AssemblyProblem:
    fragments: list
    gt_poses: list
    category: str = ""
    id: str = ""

    def __post_init__(self):
        if len(self.fragments) != len(self.gt_poses):
            raise SchemaError(
                f"{len(self.fragments)} fragments vs {len(self.gt_poses)} poses in '{self.id}'"
            )

    @property
    def n_fragments(self):
        return len(self.fragments)

    def assembled_points(self):
        """All points placed by the ground-truth poses, concatenated."""
        return np.concatenate(
            [pose.apply(f.points.astype(np.float64)) for f, pose in zip(self.fragments, self.gt_poses)]
        )


@dataclass
class ManifestEntry:
    id: str
    category: str
    dir: str
    split: str
    n_fragments: int


@dataclass
class DatasetManifest:
    root: Path
    entries: list = field(default_factory=list)

    def split(self, tag):
        return [e for e in self.entries if e.split == tag]

    def __len__(self):
        return len(self.entries)


# -- per-point budgets -----------------------------------------------------------


def allocate_point_budget(areas, total: int, min_points: int = MIN_FRAGMENT_POINTS):
    """Split ``total`` proportionally to surface areas (largest-remainder
    rounding), clamping every share to at least ``min_points``."""
    areas = np.asarray([a.area() if isinstance(a, Mesh) else float(a) for a in areas], dtype=np.float64)
    n = len(areas)
    if total < min_points * n:
        raise TooFewPoints(f"budget {total} cannot give {n} fragments {min_points} points each")
    raw = areas / areas.sum() * total
    base = np.floor(raw).astype(np.int64)
    frac = raw - base
    for i in np.argsort(-frac)[: total - int(base.sum())]:
        base[i] += 1
    # enforce the floor by taking from the largest shares
    while True:
        deficit = np.maximum(min_points - base, 0)
        if not deficit.any():
            break
        base += deficit
        excess = int(base.sum()) - total
        order = np.argsort(-base)
        for i in order:
            if excess == 0:
                break
            take = min(excess, base[i] - min_points)
            base[i] -= take
            excess -= take
    return [int(b) for b in base]


# -- fracture ground truth ---------------------------------------------------------


def _point_triangle_distances(points, tri):
    """Min distance from each point to each triangle; (P,) given (P,3) and (T,3,3)."""
    a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
    ab, ac = b - a, c - a
    best = np.full(len(points), np.inf)
    for t in range(len(tri)):
        ap = points - a[t]
        d1 = ap @ ab[t]
        d2 = ap @ ac[t]
        aa, bb, ab_ = ab[t] @ ab[t], ac[t] @ ac[t], ab[t] @ ac[t]
        denom = aa * bb - ab_ * ab_
        v = (bb * d1 - ab_ * d2) / max(denom, 1e-300)
        w = (aa * d2 - ab_ * d1) / max(denom, 1e-300)
        v = np.clip(v, 0.0, 1.0)
        w = np.clip(w, 0.0, 1.0)
        over = v + w > 1.0
        if over.any():
            s = v[over] + w[over]
            v[over] /= s
            w[over] /= s
        closest = a[t] + v[:, None] * ab[t] + w[:, None] * ac[t]
        d = np.linalg.norm(points - closest, axis=1)
        np.minimum(best, d, out=best)
    return best


def label_fracture_points(fragment_mesh: Mesh, mating_meshes, tol: float = 1e-4):
    """Per-face fracture flags: a face is fracture iff its centroid lies within
    ``tol`` of some mating fragment's surface. All meshes share the assembled frame.

    The clipped-inward projection above is approximate for points far outside a
    triangle's plane but exact within ``tol`` of the surface, which is the regime
    that decides the flags.
    """
    if fragment_mesh.is_empty():
        raise EmptyMesh("cannot label an empty mesh")
    centroids = fragment_mesh.face_centroids()
    flags = np.zeros(fragment_mesh.n_faces, dtype=bool)
    for mate in mating_meshes:
        if mate.is_empty():
            raise EmptyMesh("mating mesh is empty")
        undecided = ~flags
        if not undecided.any():
            break
        d = _point_triangle_distances(centroids[undecided], mate.triangles())
        flags[undecided] = d <= tol
    return flags


# -- fragment construction -----------------------------------------------------------


def build_fragments(meshes, budgets, rng, fracture_flags=None):
    """Sample tagged meshes into Fragments (assembled frame, identity poses).

    fracture_flags: optional list of per-face boolean arrays; by default a
    face is fracture iff its tag >= 0 (a cut-plane cap).
    """
    all_c = np.concatenate([m.vertices for m in meshes])
    obj_center = all_c.mean(axis=0)
    obj_radius = np.linalg.norm(all_c - obj_center, axis=1).max()
    fragments = []
    for k, (mesh, budget) in enumerate(zip(meshes, budgets)):
        pts, normals, fi = poisson_disk_sample(mesh, budget, rng)
        flags = fracture_flags[k][fi] if fracture_flags is not None else mesh.face_tags[fi] >= 0
        center = pts.mean(axis=0)
        frag_radius = np.linalg.norm(pts - center, axis=1).max()
        scale = np.full(len(pts), frag_radius / obj_radius, dtype=np.float32)
        fragments.append(Fragment(pts, normals, scale, flags))
    return fragments


def normalize_and_augment(problem: AssemblyProblem, rng=None, augment: bool = False) -> AssemblyProblem:
    """Recenter the assembled union to the origin and scale it to unit bounding
    radius, re-expressing fragments in the normalized assembled frame with
    identity poses. With ``augment`` a shared random rotation of the assembled
    frame is applied; per-fragment initial poses are the trainer's business.
    """
    assembled = [pose.apply(f.points.astype(np.float64)) for f, pose in zip(problem.fragments, problem.gt_poses)]
    world_normals = [
        pose.apply_normals(f.normals.astype(np.float64)) for f, pose in zip(problem.fragments, problem.gt_poses)
    ]
    allp = np.concatenate(assembled)
    center = allp.mean(axis=0)
    radius = np.linalg.norm(allp - center, axis=1).max()
    already = (
        np.linalg.norm(center) < 1e-6
        and abs(radius - 1.0) < 1e-6
        and all(p.is_identity() for p in problem.gt_poses)
    )
    if not already:
        assembled = [(p - center) / radius for p in assembled]

    if augment:
        if rng is None:
            raise ValueError("augment=True needs an rng")
        q = sample_uniform_rotation(rng)
        assembled = [quat_rotate(q, p) for p in assembled]
        world_normals = [quat_rotate(q, n) for n in world_normals]
    elif already:
        return AssemblyProblem(list(problem.fragments), list(problem.gt_poses), problem.category, problem.id)

    obj_radius = 1.0  # by construction after normalization
    fragments = []
    for pts, normals, f in zip(assembled, world_normals, problem.fragments):
        c = pts.mean(axis=0)
        frag_radius = np.linalg.norm(pts - c, axis=1).max()
        scale = np.full(len(pts), frag_radius / obj_radius, dtype=np.float32)
        fragments.append(Fragment(pts, normals, scale, f.fracture_label.copy()))
    gt = [Pose.identity() for _ in fragments]
    return AssemblyProblem(fragments, gt, problem.category, problem.id)


# -- persistence ------------------------------------------------------------------


def save_problem(problem: AssemblyProblem, root) -> list:
    """Write <root>/<id>/frag_<k>.bin + meta.json; returns written paths."""
    root = Path(root)
    pdir = root / problem.id
    pdir.mkdir(parents=True, exist_ok=True)
    paths = []
    frag_meta = []
    for k, frag in enumerate(problem.fragments):
        blob = (
            frag.points.astype("<f4").tobytes()
            + frag.normals.astype("<f4").tobytes()
            + frag.scale.astype("<f4").reshape(-1, 1).tobytes()
            + np.packbits(frag.fracture_label).tobytes()
        )
        p = pdir / f"frag_{k}.bin"
        p.write_bytes(blob)
        paths.append(p)
        frag_meta.append({"file": p.name, "points": int(frag.n_points)})
    meta = {
        "version": SCHEMA_VERSION,
        "id": problem.id,
        "category": problem.category,
        "fragments": frag_meta,
        "gt_poses": [[float(x) for x in pose.as_array()] for pose in problem.gt_poses],
    }
    mpath = pdir / "meta.json"
    mpath.write_text(json.dumps(meta, indent=1, sort_keys=True))
    paths.append(mpath)
    return paths


def load_problem(pdir) -> AssemblyProblem:
    pdir = Path(pdir)
    mpath = pdir / "meta.json"
    if not mpath.exists():
        raise SchemaError(f"missing problem metadata: {mpath}", path=mpath)
    meta = json.loads(mpath.read_text())
    if meta.get("version") != SCHEMA_VERSION:
        raise SchemaError(f"unsupported problem schema version in {mpath}", path=mpath)
    fragments = []
    for fm in meta["fragments"]:
        fpath = pdir / fm["file"]
        if not fpath.exists():
            raise SchemaError(f"missing fragment file: {fpath}", path=fpath)
        m = int(fm["points"])
        raw = fpath.read_bytes()
        expected = m * 4 * 7 + (m + 7) // 8
        if len(raw) != expected:
            raise SchemaError(f"fragment file size mismatch: {fpath}", path=fpath)
        off = 0
        pts = np.frombuffer(raw, dtype="<f4", count=3 * m, offset=off).reshape(m, 3)
        off += 12 * m
        normals = np.frombuffer(raw, dtype="<f4", count=3 * m, offset=off).reshape(m, 3)
        off += 12 * m
        scale = np.frombuffer(raw, dtype="<f4", count=m, offset=off)
        off += 4 * m
        labels = np.unpackbits(np.frombuffer(raw, dtype=np.uint8, offset=off))[:m].astype(bool)
        fragments.append(Fragment(pts.copy(), normals.copy(), scale.copy(), labels))
    poses = [Pose.from_array(a) for a in meta["gt_poses"]]
    return AssemblyProblem(fragments, poses, meta["category"], meta["id"])


def save_manifest(manifest: DatasetManifest) -> Path:
    root = Path(manifest.root)
    root.mkdir(parents=True, exist_ok=True)
    doc = {
        "version": SCHEMA_VERSION,
        "entries": [
            {
                "id": e.id,
                "category": e.category,
                "dir": e.dir,
                "split": e.split,
                "n_fragments": e.n_fragments,
            }
            for e in manifest.entries
        ],
    }
    path = root / "manifest.json"
    path.write_text(json.dumps(doc, indent=1, sort_keys=True))
    return path


def load_manifest(root) -> DatasetManifest:
    root = Path(root)
    path = root / "manifest.json"
    if not path.exists():
        raise IoError(f"manifest not found: {path}", path=path)
    doc = json.loads(path.read_text())
    if doc.get("version") != SCHEMA_VERSION:
        raise SchemaError(f"unsupported manifest version in {path}", path=path)
    entries = []
    seen = set()
    for e in doc["entries"]:
        if e["id"] in seen:
            raise SchemaError(f"duplicate problem id '{e['id']}' in {path}", path=path)
        seen.add(e["id"])
        pdir = root / e["dir"]
        if not (pdir / "meta.json").exists():
            raise SchemaError(f"manifest references missing problem: {pdir / 'meta.json'}", path=pdir / "meta.json")
        entries.append(ManifestEntry(e["id"], e["category"], e["dir"], e["split"], int(e["n_fragments"])))
    return DatasetManifest(root, entries)


def load_problems(manifest: DatasetManifest, split=None):
    entries = manifest.entries if split is None else manifest.split(split)
    return [load_problem(Path(manifest.root) / e.dir) for e in entries]
