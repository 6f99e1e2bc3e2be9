"""Surface sampling: area-weighted uniform and blue-noise (dart throwing)."""

from __future__ import annotations

import numpy as np

from .errors import EmptyMesh
from .meshio import Mesh


def area_weighted_sample(mesh: Mesh, count: int, rng):
    """Uniform-by-area surface samples; returns (points, face_indices)."""
    if mesh.is_empty():
        raise EmptyMesh("cannot sample an empty mesh")
    areas = mesh.face_areas()
    cum = np.cumsum(areas)
    picks = rng.random(count) * cum[-1]
    fi = np.searchsorted(cum, picks)
    fi = np.minimum(fi, len(areas) - 1)
    tri = mesh.triangles()[fi]
    u = rng.random((count, 2))
    flip = u.sum(axis=1) > 1.0
    u[flip] = 1.0 - u[flip]
    pts = tri[:, 0] + u[:, :1] * (tri[:, 1] - tri[:, 0]) + u[:, 1:] * (tri[:, 2] - tri[:, 0])
    return pts, fi


class _HashGrid:
    """Uniform 3-D grid for radius-r rejection queries."""

    def __init__(self, r):
        # cell edge = r so any pair closer than r differs by at most one cell
        # index per axis; the +-1 neighborhood search below is then exhaustive
        self.cell = r
        self.r2 = r * r
        self.grid = {}

    def _key(self, p):
        return tuple((p // self.cell).astype(np.int64))

    def too_close(self, p):
        kx, ky, kz = self._key(p)
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                for dz in (-1, 0, 1):
                    for q in self.grid.get((kx + dx, ky + dy, kz + dz), ()):
                        d = p - q
                        if d @ d < self.r2:
                            return True
        return False

    def insert(self, p):
        self.grid.setdefault(self._key(p), []).append(p)


def poisson_disk_sample(mesh: Mesh, count: int, rng, attempts_per_point: int = 120):
    """Dart-throwing blue-noise sampler returning exactly ``count`` points.

    Rejection radius is 0.5*sqrt(area/count). If dart throwing stalls, the
    remainder is filled by plain area-weighted sampling (those fill points may
    violate the radius). Returns (points, normals, face_indices).
    """
    if mesh.is_empty():
        raise EmptyMesh("cannot sample an empty mesh")
    count = int(count)
    if count < 1:
        raise ValueError("count must be >= 1")
    radius = 0.5 * np.sqrt(mesh.area() / count)
    grid = _HashGrid(radius)
    face_normals = mesh.face_normals()

    pts = np.empty((count, 3))
    fis = np.empty(count, dtype=np.int64)
    n_accepted = 0
    budget = attempts_per_point * count
    batch = max(4 * count, 64)
    while n_accepted < count and budget > 0:
        m = min(batch, budget)
        cand, cfi = area_weighted_sample(mesh, m, rng)
        budget -= m
        for p, fi in zip(cand, cfi):
            if grid.too_close(p):
                continue
            grid.insert(p)
            pts[n_accepted] = p
            fis[n_accepted] = fi
            n_accepted += 1
            if n_accepted == count:
                break

    if n_accepted < count:  # stalled: fill without the spacing guarantee
        fill, ffi = area_weighted_sample(mesh, count - n_accepted, rng)
        pts[n_accepted:] = fill
        fis[n_accepted:] = ffi

    return pts, face_normals[fis], fis
