"""Toy corpus construction: fracture a primitive, sample it, persist a dataset.

Categories map to primitives; "slab" is a flattened cube kept out of the
standard corpus so it can serve as an unseen domain for adapter fine-tuning.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .data import (
    AssemblyProblem,
    DatasetManifest,
    ManifestEntry,
    allocate_point_budget,
    build_fragments,
    label_fracture_points,
    load_manifest,
    normalize_and_augment,
    save_manifest,
    save_problem,
)
from .errors import DegenerateCut, EmptyDataset
from .manifold import Pose, derive_rng
from .toygen import make_toy_fracture_meshes

CATEGORY_PRIMITIVES = {
    "cube": ("cube", None),
    "sphere": ("sphere", None),
    "cylinder": ("cylinder", None),
    "slab": ("cube", (1.0, 1.0, 0.28)),
}


def make_toy_fracture(primitive: str, n_cuts: int, rng, points_per_object: int = 512,
                      extents=None, min_points: int = 17, category=None, problem_id="toy") -> AssemblyProblem:
    """Fracture a primitive with n_cuts random planes and sample it into a
    normalized AssemblyProblem (identity ground-truth poses)."""
    meshes = make_toy_fracture_meshes(primitive, n_cuts, rng, extents=extents)
    budgets = allocate_point_budget(meshes, points_per_object, min_points=min_points)
    fragments = build_fragments(meshes, budgets, rng)
    problem = AssemblyProblem(
        fragments,
        [Pose.identity() for _ in fragments],
        category or primitive,
        problem_id,
    )
    return normalize_and_augment(problem)


def generate_toy_problem(category: str, rng, points_per_object=512, min_fragments=2,
                         max_fragments=5, cuts=(1, 3), min_points=17, problem_id="toy") -> AssemblyProblem:
    """Resample until the fragment count lands in [min_fragments, max_fragments]."""
    primitive, extents = CATEGORY_PRIMITIVES[category]
    for _ in range(200):
        n_cuts = int(rng.integers(cuts[0], cuts[1] + 1))
        try:
            problem = make_toy_fracture(
                primitive, n_cuts, rng, points_per_object=points_per_object,
                extents=extents, min_points=min_points, category=category, problem_id=problem_id,
            )
        except DegenerateCut:
            continue
        if min_fragments <= problem.n_fragments <= max_fragments:
            return problem
    raise DegenerateCut(f"could not generate a {category} problem within fragment bounds")


def generate_toy_dataset(root, count: int, seed: int, categories=("cube", "sphere", "cylinder"),
                         points_per_object=512, min_fragments=2, max_fragments=5,
                         cuts=(1, 3), val_fraction=0.2, min_points=17) -> DatasetManifest:
    """Write a full toy dataset under root; deterministic in (seed, arguments)."""
    if count < 1:
        raise EmptyDataset("count must be >= 1")
    root = Path(root)
    categories = list(categories)
    split_rng = derive_rng(seed, "split")
    perm = split_rng.permutation(count)
    n_val = int(round(count * val_fraction))
    val_ids = set(perm[:n_val].tolist())

    entries = []
    for i in range(count):
        category = categories[i % len(categories)]
        pid = f"{category}_{i:04d}"
        rng = derive_rng(seed, "gen", i)
        problem = generate_toy_problem(
            category, rng, points_per_object=points_per_object,
            min_fragments=min_fragments, max_fragments=max_fragments,
            cuts=cuts, min_points=min_points, problem_id=pid,
        )
        save_problem(problem, root)
        entries.append(
            ManifestEntry(pid, category, pid, "val" if i in val_ids else "train", problem.n_fragments)
        )
    manifest = DatasetManifest(root, entries)
    save_manifest(manifest)
    return manifest


def preprocess_meshes(root, assemblies, seed: int, points_per_object=512, tol=1e-4,
                      val_fraction=0.2, min_points=17) -> DatasetManifest:
    """Build a dataset from user meshes already posed in a shared assembled frame.

    assemblies: list of dicts {"id", "category", "meshes": [Mesh, ...]}.
    Fracture labels come from shared-surface detection at tolerance ``tol``.
    """
    if not assemblies:
        raise EmptyDataset("no assemblies to preprocess")
    root = Path(root)
    split_rng = derive_rng(seed, "split")
    perm = split_rng.permutation(len(assemblies))
    n_val = int(round(len(assemblies) * val_fraction))
    val_ids = set(perm[:n_val].tolist())

    entries = []
    for i, asm in enumerate(assemblies):
        meshes = asm["meshes"]
        rng = derive_rng(seed, "prep", i)
        flags = [
            label_fracture_points(m, [o for j, o in enumerate(meshes) if j != k], tol=tol)
            for k, m in enumerate(meshes)
        ]
        budgets = allocate_point_budget(meshes, points_per_object, min_points=min_points)
        fragments = build_fragments(meshes, budgets, rng, fracture_flags=flags)
        problem = AssemblyProblem(
            fragments, [Pose.identity() for _ in fragments], asm.get("category", ""), asm["id"]
        )
        problem = normalize_and_augment(problem)
        save_problem(problem, root)
        entries.append(
            ManifestEntry(asm["id"], problem.category, asm["id"], "val" if i in val_ids else "train", problem.n_fragments)
        )
    manifest = DatasetManifest(root, entries)
    save_manifest(manifest)
    return manifest


def split_problems(manifest: DatasetManifest):
    from .data import load_problems

    train = load_problems(manifest, "train")
    val = load_problems(manifest, "val")
    if not train:
        raise EmptyDataset(f"dataset at {manifest.root} has no training split")
    return train, val
