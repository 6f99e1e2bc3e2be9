import numpy as np
import pytest

from fracflow.corpus import generate_toy_dataset, make_toy_fracture
from fracflow.data import (
    AssemblyProblem,
    Fragment,
    allocate_point_budget,
    label_fracture_points,
    load_manifest,
    load_problem,
    load_problems,
    normalize_and_augment,
    save_manifest,
    save_problem,
    DatasetManifest,
)
from fracflow.errors import EmptyMesh, IoError, SchemaError, TooFewPoints
from fracflow.manifold import Pose, make_rng, so3_exp
from fracflow.meshio import Mesh, load_obj, load_ply, write_ply_points
from fracflow.sampling import poisson_disk_sample
from fracflow.toygen import cube_mesh, cylinder_mesh, icosphere_mesh, make_toy_fracture_meshes


def tet_volume_oracle(mesh):
    """Independent signed-volume oracle: sum of origin-anchored tetrahedra."""
    total = 0.0
    for f in mesh.faces:
        a, b, c = mesh.vertices[f]
        total += np.dot(a, np.cross(b, c)) / 6.0
    return total


class TestPrimitives:
    def test_cube_volume_and_area(self):
        m = cube_mesh()
        assert m.volume() == pytest.approx(1.0, rel=1e-12)
        assert m.area() == pytest.approx(6.0, rel=1e-12)

    def test_sphere_volume_close(self):
        # inscribed icosphere at subdivision 2 carries ~96.6% of the ball volume
        m = icosphere_mesh(radius=0.5, subdivisions=2)
        assert m.volume() == pytest.approx(4 / 3 * np.pi * 0.5**3, rel=0.05)

    def test_cylinder_volume(self):
        m = cylinder_mesh(radius=0.35, height=1.0, segments=48)
        assert m.volume() == pytest.approx(np.pi * 0.35**2, rel=0.01)


class TestToyFracture:
    def test_one_cut_two_fragments_volume_conserved(self):
        pieces = make_toy_fracture_meshes("cube", 1, make_rng(0))
        assert len(pieces) == 2
        total = sum(tet_volume_oracle(p) for p in pieces)
        assert total == pytest.approx(1.0, rel=0.01)

    def test_determinism(self):
        a = make_toy_fracture_meshes("sphere", 2, make_rng(5))
        b = make_toy_fracture_meshes("sphere", 2, make_rng(5))
        assert len(a) == len(b)
        for ma, mb in zip(a, b):
            assert ma.vertices.tobytes() == mb.vertices.tobytes()
            assert ma.faces.tobytes() == mb.faces.tobytes()

    def test_every_fragment_has_fracture_faces_and_mates_coincide(self):
        for seed in range(3):
            pieces = make_toy_fracture_meshes("cube", 2, make_rng(40 + seed))
            assert 2 <= len(pieces) <= 4
            for k, p in enumerate(pieces):
                assert (p.face_tags >= 0).any()
                # labels check out against geometric shared-surface detection
                mates = [q for j, q in enumerate(pieces) if j != k]
                flags = label_fracture_points(p, mates, tol=1e-6)
                np.testing.assert_array_equal(flags, p.face_tags >= 0)

    def test_volume_conservation_multiple_cuts(self):
        for prim in ("cube", "sphere", "cylinder"):
            pieces = make_toy_fracture_meshes(prim, 3, make_rng(9))
            whole = {"cube": cube_mesh(), "sphere": icosphere_mesh(), "cylinder": cylinder_mesh()}[prim]
            assert sum(p.volume() for p in pieces) == pytest.approx(whole.volume(), rel=0.01)

    def test_fragment_count_bounds(self):
        for seed in range(5):
            pieces = make_toy_fracture_meshes("cube", 2, make_rng(100 + seed))
            assert 2 <= len(pieces) <= 4


class TestLabelFracture:
    def test_glued_cubes_share_one_face(self):
        a = cube_mesh()
        b = cube_mesh()
        b.vertices = b.vertices + np.array([1.0, 0.0, 0.0])  # share the x=+0.5 face
        flags = label_fracture_points(a, [b], tol=1e-4)
        normals = a.face_normals()
        expect = normals[:, 0] > 0.99  # exactly the +x face triangles
        np.testing.assert_array_equal(flags, expect)

    def test_singleton_has_no_fracture(self):
        flags = label_fracture_points(cube_mesh(), [], tol=1e-4)
        assert not flags.any()

    def test_empty_mesh_raises(self):
        empty = Mesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))
        with pytest.raises(EmptyMesh):
            label_fracture_points(empty, [], tol=1e-4)

    def test_planar_split_area_fraction(self):
        # cube [-0.5, 0.5]^3 split at x = 0.3; shared plane area is 1, so the
        # fracture fraction is 1/(side area + 2 caps): left 4*0.8+2, right 4*0.2+2
        from fracflow.toygen import clip_mesh_halfspace

        cube = cube_mesh()
        left = clip_mesh_halfspace(cube, np.array([1.0, 0, 0]), 0.3, cap_tag=0)
        right = clip_mesh_halfspace(cube, np.array([-1.0, 0, 0]), -0.3, cap_tag=0)
        flags = label_fracture_points(left, [right], tol=1e-6)
        a = left.face_areas()
        assert a[flags].sum() / a.sum() == pytest.approx(1.0 / 5.2, rel=0.02)
        flags = label_fracture_points(right, [left], tol=1e-6)
        a = right.face_areas()
        assert a[flags].sum() / a.sum() == pytest.approx(1.0 / 2.8, rel=0.02)


class TestPoissonDisk:
    def test_min_pairwise_distance_on_unit_square(self):
        square = Mesh(
            np.array([[0.0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]]),
            np.array([[0, 1, 2], [0, 2, 3]]),
        )
        pts, normals, _ = poisson_disk_sample(square, 100, make_rng(3))
        assert len(pts) == 100
        d = np.linalg.norm(pts[:, None] - pts[None, :], axis=-1)
        np.fill_diagonal(d, np.inf)
        assert d.min() >= 0.5 * np.sqrt(1.0 / 100)

    def test_single_point_lies_on_surface(self):
        m = cube_mesh()
        pts, _, fi = poisson_disk_sample(m, 1, make_rng(8))
        tri = m.triangles()[fi[0]]
        n = np.cross(tri[1] - tri[0], tri[2] - tri[0])
        n /= np.linalg.norm(n)
        assert abs((pts[0] - tri[0]) @ n) < 1e-9

    def test_determinism(self):
        m = icosphere_mesh()
        a = poisson_disk_sample(m, 50, make_rng(21))[0]
        b = poisson_disk_sample(m, 50, make_rng(21))[0]
        assert a.tobytes() == b.tobytes()

    def test_empty_mesh_raises(self):
        with pytest.raises(EmptyMesh):
            poisson_disk_sample(Mesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64)), 5, make_rng(0))


class TestBudget:
    def test_proportional_split(self):
        assert allocate_point_budget([3.0, 1.0], 5000) == [3750, 1250]

    def test_equal_split(self):
        assert allocate_point_budget([2.0, 2.0], 5000) == [2500, 2500]

    def test_tiny_fragment_clamped(self):
        b = allocate_point_budget([1e-9, 5.0, 5.0], 1000)
        assert b[0] == 8
        assert sum(b) == 1000

    def test_sum_exact_over_random_cases(self):
        rng = make_rng(2)
        for _ in range(50):
            n = int(rng.integers(2, 8))
            areas = rng.uniform(0.01, 10, n)
            total = int(rng.integers(8 * n, 2000))
            b = allocate_point_budget(areas, total)
            assert sum(b) == total
            assert min(b) >= 8

    def test_too_few_total_raises(self):
        with pytest.raises(TooFewPoints):
            allocate_point_budget([1.0, 1.0], 10)


class TestToyProblem:
    def test_make_toy_fracture_normalized(self):
        p = make_toy_fracture("cube", 1, make_rng(12), points_per_object=200)
        assert p.n_fragments == 2
        allp = p.assembled_points()
        assert np.linalg.norm(allp.mean(axis=0)) < 1e-6
        assert abs(np.linalg.norm(allp, axis=1).max() - 1.0) < 1e-6
        for f in p.fragments:
            assert f.fracture_label.any()
            np.testing.assert_allclose(np.linalg.norm(f.normals, axis=1), 1.0, atol=1e-5)

    def test_density_uniform_across_fragments(self):
        # count/area varies < 5% across fragments (excluding clamped tiny ones)
        meshes = make_toy_fracture_meshes("cube", 2, make_rng(33))
        budgets = allocate_point_budget(meshes, 2000)
        density = [b / m.area() for b, m in zip(budgets, meshes) if b > 8]
        assert (max(density) - min(density)) / max(density) < 0.05


class TestNormalize:
    def _problem(self):
        return make_toy_fracture("sphere", 1, make_rng(44), points_per_object=150)

    def test_idempotent(self):
        p = self._problem()
        q = normalize_and_augment(p)
        for f, g in zip(p.fragments, q.fragments):
            np.testing.assert_allclose(f.points, g.points, atol=1e-9)

    def test_postconditions(self):
        p = self._problem()
        # denormalize by a rigid motion baked into the poses
        pose = Pose(so3_exp(np.array([0.4, 0.2, -0.1])), np.array([3.0, -1.0, 0.5]))
        moved = AssemblyProblem(p.fragments, [pose for _ in p.fragments], p.category, p.id)
        q = normalize_and_augment(moved)
        allp = q.assembled_points()
        assert np.linalg.norm(allp.mean(axis=0)) < 1e-6
        assert abs(np.linalg.norm(allp, axis=1).max() - 1.0) < 1e-6

    def test_augment_deterministic(self):
        p = self._problem()
        a = normalize_and_augment(p, make_rng(7), augment=True)
        b = normalize_and_augment(p, make_rng(7), augment=True)
        for f, g in zip(a.fragments, b.fragments):
            assert f.points.tobytes() == g.points.tobytes()


class TestPersistence:
    def test_roundtrip(self, tmp_path):
        p = make_toy_fracture("cylinder", 1, make_rng(55), points_per_object=120)
        save_problem(p, tmp_path)
        q = load_problem(tmp_path / p.id)
        assert q.category == p.category and q.n_fragments == p.n_fragments
        for f, g in zip(p.fragments, q.fragments):
            np.testing.assert_allclose(f.points, g.points, atol=1e-6)
            np.testing.assert_array_equal(f.fracture_label, g.fracture_label)
        for a, b in zip(p.gt_poses, q.gt_poses):
            np.testing.assert_allclose(a.as_array(), b.as_array(), atol=1e-6)

    def test_manifest_missing_file_names_path(self, tmp_path):
        m = DatasetManifest(tmp_path, [__import__("fracflow.data", fromlist=["ManifestEntry"]).ManifestEntry("x", "cube", "x", "train", 2)])
        save_manifest(m)
        with pytest.raises(SchemaError) as e:
            load_manifest(tmp_path)
        assert "meta.json" in str(e.value)
        assert e.value.path is not None

    def test_empty_manifest_valid(self, tmp_path):
        save_manifest(DatasetManifest(tmp_path, []))
        m = load_manifest(tmp_path)
        assert len(m) == 0

    def test_generate_toy_dataset_deterministic(self, tmp_path):
        import hashlib

        def digest(root):
            h = hashlib.sha256()
            for f in sorted(root.rglob("*")):
                if f.is_file():
                    h.update(f.relative_to(root).as_posix().encode())
                    h.update(f.read_bytes())
            return h.hexdigest()

        m1 = generate_toy_dataset(tmp_path / "a", 6, seed=7, points_per_object=150)
        m2 = generate_toy_dataset(tmp_path / "b", 6, seed=7, points_per_object=150)
        assert digest(tmp_path / "a") == digest(tmp_path / "b")
        assert len(m1) == 6
        loaded = load_problems(load_manifest(tmp_path / "a"))
        assert all(2 <= p.n_fragments <= 5 for p in loaded)


class TestMeshIO:
    def test_obj_roundtrip(self, tmp_path):
        m = cube_mesh()
        lines = ["# cube"] + [f"v {v[0]} {v[1]} {v[2]}" for v in m.vertices]
        lines += [f"f {f[0]+1} {f[1]+1} {f[2]+1}" for f in m.faces]
        p = tmp_path / "cube.obj"
        p.write_text("\n".join(lines))
        loaded = load_obj(p)
        assert loaded.volume() == pytest.approx(1.0, rel=1e-9)

    def test_ply_points_roundtrip(self, tmp_path):
        pts = make_rng(1).standard_normal((20, 3)).astype(np.float32)
        colors = (make_rng(2).random((20, 3)) * 255).astype(np.uint8)
        path = tmp_path / "c.ply"
        write_ply_points(path, pts, colors)
        raw = path.read_bytes()
        assert raw.startswith(b"ply\nformat binary_little_endian 1.0")
        assert b"element vertex 20" in raw

    def test_ply_mesh_reader(self, tmp_path):
        # write a binary PLY triangle mesh by hand and read it back
        m = cube_mesh()
        header = (
            "ply\nformat binary_little_endian 1.0\n"
            f"element vertex {len(m.vertices)}\n"
            "property float x\nproperty float y\nproperty float z\n"
            f"element face {len(m.faces)}\n"
            "property list uchar int vertex_indices\nend_header\n"
        ).encode()
        body = m.vertices.astype("<f4").tobytes()
        import struct

        fb = b"".join(struct.pack("<B3i", 3, *f) for f in m.faces)
        # interleave per-element: vertices first, then faces
        p = tmp_path / "m.ply"
        p.write_bytes(header + body + fb)
        loaded = load_ply(p)
        assert loaded.volume() == pytest.approx(1.0, rel=1e-6)

    def test_missing_mesh_raises_io(self, tmp_path):
        with pytest.raises(IoError):
            load_obj(tmp_path / "none.obj")
