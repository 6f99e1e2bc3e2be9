import numpy as np
import pytest

from fracflow.manifold import (
    Pose,
    Tangent,
    euler_step,
    geodesic_interp,
    make_rng,
    quat_canonical,
    quat_conj,
    quat_mul,
    quat_to_matrix,
    relative_rotation_angle,
    sample_noise_pose,
    so3_exp,
    so3_log,
)


def rodrigues_matrix(omega):
    """Independent rotation-matrix oracle from the axis-angle formula."""
    theta = np.linalg.norm(omega)
    if theta == 0:
        return np.eye(3)
    k = omega / theta
    K = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    return np.eye(3) + np.sin(theta) * K + (1 - np.cos(theta)) * (K @ K)


class TestExpLog:
    def test_exp_zero_is_identity(self):
        assert np.array_equal(so3_exp(np.zeros(3)), [1.0, 0.0, 0.0, 0.0])

    def test_exp_pi_about_x(self):
        q = so3_exp(np.array([np.pi, 0.0, 0.0]))
        np.testing.assert_allclose(q, [0.0, 1.0, 0.0, 0.0], atol=1e-9)

    def test_exp_matches_rodrigues(self):
        rng = make_rng(11)
        for _ in range(200):
            axis = rng.standard_normal(3)
            axis /= np.linalg.norm(axis)
            omega = axis * rng.uniform(1e-8, np.pi - 1e-8)
            np.testing.assert_allclose(
                quat_to_matrix(so3_exp(omega)), rodrigues_matrix(omega), atol=1e-9
            )

    def test_log_identity(self):
        assert np.array_equal(so3_log(np.array([1.0, 0, 0, 0])), np.zeros(3))

    def test_log_pi_about_y(self):
        np.testing.assert_allclose(
            so3_log(np.array([0.0, 0.0, 1.0, 0.0])), [0.0, np.pi, 0.0], atol=1e-9
        )

    def test_roundtrip_1000_seeded_tangents(self):
        rng = make_rng(7)
        worst = 0.0
        for _ in range(1000):
            axis = rng.standard_normal(3)
            axis /= np.linalg.norm(axis)
            omega = axis * rng.uniform(0.0, np.pi - 1e-3)
            err = np.linalg.norm(so3_log(so3_exp(omega)) - omega)
            worst = max(worst, err)
        assert worst < 1e-7

    def test_tiny_angle_branch(self):
        omega = np.array([3e-7, -2e-7, 1e-7])
        np.testing.assert_allclose(so3_log(so3_exp(omega)), omega, atol=1e-12)

    def test_unit_norm_preserved(self):
        rng = make_rng(3)
        for _ in range(100):
            q = so3_exp(rng.standard_normal(3))
            assert abs(np.linalg.norm(q) - 1.0) < 1e-9
            assert q[0] >= 0.0


class TestCanonicalization:
    def test_sign_flip(self):
        q = quat_canonical(np.array([-0.5, 0.5, 0.5, 0.5]))
        assert q[0] > 0

    def test_w_zero_tiebreak(self):
        q = quat_canonical(np.array([0.0, -1.0, 0.0, 0.0]))
        np.testing.assert_array_equal(q, [0.0, 1.0, 0.0, 0.0])

    def test_mul_conj_is_identity(self):
        rng = make_rng(5)
        for _ in range(50):
            q = quat_canonical(rng.standard_normal(4))
            np.testing.assert_allclose(quat_mul(q, quat_conj(q)), [1, 0, 0, 0], atol=1e-9)


class TestGeodesic:
    def test_t0_endpoint_exact(self):
        rng = make_rng(2)
        r0 = quat_canonical(rng.standard_normal(4))
        r1 = quat_canonical(rng.standard_normal(4))
        assert np.array_equal(geodesic_interp(r0, r1, 0.0), r0)

    def test_t1_endpoint(self):
        rng = make_rng(4)
        for _ in range(50):
            r0 = quat_canonical(rng.standard_normal(4))
            r1 = quat_canonical(rng.standard_normal(4))
            np.testing.assert_allclose(geodesic_interp(r0, r1, 1.0), r1, atol=1e-9)

    def test_halfway_halves_the_angle(self):
        r0 = np.array([1.0, 0, 0, 0])
        r1 = so3_exp(np.array([0, 0, np.pi]))
        mid = geodesic_interp(r0, r1, 0.5)
        np.testing.assert_allclose(mid, so3_exp(np.array([0, 0, np.pi / 2])), atol=1e-9)

    def test_constant_velocity_integration_reaches_target(self):
        # from any interior point, integrating the remaining-flow field
        # omega = log(r_t^-1 r1)/(1-t) with uniform Euler steps lands on r1
        rng = make_rng(9)
        for _ in range(20):
            r0 = quat_canonical(rng.standard_normal(4))
            r1 = quat_canonical(rng.standard_normal(4))
            t = rng.uniform(0.0, 0.9)
            steps = 64
            r = geodesic_interp(r0, r1, t)
            h = (1.0 - t) / steps
            for k in range(steps):
                tk = t + k * h
                omega = so3_log(quat_mul(quat_conj(r), r1)) / (1.0 - tk)
                r = quat_mul(r, so3_exp(h * omega))
            assert np.radians(relative_rotation_angle(r, r1)) < 1e-3


class TestNoiseSampling:
    def test_valid_pose_any_seed(self):
        for seed in range(20):
            p = sample_noise_pose(make_rng(seed))
            assert abs(np.linalg.norm(p.rot) - 1.0) < 1e-9

    def test_rotation_angle_density(self):
        # uniform SO(3): angle CDF is (theta - sin theta)/pi on [0, pi]
        rng = make_rng(123)
        n = 100_000
        angles = np.empty(n)
        for i in range(n):
            q = quat_canonical(rng.standard_normal(4))
            angles[i] = 2.0 * np.arccos(min(abs(q[0]), 1.0))
        angles.sort()
        cdf = (angles - np.sin(angles)) / np.pi
        emp = np.arange(1, n + 1) / n
        ks = max(np.max(np.abs(cdf - emp)), np.max(np.abs(cdf - (emp - 1.0 / n))))
        assert ks < 0.01

    def test_translation_moments(self):
        rng = make_rng(321)
        t = np.stack([sample_noise_pose(rng).trans for _ in range(100_000)])
        assert np.all(np.abs(t.mean(axis=0)) < 0.02)
        assert np.all(np.abs(t.var(axis=0) - 1.0) < 0.03)

    def test_determinism(self):
        a = [sample_noise_pose(make_rng(99)).as_array() for _ in range(1)]
        b = [sample_noise_pose(make_rng(99)).as_array() for _ in range(1)]
        np.testing.assert_array_equal(a, b)


class TestEulerStep:
    def test_zero_tangent_is_noop(self):
        p = Pose(so3_exp(np.array([0.3, 0.2, 0.1])), np.array([1.0, 2.0, 3.0]))
        q = euler_step(p, Tangent.zero(), 0.5)
        np.testing.assert_allclose(q.rot, p.rot, atol=1e-15)
        np.testing.assert_array_equal(q.trans, p.trans)

    def test_full_step_matches_exp(self):
        p = euler_step(Pose.identity(), Tangent(np.array([np.pi / 2, 0, 0]), np.zeros(3)), 1.0)
        np.testing.assert_allclose(p.rot, so3_exp(np.array([np.pi / 2, 0, 0])), atol=1e-12)

    def test_linear_translation_step(self):
        p = euler_step(Pose.identity(), Tangent(np.zeros(3), np.array([1.0, 2.0, 3.0])), 0.1)
        np.testing.assert_allclose(p.trans, [0.1, 0.2, 0.3], atol=1e-15)


class TestRelativeAngle:
    def test_same_rotation_is_zero(self):
        q = so3_exp(np.array([0.4, -0.1, 0.7]))
        assert relative_rotation_angle(q, q) == 0.0

    def test_ninety_degrees(self):
        rng = make_rng(6)
        for _ in range(10):
            axis = rng.standard_normal(3)
            axis /= np.linalg.norm(axis)
            q = so3_exp(axis * np.pi / 2)
            assert abs(relative_rotation_angle(np.array([1.0, 0, 0, 0]), q) - 90.0) < 1e-6

    def test_symmetry(self):
        rng = make_rng(8)
        q0 = quat_canonical(rng.standard_normal(4))
        q1 = quat_canonical(rng.standard_normal(4))
        assert relative_rotation_angle(q0, q1) == pytest.approx(
            relative_rotation_angle(q1, q0), abs=1e-12
        )


class TestPose:
    def test_compose_inverse_identity(self):
        rng = make_rng(17)
        for _ in range(50):
            p = sample_noise_pose(rng)
            ident = p.compose(p.inverse())
            np.testing.assert_allclose(ident.rot, [1, 0, 0, 0], atol=1e-9)
            np.testing.assert_allclose(ident.trans, 0.0, atol=1e-9)

    def test_apply_matches_composition(self):
        rng = make_rng(18)
        a, b = sample_noise_pose(rng), sample_noise_pose(rng)
        pts = rng.standard_normal((10, 3))
        np.testing.assert_allclose(a.compose(b).apply(pts), a.apply(b.apply(pts)), atol=1e-12)

    def test_array_roundtrip(self):
        p = sample_noise_pose(make_rng(19))
        q = Pose.from_array(p.as_array())
        np.testing.assert_array_equal(q.rot, p.rot)
        np.testing.assert_array_equal(q.trans, p.trans)
