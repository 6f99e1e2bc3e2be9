"""Exact SO(3)/SE(3) math on unit quaternions.

Quaternions are numpy float64 arrays ``[w, x, y, z]`` kept unit-norm and
sign-canonical (w >= 0, ties broken by the first nonzero component). Rotation
and translation are handled as decoupled flows: geodesics on SO(3) via
exp/log, straight lines on R^3.

Convention: base-pointed maps use left translation,
``geodesic_interp(r0, r1, t) = r0 * exp(t * log(r0^-1 * r1))``, so a pose held
at identity is trivially stationary under its own flow.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_TAYLOR_EPS = 1e-6


def make_rng(seed: int) -> np.random.Generator:
    """Deterministic PCG64 stream; identical seed gives an identical stream."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def derive_rng(seed: int, *keys) -> np.random.Generator:
    """Independent substream keyed by (seed, *keys); keys may be str or int."""
    ints = [seed & 0xFFFFFFFFFFFFFFFF]
    for k in keys:
        if isinstance(k, str):
            ints.extend(k.encode("utf-8"))
        else:
            ints.append(int(k) & 0xFFFFFFFFFFFFFFFF)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(ints)))


# -- quaternions --------------------------------------------------------------


def quat_identity() -> np.ndarray:
    return np.array([1.0, 0.0, 0.0, 0.0])


def quat_canonical(q: np.ndarray) -> np.ndarray:
    """Normalize and resolve the double cover: w >= 0, ties by first nonzero."""
    q = np.asarray(q, dtype=np.float64)
    n = float(np.linalg.norm(q))
    if n == 0.0 or not np.isfinite(n):
        raise ValueError("cannot canonicalize zero/non-finite quaternion")
    if abs(n - 1.0) > 1e-13:  # keep already-unit inputs bit-stable
        q = q / n
    if q[0] < 0.0:
        q = -q
    elif q[0] == 0.0:
        for c in q[1:]:
            if c != 0.0:
                if c < 0.0:
                    q = -q
                break
    return q


def quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return quat_canonical(
        np.array(
            [
                aw * bw - ax * bx - ay * by - az * bz,
                aw * bx + ax * bw + ay * bz - az * by,
                aw * by - ax * bz + ay * bw + az * bx,
                aw * bz + ax * by - ay * bx + az * bw,
            ]
        )
    )


def quat_conj(q: np.ndarray) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def quat_rotate(q: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Rotate an (N, 3) array (or a single 3-vector) by q."""
    pts = np.asarray(pts, dtype=np.float64)
    return pts @ quat_to_matrix(q).T


def so3_exp(omega) -> np.ndarray:
    """Exponential map so(3) -> SO(3), returning a canonical unit quaternion."""
    omega = np.asarray(omega, dtype=np.float64)
    theta = float(np.linalg.norm(omega))
    if theta < _TAYLOR_EPS:
        # sin(t/2)/t = 1/2 - t^2/48 + O(t^4)
        s = 0.5 - theta * theta / 48.0
    else:
        s = np.sin(0.5 * theta) / theta
    return quat_canonical(np.array([np.cos(0.5 * theta), *(s * omega)]))


def so3_log(q: np.ndarray) -> np.ndarray:
    """Principal axis-angle vector of q, with ||result|| in [0, pi].

    atan2 keeps the near-pi branch stable; only the near-identity branch
    needs a Taylor fallback for the axis recovery.
    """
    q = quat_canonical(q)
    w = float(q[0])
    v = q[1:]
    s = float(np.linalg.norm(v))
    if s < _TAYLOR_EPS:
        # theta/s = 2/w * (1 - s^2/(3 w^2)) + O(s^4); w ~ 1 here
        scale = 2.0 / w - 2.0 * s * s / (3.0 * w**3)
    else:
        scale = 2.0 * np.arctan2(s, w) / s
    return scale * v


def geodesic_interp(r0: np.ndarray, r1: np.ndarray, t: float) -> np.ndarray:
    """Point at parameter t on the SO(3) geodesic from r0 to r1."""
    if t == 0.0:
        return quat_canonical(r0)
    rel = quat_mul(quat_conj(r0), r1)
    return quat_mul(r0, so3_exp(t * so3_log(rel)))


def relative_rotation_angle(q0: np.ndarray, q1: np.ndarray) -> float:
    """Geodesic angle between two rotations, in degrees, in [0, 180].

    atan2 on the relative quaternion is exact at 0 for identical inputs and
    avoids the acos precision cliff near alignment.
    """
    a, b = quat_canonical(q0), quat_canonical(q1)
    if np.array_equal(a, b):
        return 0.0
    rel = quat_mul(quat_conj(a), b)
    s = float(np.linalg.norm(rel[1:]))
    return float(np.degrees(2.0 * np.arctan2(s, abs(float(rel[0])))))


# -- SE(3) poses ---------------------------------------------------------------


@dataclass(frozen=True)
class Pose:
    """Rigid motion: x -> rot * x + trans. rot is a canonical unit quaternion."""

    rot: np.ndarray = field(default_factory=quat_identity)
    trans: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "rot", quat_canonical(self.rot))
        object.__setattr__(self, "trans", np.asarray(self.trans, dtype=np.float64).reshape(3).copy())

    @staticmethod
    def identity() -> "Pose":
        return Pose()

    def is_identity(self) -> bool:
        return bool(np.all(self.rot == quat_identity()) and np.all(self.trans == 0.0))

    def apply(self, pts: np.ndarray) -> np.ndarray:
        return quat_rotate(self.rot, pts) + self.trans

    def apply_normals(self, normals: np.ndarray) -> np.ndarray:
        return quat_rotate(self.rot, normals)

    def compose(self, other: "Pose") -> "Pose":
        """self after other: (self @ other)(x) = self(other(x))."""
        return Pose(quat_mul(self.rot, other.rot), quat_rotate(self.rot, other.trans) + self.trans)

    def inverse(self) -> "Pose":
        ri = quat_conj(self.rot)
        return Pose(ri, -quat_rotate(ri, self.trans))

    def as_array(self) -> np.ndarray:
        """7 floats: quaternion wxyz then translation xyz."""
        return np.concatenate([self.rot, self.trans])

    @staticmethod
    def from_array(a) -> "Pose":
        a = np.asarray(a, dtype=np.float64).reshape(7)
        return Pose(a[:4], a[4:])


@dataclass(frozen=True)
class Tangent:
    """Body-frame velocity: omega in so(3) coordinates, vel in R^3."""

    omega: np.ndarray
    vel: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "omega", np.asarray(self.omega, dtype=np.float64).reshape(3).copy())
        object.__setattr__(self, "vel", np.asarray(self.vel, dtype=np.float64).reshape(3).copy())

    @staticmethod
    def zero() -> "Tangent":
        return Tangent(np.zeros(3), np.zeros(3))

    def norm(self) -> float:
        return float(np.sqrt(np.dot(self.omega, self.omega) + np.dot(self.vel, self.vel)))


def sample_uniform_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform on SO(3) via a normalized 4-dimensional Gaussian."""
    return quat_canonical(rng.standard_normal(4))


def sample_noise_pose(rng: np.random.Generator) -> Pose:
    """Draw from the inference-time noise distribution: uniform rotation,
    i.i.d. standard normal translation per axis."""
    rot = sample_uniform_rotation(rng)
    return Pose(rot, rng.standard_normal(3))


def euler_step(pose: Pose, v: Tangent, h: float) -> Pose:
    """First-order manifold step: rot <- rot * exp(h*omega), trans <- trans + h*vel."""
    return Pose(quat_mul(pose.rot, so3_exp(h * v.omega)), pose.trans + h * v.vel)
