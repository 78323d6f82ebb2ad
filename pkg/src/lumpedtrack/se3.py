"""Rigid-body transforms, rotation exponential/logarithm and batched helpers.

Rotations are stored as 3x3 matrices; axis-angle vectors are used only at
the parameter boundary (particle states, configuration files).  Every
function that takes an axis-angle vector accepts a leading batch shape.
Units are millimetres and radians throughout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_SMALL_ANGLE = 1e-6


def hat(w):
    """Skew-symmetric matrix of ``w`` (shape ``(..., 3)`` -> ``(..., 3, 3)``)."""
    w = np.asarray(w, dtype=float)
    K = np.zeros(w.shape[:-1] + (3, 3))
    K[..., 0, 1] = -w[..., 2]
    K[..., 0, 2] = w[..., 1]
    K[..., 1, 0] = w[..., 2]
    K[..., 1, 2] = -w[..., 0]
    K[..., 2, 0] = -w[..., 1]
    K[..., 2, 1] = w[..., 0]
    return K


def vee(K):
    """Inverse of :func:`hat` for the antisymmetric part of ``K``."""
    K = np.asarray(K, dtype=float)
    return 0.5 * np.stack(
        [K[..., 2, 1] - K[..., 1, 2],
         K[..., 0, 2] - K[..., 2, 0],
         K[..., 1, 0] - K[..., 0, 1]], axis=-1)


def so3_exp(w):
    """Rodrigues formula, vectorised over leading dimensions."""
    w = np.asarray(w, dtype=float)
    theta2 = np.sum(w * w, axis=-1)
    theta = np.sqrt(theta2)
    small = theta < _SMALL_ANGLE
    safe = np.where(small, 1.0, theta)
    A = np.where(small, 1.0 - theta2 / 6.0, np.sin(safe) / safe)
    B = np.where(small, 0.5 - theta2 / 24.0, (1.0 - np.cos(safe)) / (safe * safe))
    K = hat(w)
    R = np.eye(3) + A[..., None, None] * K + B[..., None, None] * (K @ K)
    return R


def _canonical_sign(axis):
    # first nonzero component made non-negative
    for c in axis:
        if abs(c) > 1e-12:
            return axis if c > 0 else -axis
    return axis


def _so3_log_single(R):
    v = vee(R) * 2.0  # = 2 sin(theta) n
    s = 0.5 * np.linalg.norm(v)
    c = 0.5 * (np.trace(R) - 1.0)
    theta = np.arctan2(s, c)
    if theta < _SMALL_ANGLE:
        return 0.5 * v * (1.0 + theta * theta / 6.0)
    if c > -0.99:
        return theta / (2.0 * np.sin(theta)) * v
    # near pi: axis from the symmetric part, sign from the antisymmetric part
    S = 0.5 * (R + R.T) - c * np.eye(3)
    k = int(np.argmax(np.diag(S)))
    axis = S[:, k] / np.sqrt(max(S[k, k], 1e-300))
    axis /= np.linalg.norm(axis)
    d = float(axis @ v)
    if abs(d) > 1e-14:
        axis = axis if d > 0 else -axis
    else:
        axis = _canonical_sign(axis)
    return theta * axis


def so3_log(R):
    """Axis-angle vector of rotation matrix ``R`` with angle in ``[0, pi]``.

    At exactly ``pi`` the axis is ambiguous; the representative whose first
    nonzero component is non-negative is returned.
    """
    R = np.asarray(R, dtype=float)
    if R.ndim == 2:
        return _so3_log_single(R)
    flat = R.reshape(-1, 3, 3)
    out = np.array([_so3_log_single(M) for M in flat])
    return out.reshape(R.shape[:-2] + (3,))


def orthonormalize(R):
    """Project ``R`` onto SO(3) (nearest rotation in Frobenius norm)."""
    U, _, Vt = np.linalg.svd(R)
    D = np.eye(3)
    D[2, 2] = np.sign(np.linalg.det(U @ Vt))
    return U @ D @ Vt


def homogeneous(R, t):
    """Stack rotation(s) and translation(s) into 4x4 matrices."""
    R = np.asarray(R, dtype=float)
    t = np.asarray(t, dtype=float)
    shape = np.broadcast_shapes(R.shape[:-2], t.shape[:-1])
    T = np.zeros(shape + (4, 4))
    T[..., :3, :3] = R
    T[..., :3, 3] = t
    T[..., 3, 3] = 1.0
    return T


def pose_matrices(params):
    """6-vectors ``[w, b]`` of shape ``(..., 6)`` to 4x4 matrices."""
    params = np.asarray(params, dtype=float)
    return homogeneous(so3_exp(params[..., :3]), params[..., 3:6])


def invert_matrices(T):
    """Inverse of (batched) rigid 4x4 matrices."""
    R = T[..., :3, :3]
    Rt = np.swapaxes(R, -1, -2)
    t = T[..., :3, 3]
    return homogeneous(Rt, -np.einsum("...ij,...j->...i", Rt, t))


def transform_points(T, points):
    """Apply 4x4 transform(s) ``T`` to points ``(..., 3)``."""
    return (np.einsum("...ij,...j->...i", T[..., :3, :3], points)
            + T[..., :3, 3])


@dataclass(frozen=True)
class RigidTransform:
    """Element of SE(3): ``x -> rotation @ x + translation``."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = np.array(self.rotation, dtype=float).reshape(3, 3)
        t = np.array(self.translation, dtype=float).reshape(3)
        if not (np.all(np.isfinite(R)) and np.all(np.isfinite(t))):
            raise ValueError("non-finite transform")
        R.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls):
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, T, reorthonormalize=False):
        T = np.asarray(T, dtype=float)
        R = T[:3, :3]
        if reorthonormalize:
            R = orthonormalize(R)
        return cls(R, T[:3, 3])

    @classmethod
    def from_axis_angle(cls, w, b=(0.0, 0.0, 0.0)):
        return cls(so3_exp(np.asarray(w, dtype=float)), b)

    @property
    def matrix(self):
        return homogeneous(self.rotation, self.translation)

    def compose(self, other):
        return RigidTransform(self.rotation @ other.rotation,
                              self.rotation @ other.translation + self.translation)

    __matmul__ = compose

    def inverse(self):
        Rt = self.rotation.T
        return RigidTransform(Rt, -Rt @ self.translation)

    def apply(self, points):
        """Transform points of shape ``(3,)`` or ``(n, 3)``."""
        p = np.asarray(points, dtype=float)
        return p @ self.rotation.T + self.translation

    def as_axis_angle(self):
        return AxisAnglePose(so3_log(self.rotation), self.translation.copy())

    def orthonormalized(self):
        return RigidTransform(orthonormalize(self.rotation), self.translation)

    def allclose(self, other, atol=1e-9):
        return (np.allclose(self.rotation, other.rotation, atol=atol, rtol=0)
                and np.allclose(self.translation, other.translation, atol=atol, rtol=0))


@dataclass(frozen=True)
class AxisAnglePose:
    """Pose parameterised by an axis-angle vector ``w`` and translation ``b``."""

    w: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        w = np.array(self.w, dtype=float).reshape(3)
        b = np.array(self.b, dtype=float).reshape(3)
        w.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "b", b)

    @classmethod
    def identity(cls):
        return cls(np.zeros(3), np.zeros(3))

    @classmethod
    def from_vector(cls, v):
        v = np.asarray(v, dtype=float)
        return cls(v[:3], v[3:6])

    def as_vector(self):
        return np.concatenate([self.w, self.b])

    def to_transform(self):
        return RigidTransform.from_axis_angle(self.w, self.b)

    @classmethod
    def from_transform(cls, T):
        return T.as_axis_angle()


def pose_error(truth, estimate):
    """Translation and rotation error between two poses.

    Returns ``(eps_b, eps_w)``: the Euclidean distance between translations
    (mm) and the angle of ``R_truth @ R_estimate^-1`` (rad, in ``[0, pi]``).
    """
    eps_b = float(np.linalg.norm(truth.translation - estimate.translation))
    eps_w = float(np.linalg.norm(so3_log(truth.rotation @ estimate.rotation.T)))
    return eps_b, eps_w


def rotation_x(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rotation_z(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def look_at(eye, target, up=(0.0, 0.0, 1.0)):
    """Camera pose (camera-to-world) with +z toward ``target`` and +y down.

    Returns the transform mapping camera coordinates to world coordinates.
    """
    eye = np.asarray(eye, dtype=float)
    z = np.asarray(target, dtype=float) - eye
    z /= np.linalg.norm(z)
    up = np.asarray(up, dtype=float)
    x = np.cross(z, up)
    if np.linalg.norm(x) < 1e-9:
        x = np.cross(z, [1.0, 0.0, 0.0])
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    return RigidTransform(np.column_stack([x, y, z]), eye)


def quat_multiply(q1, q2):
    """Hamilton product of quaternions ``(w, x, y, z)``."""
    w1, x1, y1, z1 = q1
    w2, x2, y2, z2 = q2
    return np.array([
        w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
        w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
        w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
        w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
    ])


def quat_from_axis_angle(w):
    w = np.asarray(w, dtype=float)
    theta = np.linalg.norm(w)
    if theta < 1e-15:
        return np.array([1.0, 0.0, 0.0, 0.0])
    return np.concatenate([[np.cos(theta / 2)], np.sin(theta / 2) * w / theta])


def quat_to_matrix(q):
    w, x, y, z = np.asarray(q, dtype=float) / np.linalg.norm(q)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


def quat_from_matrix(R):
    return quat_from_axis_angle(so3_log(R))
