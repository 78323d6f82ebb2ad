"""Modified Denavit-Hartenberg kinematics and the Lumped Error constructions.

A joint transform is ``T_x(alpha, a) @ T_z(theta, d)``; the joint variable
is added to ``theta`` for revolute joints and to ``d`` for prismatic ones.
Errors of the joints ``1..n_b`` (whose preceding links never appear in the
image) cannot be told apart from a base-to-camera calibration error, so they
are folded together into one rigid transform, the *lump*.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .camera import CylinderPrimitive
from .errors import InvalidInputError
from .se3 import AxisAnglePose, RigidTransform, homogeneous, rotation_x, so3_log

REVOLUTE = "revolute"
PRISMATIC = "prismatic"


@dataclass(frozen=True)
class MDHJoint:
    alpha: float
    a: float
    theta_offset: float = 0.0
    d_offset: float = 0.0
    kind: str = REVOLUTE

    def __post_init__(self):
        if self.kind not in (REVOLUTE, PRISMATIC):
            raise InvalidInputError(f"unknown joint kind {self.kind!r}")
        for name in ("alpha", "a", "theta_offset", "d_offset"):
            v = float(getattr(self, name))
            if not np.isfinite(v):
                raise InvalidInputError(f"non-finite {name}")
            object.__setattr__(self, name, v)

    @property
    def is_prismatic(self):
        return self.kind == PRISMATIC

    def tx_matrix(self):
        return homogeneous(rotation_x(self.alpha), [self.a, 0.0, 0.0])


@dataclass(frozen=True)
class ToolPoint:
    link: int
    position: np.ndarray

    def __post_init__(self):
        p = np.array(self.position, dtype=float).reshape(3)
        p.setflags(write=False)
        object.__setattr__(self, "position", p)


@dataclass(frozen=True)
class KinematicChain:
    """Serial chain of MDH joints.

    ``n_b`` is the last joint whose preceding links never appear in the
    camera image.  ``ee_link`` selects the link frame treated as the
    end-effector (defaults to the last link).
    """

    joints: tuple
    n_b: int = 0
    tool_points: tuple = ()
    cylinders: tuple = ()
    ee_link: int | None = None
    name: str = "chain"

    def __post_init__(self):
        object.__setattr__(self, "joints", tuple(self.joints))
        object.__setattr__(self, "tool_points", tuple(
            tp if isinstance(tp, ToolPoint) else ToolPoint(*tp) for tp in self.tool_points))
        object.__setattr__(self, "cylinders", tuple(self.cylinders))
        n = len(self.joints)
        if not 0 <= self.n_b <= n:
            raise InvalidInputError(f"n_b={self.n_b} outside [0, {n}]")
        for tp in self.tool_points:
            if not 1 <= tp.link <= n:
                raise InvalidInputError(f"tool point link {tp.link} outside [1, {n}]")
        for cyl in self.cylinders:
            if not 1 <= cyl.link <= n:
                raise InvalidInputError(f"cylinder link {cyl.link} outside [1, {n}]")
        if self.ee_link is None:
            object.__setattr__(self, "ee_link", n)
        elif not 0 <= self.ee_link <= n:
            raise InvalidInputError(f"ee_link {self.ee_link} outside [0, {n}]")

    @property
    def n_j(self):
        return len(self.joints)

    @property
    def n_points(self):
        return len(self.tool_points)

    @property
    def prismatic_mask(self):
        return np.array([j.is_prismatic for j in self.joints], dtype=bool)

    def with_n_b(self, n_b):
        return KinematicChain(self.joints, n_b, self.tool_points, self.cylinders,
                              self.ee_link, self.name)

    def check_q(self, q):
        q = np.asarray(q, dtype=float)
        if q.shape[-1] != self.n_j:
            raise InvalidInputError(f"joint vector length {q.shape[-1]} != n_j={self.n_j}")
        return q


def _tz_matrix(theta, d):
    theta = np.asarray(theta, dtype=float)
    d = np.asarray(d, dtype=float)
    shape = np.broadcast_shapes(theta.shape, d.shape)
    T = np.zeros(shape + (4, 4))
    c, s = np.cos(theta), np.sin(theta)
    T[..., 0, 0] = c
    T[..., 0, 1] = -s
    T[..., 1, 0] = s
    T[..., 1, 1] = c
    T[..., 2, 2] = 1.0
    T[..., 2, 3] = d
    T[..., 3, 3] = 1.0
    return T


def mdh_matrix(joint, q):
    """4x4 joint transform(s); ``q`` may be an array of any shape."""
    q = np.asarray(q, dtype=float)
    if not np.all(np.isfinite(q)):
        raise InvalidInputError("non-finite joint value")
    if joint.is_prismatic:
        Tz = _tz_matrix(np.full(q.shape, joint.theta_offset), joint.d_offset + q)
    else:
        Tz = _tz_matrix(joint.theta_offset + q, np.full(q.shape, joint.d_offset))
    return joint.tx_matrix() @ Tz


def mdh_transform(joint, q):
    """Joint transform ``T_x(alpha, a) T_z(theta, d)`` at joint value ``q``."""
    q = float(q)
    if not np.isfinite(q):
        raise InvalidInputError("non-finite joint value")
    return RigidTransform.from_matrix(mdh_matrix(joint, q))


def forward_kinematics(chain, q, up_to=None):
    """Pose of link ``up_to`` in the base frame (identity for ``up_to=0``)."""
    q = chain.check_q(q)
    j = chain.n_j if up_to is None else up_to
    if not 0 <= j <= chain.n_j:
        raise InvalidInputError(f"link index {j} outside [0, {chain.n_j}]")
    T = np.eye(4)
    for i in range(j):
        T = T @ mdh_matrix(chain.joints[i], q[i])
    return RigidTransform.from_matrix(T)


def link_matrices(chain, q, start=0, stop=None):
    """Cumulative products ``prod_{i=start+1..k} T_i`` for ``k = start..stop``.

    ``q`` has shape ``(..., n_j)``; returns an array ``(stop-start+1, ..., 4, 4)``
    whose first entry is the identity.
    """
    q = np.asarray(q, dtype=float)
    stop = chain.n_j if stop is None else stop
    batch = q.shape[:-1]
    out = np.empty((stop - start + 1,) + batch + (4, 4))
    T = np.broadcast_to(np.eye(4), batch + (4, 4)).copy()
    out[0] = T
    for k, i in enumerate(range(start, stop), start=1):
        T = T @ mdh_matrix(chain.joints[i], q[..., i])
        out[k] = T
    return out


def joint_error_factor(joint, omega):
    """Left factor that moves a joint error out of the joint transform.

    ``mdh_transform(joint, q + omega) == joint_error_factor(joint, omega) @
    mdh_transform(joint, q)`` for every ``q``.
    """
    omega = float(omega)
    if not np.isfinite(omega):
        raise InvalidInputError("non-finite joint error")
    Tx = joint.tx_matrix()
    if joint.is_prismatic:
        Tz = _tz_matrix(0.0, omega)
    else:
        Tz = _tz_matrix(omega, 0.0)
    Tx_inv = homogeneous(Tx[:3, :3].T, -Tx[:3, :3].T @ Tx[:3, 3])
    return RigidTransform.from_matrix(Tx @ Tz @ Tx_inv)


def analytical_lump(chain, q_meas, e, beta):
    """Transform absorbing the un-kept part of the first ``n_b`` joint errors.

    Builds the telescoping product

        prod_k  P_{k-1} T_k((1 - beta_k) e_k) P_{k-1}^{-1},
        P_{k-1} = prod_{i<k} T_i(q_i + beta_i e_i),

    so that ``prod_i T_i(q_i + e_i) == lump @ prod_i T_i(q_i + beta_i e_i)``
    over ``i = 1..n_b``.
    """
    q_meas = chain.check_q(q_meas)
    e = chain.check_q(e)
    beta = np.asarray(beta, dtype=float).reshape(-1)
    if beta.shape[0] != chain.n_b:
        raise InvalidInputError(f"beta length {beta.shape[0]} != n_b={chain.n_b}")
    lump = np.eye(4)
    P = np.eye(4)
    for k in range(chain.n_b):
        joint = chain.joints[k]
        E = joint_error_factor(joint, (1.0 - beta[k]) * e[k]).matrix
        P_inv = homogeneous(P[:3, :3].T, -P[:3, :3].T @ P[:3, 3])
        lump = lump @ P @ E @ P_inv
        P = P @ mdh_matrix(joint, q_meas[k] + beta[k] * e[k])
    return RigidTransform.from_matrix(lump)


def right_hand_lump(chain, q_meas, left_lump):
    """Conjugate a base-side lump past the first ``n_b`` measured joint transforms."""
    F = forward_kinematics(chain, q_meas, chain.n_b)
    return F.inverse() @ left_lump @ F


def eye_in_hand_lump(calib, camera_lump, tool_lump):
    """Single unknown pose replacing both camera-arm and tool lumps.

    ``calib`` is the calibrated base-to-base transform; ``camera_lump`` and
    ``tool_lump`` are :class:`AxisAnglePose` values.  Returns
    ``calib^-1 @ camera_lump^-1 @ calib @ tool_lump`` as an AxisAnglePose.
    """
    Lc = camera_lump.to_transform() if isinstance(camera_lump, AxisAnglePose) else camera_lump
    L = tool_lump.to_transform() if isinstance(tool_lump, AxisAnglePose) else tool_lump
    return (calib.inverse() @ Lc.inverse() @ calib @ L).as_axis_angle()


def geometric_jacobian(chain, q, link=None, point=(0.0, 0.0, 0.0)):
    """6 x n_j Jacobian ``[v; omega]`` of a point fixed in ``link``."""
    q = chain.check_q(q)
    link = chain.ee_link if link is None else link
    frames = link_matrices(chain, q, 0, link)
    p = frames[-1][:3, :3] @ np.asarray(point, dtype=float) + frames[-1][:3, 3]
    J = np.zeros((6, chain.n_j))
    for i in range(link):
        Ti = frames[i + 1]
        z = Ti[:3, 2]
        if chain.joints[i].is_prismatic:
            J[:3, i] = z
        else:
            J[:3, i] = np.cross(z, p - Ti[:3, 3])
            J[3:, i] = z
    return J


def solve_ik(chain, q0, target_position, target_rotation=None, active=None,
             damping=1.0, iterations=50, tol=1e-6, rotation_weight=50.0):
    """Damped least-squares inverse kinematics for the end-effector frame.

    Only joints flagged in ``active`` move.  Orientation residuals are scaled
    by ``rotation_weight`` (mm per rad) to balance them against positions.
    Returns the joint vector reached after at most ``iterations`` steps.
    """
    q = chain.check_q(q0).astype(float).copy()
    active = np.ones(chain.n_j, bool) if active is None else np.asarray(active, bool)
    target_position = np.asarray(target_position, dtype=float)
    for _ in range(iterations):
        T = forward_kinematics(chain, q, chain.ee_link)
        err = target_position - T.translation
        J = geometric_jacobian(chain, q)
        if target_rotation is not None:
            err_r = so3_log(np.asarray(target_rotation) @ T.rotation.T)
            err = np.concatenate([err, rotation_weight * err_r])
            J = np.vstack([J[:3], rotation_weight * J[3:]])
        else:
            J = J[:3]
        if np.linalg.norm(err) < tol:
            break
        Ja = J[:, active]
        dq = Ja.T @ np.linalg.solve(Ja @ Ja.T + damping ** 2 * np.eye(Ja.shape[0]), err)
        q[active] += dq
    return q


def lump_family(chain, q_meas, e, beta, base_error):
    """Alternative (base error, joint error) pair producing identical observations.

    Given true joint errors ``e`` and base error ``base_error`` and a weight
    vector ``beta`` over the first ``n_b`` joints, returns
    ``(base_error @ lump_beta, e_beta)`` with ``e_beta[:n_b] = beta * e[:n_b]``.
    Composing either pair through the chain yields the same poses for every
    link after ``n_b``.
    """
    e = chain.check_q(e)
    lump = analytical_lump(chain, q_meas, e, beta)
    e_beta = e.copy()
    e_beta[:chain.n_b] = np.asarray(beta) * e[:chain.n_b]
    return base_error @ lump, e_beta


def random_chain(rng, n_joints, n_b=None, prismatic_prob=0.3):
    """Random MDH chain used by property tests and the identity suite."""
    joints = []
    for _ in range(n_joints):
        kind = PRISMATIC if rng.random() < prismatic_prob else REVOLUTE
        joints.append(MDHJoint(alpha=rng.uniform(-np.pi, np.pi), a=rng.uniform(-50, 50),
                               theta_offset=rng.uniform(-np.pi, np.pi),
                               d_offset=rng.uniform(-50, 50), kind=kind))
    n_b = int(rng.integers(0, n_joints + 1)) if n_b is None else n_b
    points = [ToolPoint(int(rng.integers(max(n_b, 1), n_joints + 1)), rng.uniform(-20, 20, 3))
              for _ in range(3)]
    return KinematicChain(tuple(joints), n_b, tuple(points))


def random_joint_values(rng, chain, scale_rev=np.pi, scale_pris=50.0):
    mask = chain.prismatic_mask
    return np.where(mask, rng.uniform(-scale_pris, scale_pris, chain.n_j),
                    rng.uniform(-scale_rev, scale_rev, chain.n_j))


__all__ = [
    "MDHJoint", "ToolPoint", "KinematicChain", "REVOLUTE", "PRISMATIC",
    "mdh_transform", "mdh_matrix", "forward_kinematics", "link_matrices",
    "joint_error_factor", "analytical_lump", "right_hand_lump", "eye_in_hand_lump",
    "geometric_jacobian", "solve_ik", "lump_family", "random_chain", "random_joint_values",
    "CylinderPrimitive",
]
