"""Pinhole projection of point landmarks and cylinder silhouettes.

Lines in the image use the Hough normal form ``rho = u cos(phi) + v sin(phi)``
with ``phi`` in ``[0, pi)`` and signed ``rho``.  Angular differences between
lines are taken modulo ``pi``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (BehindCameraError, DegenerateAxisError, DegenerateViewError,
                     InvalidInputError, InvalidLineError)
from .se3 import RigidTransform

EPS_DEPTH = 1e-6  # mm


@dataclass(frozen=True)
class CameraModel:
    """Pinhole intrinsics plus the pose of this camera w.r.t. the reference camera.

    ``extrinsic`` maps reference-camera coordinates into this camera's frame.
    """

    fx: float
    fy: float
    cu: float
    cv: float
    width: int
    height: int
    extrinsic: RigidTransform = field(default_factory=RigidTransform.identity)

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise InvalidInputError("focal lengths must be positive")
        if not (self.width > 0 and self.height > 0):
            raise InvalidInputError("image size must be positive")

    @classmethod
    def from_fov(cls, width, height, fov_deg, extrinsic=None):
        """Square-pixel camera whose horizontal field of view is ``fov_deg``."""
        f = 0.5 * width / np.tan(np.deg2rad(fov_deg) / 2.0)
        return cls(f, f, width / 2.0, height / 2.0, width, height,
                   extrinsic if extrinsic is not None else RigidTransform.identity())

    @property
    def K(self):
        return np.array([[self.fx, 0.0, self.cu], [0.0, self.fy, self.cv], [0.0, 0.0, 1.0]])

    def reference_camera(self):
        return CameraModel(self.fx, self.fy, self.cu, self.cv, self.width, self.height)

    def in_image(self, uv):
        uv = np.asarray(uv)
        return ((uv[..., 0] >= 0) & (uv[..., 0] < self.width)
                & (uv[..., 1] >= 0) & (uv[..., 1] < self.height))


@dataclass(frozen=True)
class PointFeature:
    uv: np.ndarray
    confidence: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "uv", np.array(self.uv, dtype=float).reshape(2))
        if not 0.0 <= self.confidence <= 1.0:
            raise InvalidInputError("confidence outside [0, 1]")


@dataclass(frozen=True)
class EdgeFeature:
    rho: float
    phi: float

    def contains(self, uv, atol=1e-9):
        u, v = uv
        return abs(u * np.cos(self.phi) + v * np.sin(self.phi) - self.rho) <= atol


@dataclass(frozen=True)
class CylinderPrimitive:
    """Infinite cylinder of radius ``radius`` around a line fixed in ``link``."""

    radius: float
    direction: np.ndarray
    point: np.ndarray
    link: int

    def __post_init__(self):
        d = np.array(self.direction, dtype=float).reshape(3)
        n = np.linalg.norm(d)
        if n == 0:
            raise InvalidInputError("zero cylinder direction")
        d = d / n
        p = np.array(self.point, dtype=float).reshape(3)
        if self.radius <= 0:
            raise InvalidInputError("cylinder radius must be positive")
        object.__setattr__(self, "direction", d)
        object.__setattr__(self, "point", p)


def project_points(cam, points):
    """Project reference-camera points ``(..., 3)``.

    Returns ``(uv, in_front)``; ``uv`` is NaN where the depth is below
    ``EPS_DEPTH``.
    """
    P = cam.extrinsic.apply(np.asarray(points, dtype=float))
    z = P[..., 2]
    in_front = z > EPS_DEPTH
    zs = np.where(in_front, z, np.nan)
    uv = np.stack([cam.fx * P[..., 0] / zs + cam.cu, cam.fy * P[..., 1] / zs + cam.cv], axis=-1)
    return uv, in_front


def project_point(cam, point_in_camera):
    """Pixel location of a single point given in the reference camera frame."""
    uv, ok = project_points(cam, point_in_camera)
    if not ok:
        raise BehindCameraError("point is behind the camera")
    return PointFeature(uv, 1.0)


def normalize_lines(coeff_u, coeff_v, coeff_1):
    """Vectorised :func:`normalize_line`; returns ``(rho, phi, valid)``."""
    a = np.asarray(coeff_u, dtype=float)
    b = np.asarray(coeff_v, dtype=float)
    c = np.asarray(coeff_1, dtype=float)
    n = np.hypot(a, b)
    valid = n > 0
    ns = np.where(valid, n, 1.0)
    phi = np.arctan2(b, a)
    rho = -c / ns
    neg = phi < 0
    phi = np.where(neg, phi + np.pi, phi)
    rho = np.where(neg, -rho, rho)
    top = phi >= np.pi
    phi = np.where(top, phi - np.pi, phi)
    rho = np.where(top, -rho, rho)
    phi = phi + 0.0  # drop negative zero
    return rho, phi, valid


def normalize_line(coeff_u, coeff_v, coeff_1):
    """Hough normal form of the line ``coeff_u*u + coeff_v*v + coeff_1 = 0``."""
    rho, phi, valid = normalize_lines(coeff_u, coeff_v, coeff_1)
    if not valid:
        raise InvalidLineError("line normal is zero")
    return EdgeFeature(float(rho), float(phi))


def _silhouette_coefficients(d, p0, radius):
    """Unit-camera line coefficients of both silhouette lines.

    Returns ``(lines, C)`` where ``lines`` has shape ``(..., 2, 3)``.
    """
    nu = np.sum(d * p0, axis=-1)
    C = np.sum(p0 * p0, axis=-1) - nu * nu - radius * radius
    cross = np.cross(p0, d)  # (alpha, beta, kappa)
    foot = p0 - nu[..., None] * d
    sqC = np.sqrt(np.where(C > 0, C, 1.0))
    base = radius * foot / sqC[..., None]
    lines = np.stack([base - cross, base + cross], axis=-2)
    return lines, C


def cylinder_edges(cam, d, p0, radius):
    """Vectorised silhouette edges for directions/points ``(..., 3)``.

    Inputs are in the reference camera frame.  Returns ``(rho, phi, valid)``
    with ``rho``/``phi`` of shape ``(..., 2)`` ordered by ascending ``rho``
    and ``valid`` false wherever the camera centre is not outside the
    cylinder or a line degenerates.
    """
    R = cam.extrinsic.rotation
    d = np.asarray(d, dtype=float) @ R.T
    p0 = cam.extrinsic.apply(np.asarray(p0, dtype=float))
    lines, C = _silhouette_coefficients(d, p0, radius)
    A, B, Cc = lines[..., 0], lines[..., 1], lines[..., 2]
    cu_coef = A / cam.fx
    cv_coef = B / cam.fy
    c1 = Cc - A * cam.cu / cam.fx - B * cam.cv / cam.fy
    rho, phi, ok = normalize_lines(cu_coef, cv_coef, c1)
    valid = (C > 0) & np.all(ok, axis=-1)
    swap = rho[..., 0] > rho[..., 1]
    rho = np.where(swap[..., None], rho[..., ::-1], rho)
    phi = np.where(swap[..., None], phi[..., ::-1], phi)
    return rho, phi, valid


def project_cylinder_edges(cam, d_c, p0_c, radius):
    """Two silhouette lines of a cylinder whose axis is given in camera coordinates.

    Raises :class:`DegenerateViewError` when the camera centre is inside or on
    the cylinder and :class:`DegenerateAxisError` when a line degenerates.
    """
    d_c = np.asarray(d_c, dtype=float)
    d_c = d_c / np.linalg.norm(d_c)
    p0_c = np.asarray(p0_c, dtype=float)
    R = cam.extrinsic.rotation
    lines, C = _silhouette_coefficients(d_c @ R.T, cam.extrinsic.apply(p0_c), radius)
    if not C > 0:
        raise DegenerateViewError("camera centre is not outside the cylinder")
    if np.allclose(lines[..., :2], 0.0, atol=1e-12):
        raise DegenerateAxisError("silhouette line coefficients vanish")
    rho, phi, valid = cylinder_edges(cam, d_c, p0_c, radius)
    if not valid:
        raise DegenerateAxisError("silhouette line coefficients vanish")
    return EdgeFeature(float(rho[0]), float(phi[0])), EdgeFeature(float(rho[1]), float(phi[1]))


def line_in_image(cam, rho, phi):
    """True where the Hough line crosses the image rectangle."""
    rho = np.asarray(rho, dtype=float)
    phi = np.asarray(phi, dtype=float)
    cs, sn = np.cos(phi), np.sin(phi)
    corners = np.array([[0, 0], [cam.width, 0], [0, cam.height], [cam.width, cam.height]], float)
    s = corners[:, 0, None] * cs.ravel() + corners[:, 1, None] * sn.ravel() - rho.ravel()
    hit = (s.min(axis=0) <= 0) & (s.max(axis=0) >= 0)
    return hit.reshape(rho.shape)


def wrap_angle_pi(dphi):
    """Absolute angular difference between line directions, folded into ``[0, pi/2]``."""
    x = np.mod(np.asarray(dphi, dtype=float), np.pi)
    return np.minimum(x, np.pi - x)
