import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lumpedtrack.camera import (CameraModel, CylinderPrimitive, EdgeFeature, PointFeature,
                                cylinder_edges, line_in_image, normalize_line, normalize_lines,
                                project_cylinder_edges, project_point, project_points,
                                wrap_angle_pi)
from lumpedtrack.errors import (BehindCameraError, DegenerateViewError, InvalidInputError,
                                InvalidLineError)
from lumpedtrack.se3 import RigidTransform

from conftest import random_transform
from oracles import brute_force_silhouette, random_visible_cylinder, same_line

CAM = CameraModel(1000.0, 1000.0, 960.0, 540.0, 1920, 1080)


def test_camera_validation():
    with pytest.raises(InvalidInputError):
        CameraModel(0, 1, 0, 0, 10, 10)
    with pytest.raises(InvalidInputError):
        CameraModel(1, 1, 0, 0, 10, 0)
    with pytest.raises(InvalidInputError):
        PointFeature((0, 0), 1.5)
    with pytest.raises(InvalidInputError):
        CylinderPrimitive(0.0, (0, 0, 1), (0, 0, 0), 1)


def test_project_point_examples():
    assert np.allclose(project_point(CAM, (0, 0, 100)).uv, (960, 540))
    f = project_point(CAM, (1, 0, 100))
    assert np.allclose(f.uv, (970, 540)) and f.confidence == 1.0
    with pytest.raises(BehindCameraError):
        project_point(CAM, (0, 0, -5))
    with pytest.raises(BehindCameraError):
        project_point(CAM, (0, 0, 1e-7))


def test_project_commutes_with_extrinsic(rng):
    E = random_transform(rng, angle=0.2, scale=5)
    cam = CameraModel(800, 820, 300, 200, 640, 480, E)
    p = np.array([3.0, -4.0, 120.0])
    assert np.allclose(project_point(cam, p).uv, project_point(cam.reference_camera(), E.apply(p)).uv)


def test_project_points_marks_behind():
    uv, front = project_points(CAM, np.array([[0, 0, 10], [0, 0, -10]]))
    assert front.tolist() == [True, False]
    assert np.isnan(uv[1]).all()


def test_from_fov():
    cam = CameraModel.from_fov(540, 432, 60.0)
    assert np.isclose(cam.fx, 270 / np.tan(np.pi / 6))
    assert (cam.cu, cam.cv) == (270, 216)


def test_normalize_line_examples():
    assert normalize_line(1, 0, -100) == EdgeFeature(100.0, 0.0)
    l = normalize_line(0, 1, -50)
    assert np.isclose(l.rho, 50) and np.isclose(l.phi, np.pi / 2)
    l = normalize_line(-1, 0, 100)
    assert np.isclose(l.rho, 100) and l.phi == 0.0
    with pytest.raises(InvalidLineError):
        normalize_line(0, 0, 1)


@settings(max_examples=200)
@given(st.floats(-10, 10), st.floats(-10, 10), st.floats(-500, 500))
def test_normalize_line_preserves_points_and_is_idempotent(a, b, c):
    if np.hypot(a, b) < 1e-3:
        return
    l = normalize_line(a, b, c)
    assert 0 <= l.phi < np.pi
    # a point on the input line
    u0 = np.array([a, b]) * (-c) / (a * a + b * b)
    assert l.contains(u0, atol=1e-9 * max(1.0, abs(c)))
    l2 = normalize_line(np.cos(l.phi), np.sin(l.phi), -l.rho)
    assert np.isclose(l2.rho, l.rho) and np.isclose(l2.phi, l.phi)


def test_cylinder_edges_worked_example():
    l1, l2 = project_cylinder_edges(CAM, (0, 1, 0), (0, 0, 100), 5.0)
    X = 5.0 / np.sqrt(100 ** 2 - 25)
    assert np.isclose(X, 0.050063, atol=1e-6)
    assert l1.phi == 0.0 and l2.phi == 0.0
    assert np.isclose(l1.rho, 960 - 1000 * X, atol=1e-9)
    assert np.isclose(l2.rho, 960 + 1000 * X, atol=1e-9)


def test_cylinder_coaxial_is_degenerate():
    with pytest.raises(DegenerateViewError):
        project_cylinder_edges(CAM, (0, 0, 1), (0, 0, 100), 5.0)
    _, _, valid = cylinder_edges(CAM, np.array([0, 0, 1.0]), np.array([0, 0, 100.0]), 5.0)
    assert not valid


def test_cylinder_mirror_symmetry(rng):
    cam = CameraModel(1000, 1000, 0.0, 0.0, 100, 100)
    for _ in range(20):
        d, p0, r = random_visible_cylinder(rng)
        a = project_cylinder_edges(cam, d, p0, r)
        M = np.diag([-1.0, 1, 1])
        b = project_cylinder_edges(cam, M @ d, M @ p0, r)
        # mirroring u about cu = 0 maps (rho, phi) to (rho, pi - phi)
        for e in a:
            m = (e.rho, np.pi - e.phi)
            dr, dp = min((same_line(m, (f.rho, f.phi)) for f in b), key=lambda x: x[0])
            assert dr < 1e-6 and dp < 1e-9


def test_cylinder_matches_brute_force(rng):
    for _ in range(40):
        d, p0, r = random_visible_cylinder(rng)
        got = project_cylinder_edges(CAM, d, p0, r)
        ref = brute_force_silhouette(CAM.fx, CAM.fy, CAM.cu, CAM.cv, d, p0, r)
        assert len(ref) == 2
        for e in got:
            best = min((same_line((e.rho, e.phi), l) for l in ref), key=lambda x: x[0])
            assert best[0] < 1e-3 and best[1] < 1e-5


def test_surface_points_lie_between_edges(rng):
    for _ in range(10):
        d, p0, r = random_visible_cylinder(rng)
        l1, l2 = project_cylinder_edges(CAM, d, p0, r)
        e1 = np.cross(d, [1.0, 0, 0])
        e1 /= np.linalg.norm(e1)
        e2 = np.cross(d, e1)
        t = rng.uniform(0, 2 * np.pi, 500)
        s = rng.uniform(-5, 5, 500)
        pts = p0 + r * (np.cos(t)[:, None] * e1 + np.sin(t)[:, None] * e2) + s[:, None] * d
        uv, _ = project_points(CAM, pts)

        def side(l):
            return uv[:, 0] * np.cos(l.phi) + uv[:, 1] * np.sin(l.phi) - l.rho

        s1, s2 = side(l1), side(l2)
        # the two lines bound the silhouette: each point is on the inner side of both
        m1 = np.median(s1)
        m2 = np.median(s2)
        assert np.all(s1 * np.sign(m1) >= -1e-6) and np.all(s2 * np.sign(m2) >= -1e-6)


def test_cylinder_edges_stereo_extrinsic(rng):
    E = RigidTransform(np.eye(3), [-5.0, 0, 0])
    cam = CameraModel(1000, 1000, 960, 540, 1920, 1080, E)
    d, p0, r = np.array([0, 1.0, 0]), np.array([0, 0, 100.0]), 5.0
    a = project_cylinder_edges(cam, d, p0, r)
    b = project_cylinder_edges(CAM, d, E.apply(p0), r)
    assert np.allclose([a[0].rho, a[1].rho], [b[0].rho, b[1].rho])


def test_line_in_image():
    cam = CameraModel(1, 1, 0, 0, 100, 50)
    assert line_in_image(cam, 10.0, 0.0)
    assert not line_in_image(cam, 150.0, 0.0)
    assert not line_in_image(cam, -5.0, np.pi / 2)


def test_wrap_angle_pi():
    assert np.isclose(wrap_angle_pi(np.pi - 0.01), 0.01)
    assert np.isclose(wrap_angle_pi(-0.2), 0.2)


def test_normalize_lines_vectorised_matches_scalar(rng):
    a, b, c = rng.normal(size=(3, 50))
    rho, phi, ok = normalize_lines(a, b, c)
    for k in range(50):
        l = normalize_line(a[k], b[k], c[k])
        assert np.isclose(rho[k], l.rho) and np.isclose(phi[k], l.phi)


def test_cylinder_mirror_worked_example():
    # axis parallel to v, shifted in x: rho mirrors about cu, phi stays 0
    a = project_cylinder_edges(CAM, (0, 1, 0), (20, 0, 100), 5.0)
    b = project_cylinder_edges(CAM, (0, 1, 0), (-20, 0, 100), 5.0)
    assert np.allclose(sorted(960 - e.rho for e in a), sorted(e.rho - 960 for e in b))
    assert all(e.phi == 0.0 for e in a + b)
