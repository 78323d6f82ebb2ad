import numpy as np
import pytest

from lumpedtrack.kinematics import random_chain
from lumpedtrack.se3 import RigidTransform, so3_exp


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_transform(rng, angle=np.pi, scale=50.0):
    w = rng.normal(size=3)
    w *= rng.uniform(0, angle) / np.linalg.norm(w)
    return RigidTransform(so3_exp(w), rng.uniform(-scale, scale, 3))


def dense_mdh(alpha, a, theta, d):
    """Plain 4x4 product T_x(alpha, a) @ T_z(theta, d), written out by hand."""
    ca, sa = np.cos(alpha), np.sin(alpha)
    ct, st = np.cos(theta), np.sin(theta)
    Tx = np.array([[1, 0, 0, a], [0, ca, -sa, 0], [0, sa, ca, 0], [0, 0, 0, 1]], float)
    Tz = np.array([[ct, -st, 0, 0], [st, ct, 0, 0], [0, 0, 1, d], [0, 0, 0, 1]], float)
    return Tx @ Tz


def dense_fk(chain, q, upto=None):
    upto = chain.n_j if upto is None else upto
    T = np.eye(4)
    for j, qi in zip(chain.joints[:upto], q[:upto]):
        if j.kind == "prismatic":
            T = T @ dense_mdh(j.alpha, j.a, j.theta_offset, j.d_offset + qi)
        else:
            T = T @ dense_mdh(j.alpha, j.a, j.theta_offset + qi, j.d_offset)
    return T


def make_chain(rng, n, n_b=None):
    return random_chain(rng, n, n_b)


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import LINES
    if LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for n in sorted(LINES):
            terminalreporter.write_line(LINES[n])
