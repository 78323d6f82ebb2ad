"""Why the base calibration and the hidden joint errors cannot be told apart.

Draws one set of true errors for the surgical tool, then builds a family of
alternative explanations that move part of each hidden joint error into the
base transform.  Every member projects the tool markers to the same pixels,
so no amount of image data can pick one.  The lumped filter therefore
estimates a single transform instead.

Run:  python demos/observational_equivalence.py
"""

import numpy as np

from lumpedtrack import presets
from lumpedtrack.camera import project_points
from lumpedtrack.kinematics import forward_kinematics, lump_family
from lumpedtrack.se3 import RigidTransform


def marker_pixels(scene, base_error, q):
    chain = scene.chain
    pts = [(scene.base_to_camera @ base_error @ forward_kinematics(chain, q, p.link)).apply(p.position)
           for p in chain.tool_points]
    return project_points(scene.rig[0], np.array(pts))[0]


def main():
    rng = np.random.default_rng(0)
    scene = presets.davinci_scene()
    chain = scene.chain
    q = np.asarray(scene.q0)
    e = rng.uniform(-1, 1, chain.n_j) * np.asarray(presets.TOOL_ERROR_BOUNDS)
    base = RigidTransform.from_axis_angle([0.03, -0.02, 0.05], [2.0, -1.5, 3.0])
    ref = marker_pixels(scene, base, q + e)
    print("beta (share of each hidden joint error kept)      base shift (mm)   max pixel change")
    for beta in ([1, 1, 1, 1], [0, 0, 0, 0], [0.5, 0.5, 0.5, 0.5], [-1, 2, 0.3, 1.7]):
        B, e_beta = lump_family(chain, q, e, np.asarray(beta, float), base)
        shift = np.linalg.norm(B.translation - base.translation)
        diff = np.abs(marker_pixels(scene, B, q + e_beta) - ref).max()
        print(f"{str(beta):48s} {shift:10.3f}       {diff:.2e} px")


if __name__ == "__main__":
    main()
