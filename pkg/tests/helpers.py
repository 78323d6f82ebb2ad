"""Small scenes shared by tracker, simulator and harness tests."""

from dataclasses import replace

import numpy as np

from lumpedtrack import presets
from lumpedtrack.simulator import DetectionNoise, NoiseModel, Scenario, TrajectorySpec


def static_scenario(camera="stationary", steps=5, detection=None, noise=None):
    """da Vinci-like scene held at its nominal configuration."""
    scene = presets.davinci_scene(camera)
    n_c = scene.n_camera_joints
    return Scenario(scene, noise or NoiseModel.zero(scene.chain.n_j, n_c),
                    TrajectorySpec(steps=steps),
                    detection or DetectionNoise.exact(), name="static")


def cycling_scenario(steps=20, detection=None, noise=None, camera="stationary"):
    """Joint sinusoids without jitter or orientation walk (no IK needed)."""
    base = presets.davinci_scenario(camera, steps)
    tr = replace(base.trajectory, position_jitter=0.0, orientation_step=0.0)
    return Scenario(base.scene, noise or base.noise, tr,
                    detection or base.detection, name="cycling")


def small_filter(mode="lumped", n=300, **kw):
    return presets.davinci_filter_config(mode, "stationary", n_particles=n, **kw)


def rng(seed=0):
    return np.random.default_rng(seed)
