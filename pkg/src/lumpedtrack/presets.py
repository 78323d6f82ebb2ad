"""Ready-made scenes and parameter sets.

``davinci_*`` builds a surgical tool arm (six joints plus a gripper jaw,
remote-centre-of-motion geometry, ``n_b = 4``) viewed by a stereo endoscope
that is either fixed or carried by a four-joint camera arm.  ``baxter_*``
builds a seven-joint arm with a mono camera and confidence-weighted point
detections.  Lengths are in mm and angles in rad.

Marker placements, camera poses and trajectory cycles are invented; the
noise and filter parameters follow the published tables.
"""

from __future__ import annotations

import numpy as np

from .camera import CameraModel, CylinderPrimitive
from .kinematics import PRISMATIC, REVOLUTE, KinematicChain, MDHJoint, ToolPoint, forward_kinematics
from .se3 import RigidTransform, look_at
from .simulator import DetectionNoise, NoiseModel, Scenario, Scene, TrajectorySpec
from .tracker import FilterConfig

HALF_PI = np.pi / 2

# tool-arm filter parameters (one entry per tool joint)
TOOL_ERROR_BOUNDS = (0.004, 0.004, 2.0, 0.004, 0.004, 0.004, 0.01)
TOOL_ERROR_VAR = (0.0025, 0.0025, 1.0, 0.0025, 0.0025, 0.0025, 0.005)
CAMERA_ERROR_BOUNDS = (0.004, 0.004, 2.0, 0.004)
CAMERA_ERROR_VAR = (0.01, 0.01, 2.5, 0.01)
LUMP_VAR_T = (0.005, 0.005, 0.005, 0.25, 0.25, 0.25)
LUMP_VAR_T_LITERAL = (0.005, 0.005, 5.0, 0.25, 0.25, 0.25)
GAMMA_M, GAMMA_PHI, GAMMA_RHO = 0.15, 40.0, 0.1

# simulated noise
CALIB_VAR = (0.005, 0.005, 0.005, 5.0, 5.0, 5.0)
TOOL_STRETCH = (0.02, 0.02, 0.0025, 0.02, 0.02, 0.02, 0.05)
CAMERA_STEP_STD = (0.0075, 0.0075, 0.75, 0.0075)

IMAGE_WIDTH, IMAGE_HEIGHT, FOV_DEG, BASELINE = 540, 432, 60.0, 5.0


def davinci_tool_chain():
    """Tool arm: yaw, pitch, insertion, roll, wrist pitch, wrist yaw, jaw."""
    joints = (
        MDHJoint(HALF_PI, 0.0, HALF_PI, 0.0, REVOLUTE),
        MDHJoint(-HALF_PI, 0.0, -HALF_PI, 0.0, REVOLUTE),
        MDHJoint(HALF_PI, 0.0, 0.0, 0.0, PRISMATIC),
        MDHJoint(0.0, 0.0, 0.0, 0.0, REVOLUTE),
        MDHJoint(-HALF_PI, 0.0, -HALF_PI, 0.0, REVOLUTE),
        MDHJoint(-HALF_PI, 9.1, -HALF_PI, 0.0, REVOLUTE),
        MDHJoint(0.0, 0.0, 0.0, 0.0, REVOLUTE),
    )
    points = (
        ToolPoint(4, (4.2, 0.0, -6.0)),
        ToolPoint(4, (0.0, -4.2, -14.0)),
        ToolPoint(5, (3.0, 4.0, 2.5)),
        ToolPoint(5, (6.0, -4.0, -2.5)),
        ToolPoint(6, (6.0, 0.0, 2.5)),
        ToolPoint(7, (9.0, 0.0, -2.5)),
        ToolPoint(7, (5.0, 2.0, 0.0)),
    )
    shaft = CylinderPrimitive(4.2, (0.0, 0.0, 1.0), (0.0, 0.0, -40.0), 4)
    return KinematicChain(joints, 4, points, (shaft,), ee_link=6, name="davinci-tool")


def davinci_camera_chain():
    """Endoscope arm: yaw, pitch, insertion, roll (all joints hidden)."""
    joints = (
        MDHJoint(HALF_PI, 0.0, HALF_PI, 0.0, REVOLUTE),
        MDHJoint(-HALF_PI, 0.0, -HALF_PI, 0.0, REVOLUTE),
        MDHJoint(HALF_PI, 0.0, 0.0, 0.0, PRISMATIC),
        MDHJoint(0.0, 0.0, 0.0, 0.0, REVOLUTE),
    )
    return KinematicChain(joints, 4, name="davinci-camera")


DAVINCI_Q0 = (0.0, 0.0, 120.0, 0.0, 0.0, 0.0, 0.3)
DAVINCI_Q_CAM0 = (0.0, 0.0, 50.0, 0.0)


def stereo_rig(width=IMAGE_WIDTH, height=IMAGE_HEIGHT, fov_deg=FOV_DEG, baseline=BASELINE):
    left = CameraModel.from_fov(width, height, fov_deg)
    right = CameraModel.from_fov(width, height, fov_deg,
                                 RigidTransform(np.eye(3), [-baseline, 0.0, 0.0]))
    return (left, right)


def davinci_camera_pose(chain=None, q0=DAVINCI_Q0):
    """True ``camera <- tool base`` transform looking at the nominal wrist."""
    chain = davinci_tool_chain() if chain is None else chain
    wrist = forward_kinematics(chain, q0, 4).translation
    eye = wrist + np.array([55.0, -30.0, 25.0])
    return look_at(eye, wrist + np.array([0.0, 0.0, -12.0]), up=(0.0, 0.0, 1.0)).inverse()


def davinci_scene(camera="stationary", stereo=True):
    chain = davinci_tool_chain()
    rig = stereo_rig() if stereo else stereo_rig()[:1]
    cam_from_base = davinci_camera_pose(chain)
    if camera == "stationary":
        return Scene(chain, rig, DAVINCI_Q0, cam_from_base, name="davinci-stationary")
    if camera != "eye-in-hand":
        raise ValueError(f"unknown camera mode {camera!r}")
    cam_chain = davinci_camera_chain()
    static = RigidTransform.identity()
    Fc = forward_kinematics(cam_chain, DAVINCI_Q_CAM0)
    base_to_base = Fc @ static.inverse() @ cam_from_base
    return Scene(chain, rig, DAVINCI_Q0, base_to_base, cam_chain, static, DAVINCI_Q_CAM0,
                 name="davinci-eye-in-hand")


def davinci_noise(camera="stationary"):
    n_c = 4 if camera == "eye-in-hand" else 0
    return NoiseModel(CALIB_VAR, TOOL_ERROR_BOUNDS, TOOL_STRETCH,
                      CAMERA_ERROR_BOUNDS[:n_c], CAMERA_STEP_STD[:n_c])


def davinci_trajectory(camera="stationary", steps=140):
    cam = camera == "eye-in-hand"
    return TrajectorySpec(
        steps=steps,
        joint_amplitude=(0.1, 0.08, 8.0, 0.6, 0.5, 0.5, 0.25),
        joint_period=(140.0, 90.0, 70.0, 60.0, 50.0, 45.0, 35.0),
        joint_phase=(0.0, 1.0, 2.0, 0.5, 1.5, 2.5, 0.0),
        position_jitter=1.0,
        orientation_step=0.07,
        gripper_joint=6,
        camera_amplitude=(0.03, 0.03, 3.0, 0.08) if cam else (),
        camera_period=(70.0, 55.0, 45.0, 60.0) if cam else (),
    )


def davinci_scenario(camera="stationary", steps=140, detection=None):
    return Scenario(davinci_scene(camera), davinci_noise(camera), davinci_trajectory(camera, steps),
                    DetectionNoise() if detection is None else detection,
                    name=f"davinci-{camera}")


def davinci_filter_config(mode="lumped", camera="stationary", n_particles=1000,
                          literal_rotation_var=False, **overrides):
    """Filter parameters for the surgical tool in the requested mode.

    With a camera arm and all unknowns tracked, the camera joints' errors
    are tracked as well.
    ``literal_rotation_var`` uses 5 instead of 0.005 for the third rotation
    variance, the other reading of the published table.
    """
    var_t = np.array(LUMP_VAR_T_LITERAL if literal_rotation_var else LUMP_VAR_T)
    var_0 = 10.0 * var_t
    if mode == "lumped":
        bounds, var_e = (), ()
    elif mode == "lumped-plus-joints":
        bounds, var_e = TOOL_ERROR_BOUNDS[4:], TOOL_ERROR_VAR[4:]
    elif mode == "all-unknowns":
        bounds, var_e = TOOL_ERROR_BOUNDS, TOOL_ERROR_VAR
        if camera == "eye-in-hand":
            bounds, var_e = bounds + CAMERA_ERROR_BOUNDS, var_e + CAMERA_ERROR_VAR
    else:
        raise ValueError(f"unknown mode {mode!r}")
    kw = dict(n_particles=n_particles, ess_threshold=0.5, lump_var_0=tuple(var_0),
              lump_var_t=tuple(var_t), joint_error_bounds=bounds, joint_error_var=var_e,
              gamma_m=GAMMA_M, gamma_rho=GAMMA_RHO, gamma_phi=GAMMA_PHI, mode=mode)
    kw.update(overrides)
    return FilterConfig(**kw)


# the tool barely moves while servoing, so the lump random walk is shrunk
SERVO_WALK_SCALE = 0.01
SERVO_WARMUP = 300


def servo_filter_config(cfg, scale=SERVO_WALK_SCALE):
    """Copy of ``cfg`` with the lump random-walk variances scaled by ``scale``."""
    from dataclasses import replace
    return replace(cfg, lump_var_t=tuple(float(scale) * np.asarray(cfg.lump_var_t)))


# seven-joint arm with a mono camera

BAXTER_Q0 = (0.0, -0.55, 0.0, 1.28, 0.0, 0.26, 0.0)


def baxter_chain():
    joints = (
        MDHJoint(0.0, 0.0, 0.0, 270.35),
        MDHJoint(-HALF_PI, 69.0, HALF_PI, 0.0),
        MDHJoint(HALF_PI, 0.0, 0.0, 364.35),
        MDHJoint(-HALF_PI, 69.0, 0.0, 0.0),
        MDHJoint(HALF_PI, 0.0, 0.0, 374.29),
        MDHJoint(-HALF_PI, 10.0, 0.0, 0.0),
        MDHJoint(HALF_PI, 0.0, 0.0, 0.0),
    )
    points = (
        ToolPoint(6, (0.0, 0.0, 40.0)),
        ToolPoint(6, (50.0, 0.0, 0.0)),
        ToolPoint(7, (0.0, 0.0, 120.0)),
        ToolPoint(7, (40.0, 0.0, 180.0)),
        ToolPoint(7, (-40.0, 0.0, 180.0)),
        ToolPoint(7, (0.0, 45.0, 60.0)),
    )
    return KinematicChain(joints, 6, points, (), name="baxter")


def baxter_scene():
    chain = baxter_chain()
    target = forward_kinematics(chain, BAXTER_Q0).translation
    cam = CameraModel.from_fov(640, 480, 60.0)
    pose = look_at(target + np.array([600.0, 250.0, 150.0]), target, up=(0.0, 0.0, 1.0))
    return Scene(chain, (cam,), BAXTER_Q0, pose.inverse(), name="baxter")


def baxter_scenario(steps=140):
    noise = NoiseModel(CALIB_VAR, (0.01,) * 7, (0.0,) * 7)
    traj = TrajectorySpec(steps=steps, joint_amplitude=(0.15, 0.1, 0.15, 0.1, 0.3, 0.2, 0.4),
                          joint_period=(140.0, 100.0, 80.0, 70.0, 60.0, 50.0, 40.0))
    det = DetectionNoise(pixel_std=2.0, dropout=0.05, false_positive_rate=0.5,
                         confidences="beta")
    return Scenario(baxter_scene(), noise, traj, det, name="baxter")


def baxter_filter_config(mode="lumped", n_particles=200, **overrides):
    if mode == "lumped":
        bounds, var_e = (), ()
    elif mode == "lumped-plus-joints":
        bounds, var_e = (0.01,), (0.001,)
    elif mode == "all-unknowns":
        bounds, var_e = (0.01,) * 7, (0.001,) * 7
    else:
        raise ValueError(f"unknown mode {mode!r}")
    var_t = (0.001,) * 3 + (0.25,) * 3
    kw = dict(n_particles=n_particles, lump_var_0=tuple(10.0 * np.array(var_t)), lump_var_t=var_t,
              joint_error_bounds=bounds, joint_error_var=var_e, gamma_m=5.0, mode=mode,
              observation_model="confidence-weighted")
    kw.update(overrides)
    return FilterConfig(**kw)


SCENARIOS = {
    "davinci": lambda camera="stationary", steps=140: davinci_scenario(camera, steps),
    "baxter": lambda camera="stationary", steps=140: baxter_scenario(steps),
}


def filter_config_for(preset, mode, camera="stationary", **overrides):
    if preset == "davinci":
        return davinci_filter_config(mode, camera, **overrides)
    if preset == "baxter":
        return baxter_filter_config(mode, **overrides)
    raise ValueError(f"unknown preset {preset!r}")
