from dataclasses import replace

import numpy as np
import pytest

from lumpedtrack import presets
from lumpedtrack import tracker as tk
from lumpedtrack.errors import ConfigError, DegenerateFilterError, InvalidInputError
from lumpedtrack.kinematics import lump_family
from lumpedtrack.se3 import AxisAnglePose, RigidTransform, pose_error
from lumpedtrack.simulator import Simulation

from helpers import cycling_scenario, small_filter, static_scenario


def state_from(weights, params, errs=None):
    w = np.asarray(weights, float)
    with np.errstate(divide="ignore"):
        lw = np.log(w / w.sum())
    params = np.asarray(params, float)
    errs = np.zeros((len(w), 0)) if errs is None else np.asarray(errs, float)
    return tk.FilterState(lw, params, errs)


# -- configuration -----------------------------------------------------------

def test_config_defaults_and_validation():
    cfg = tk.FilterConfig()
    assert np.isclose(cfg.c_max_m, 3.75) and np.isclose(cfg.c_max_l, 6.5)
    with pytest.raises(ConfigError):
        tk.FilterConfig(n_particles=0)
    with pytest.raises(ConfigError):
        tk.FilterConfig(lump_var_0=(0, 1, 1, 1, 1, 1))
    with pytest.raises(ConfigError):
        tk.FilterConfig(joint_error_bounds=(0.1,), joint_error_var=())
    with pytest.raises(ConfigError):
        tk.FilterConfig(mode="everything")
    with pytest.raises(ConfigError):
        tk.FilterConfig(prediction_weighting="magic")


# -- initialize / predict ----------------------------------------------------

def test_initialize_basic():
    cfg = tk.FilterConfig(n_particles=1000)
    state, _ = tk.initialize(cfg, 0)
    assert state.n == 1000
    assert np.isclose(state.weights.sum(), 1.0, atol=1e-12)
    assert state.joint_errors.shape == (1000, 0)


def test_initialize_zero_bounds_gives_zero_errors():
    cfg = tk.FilterConfig(n_particles=50, joint_error_bounds=(0.0, 0.0), joint_error_var=(0.1, 0.1))
    state, _ = tk.initialize(cfg, 0)
    assert np.all(state.joint_errors == 0)


def test_initialize_weights_follow_gaussian_density():
    cfg = tk.FilterConfig(n_particles=20)
    state, _ = tk.initialize(cfg, 3)
    var = np.array(cfg.lump_var_0)
    dens = np.exp(-0.5 * np.sum(state.params ** 2 / var, axis=1))
    assert np.allclose(state.weights, dens / dens.sum(), rtol=1e-10)


def test_initialize_sample_mean():
    cfg = tk.FilterConfig(n_particles=100_000, joint_error_bounds=(0.5,), joint_error_var=(0.0,))
    state, _ = tk.initialize(cfg, 11)
    sd = np.sqrt(cfg.lump_var_0)
    assert np.all(np.abs(state.params.mean(axis=0)) < 4 * sd / np.sqrt(cfg.n_particles))
    assert np.all(np.abs(state.joint_errors) <= 0.5)


def test_predict_zero_noise_copies_ancestors():
    cfg = tk.FilterConfig(n_particles=30, lump_var_t=(0,) * 6, joint_error_bounds=(0.1,),
                          joint_error_var=(0.0,))
    state, rng = tk.initialize(cfg, 1)
    new = tk.predict(state, cfg, rng)
    rows = {tuple(r) for r in np.c_[state.params, state.joint_errors]}
    assert all(tuple(r) in rows for r in np.c_[new.params, new.joint_errors])


def test_predict_covariance_from_point_mass():
    var_t = (0.01, 0.02, 0.03, 1.0, 2.0, 3.0)
    cfg = tk.FilterConfig(n_particles=100_000, lump_var_t=var_t, joint_error_bounds=(0.1,),
                          joint_error_var=(0.5,))
    state = tk.FilterState(np.full(1, 0.0), np.zeros((1, 6)), np.zeros((1, 1)))
    new = tk.predict(state, cfg, np.random.default_rng(4))
    assert new.n == 100_000
    v = np.var(np.c_[new.params, new.joint_errors], axis=0)
    target = np.r_[var_t, 0.5]
    # sample variance std is var * sqrt(2/N); allow 5 of those
    assert np.all(np.abs(v - target) < 5 * target * np.sqrt(2 / 100_000))


def test_predict_listing_weights_are_proposal_density():
    cfg = tk.FilterConfig(n_particles=10)
    state, rng = tk.initialize(cfg, 0)
    pre = state.params.copy()
    r2 = np.random.default_rng(99)
    new = tk.predict(state, cfg, r2)
    # rebuild the increments by replaying the generator
    r3 = np.random.default_rng(99)
    cdf = np.cumsum(state.weights)
    cdf[-1] = 1
    anc = np.minimum(np.searchsorted(cdf, r3.random(10), side="right"), 9)
    d = new.params - pre[anc]
    var = np.array(cfg.lump_var_t)
    logd = -0.5 * np.sum(d * d / var + np.log(2 * np.pi * var), axis=1)
    assert np.allclose(new.log_weights, logd)
    sir = tk.predict(state, replace(cfg, prediction_weighting="sir"), np.random.default_rng(99))
    assert np.allclose(sir.params, new.params) and np.all(sir.log_weights == 0)


def test_predict_single_particle_random_walk():
    cfg = tk.FilterConfig(n_particles=1)
    state, rng = tk.initialize(cfg, 0)
    a = tk.predict(state, cfg, rng)
    b = tk.predict(a, cfg, rng)
    assert not np.allclose(a.params, b.params)
    assert b.step == 2


def test_predict_degenerate_weights():
    state = tk.FilterState(np.full(3, -np.inf), np.zeros((3, 6)), np.zeros((3, 0)))
    with pytest.raises(DegenerateFilterError):
        tk.predict(state, tk.FilterConfig(n_particles=3), np.random.default_rng(0))


def test_parallel_substreams_depend_only_on_seed_step_particle():
    cfg = tk.FilterConfig(n_particles=8, parallel_substreams=True, prediction_weighting="sir")
    s, _ = tk.initialize(cfg, 5)
    uniform = replace(s, log_weights=np.full(8, -np.log(8)))
    a = tk.predict(uniform, cfg, np.random.default_rng(0))
    b = tk.predict(uniform, cfg, np.random.default_rng(1))
    da = a.params - np.asarray(s.params)[np.argmin(np.abs(a.params[:, None] - s.params[None]).sum(-1), axis=1)]
    # same (seed, step, particle) increments regardless of the ancestor generator
    incr = tk._substream_normals(5, 1, 8, 6) * np.sqrt(cfg.lump_var_t)
    for p in range(8):
        assert np.any(np.all(np.isclose(a.params[p] - s.params, incr[p]), axis=1))
        assert np.any(np.all(np.isclose(b.params[p] - s.params, incr[p]), axis=1))
    assert da.shape == (8, 6)


# -- ESS / resample / estimate ----------------------------------------------

def test_effective_sample_size_examples():
    assert np.isclose(tk.effective_sample_size(np.full(1000, 1e-3)), 1000)
    assert tk.effective_sample_size([1.0, 0, 0]) == 1
    assert np.isclose(tk.effective_sample_size([0.5, 0.5, 0, 0]), 2)


def test_stratified_resample_examples():
    params = np.arange(24, dtype=float).reshape(4, 6)
    s = state_from([0, 1, 0, 0], params)
    out = tk.stratified_resample(s, np.random.default_rng(0))
    assert np.all(out.params == params[1])
    assert np.allclose(out.weights, 0.25)
    u = tk.stratified_resample(state_from([1, 1, 1, 1], params), np.random.default_rng(0))
    assert sorted(map(tuple, u.params)) == sorted(map(tuple, params))
    with pytest.raises(DegenerateFilterError):
        tk.stratified_resample(tk.FilterState(np.full(4, -np.inf), params, np.zeros((4, 0))),
                               np.random.default_rng(0))


def test_stratified_copy_counts_bounded(rng):
    w = rng.random(50)
    w /= w.sum()
    s = state_from(w, np.arange(50)[:, None] * np.ones((1, 6)))
    out = tk.stratified_resample(s, rng)
    counts = np.bincount(out.params[:, 0].astype(int), minlength=50)
    assert np.all(np.abs(counts - 50 * w) < 2)


def test_stratified_resample_unbiased(rng):
    N, reps = 100, 500
    w = rng.random(N) ** 3
    w /= w.sum()
    params = rng.normal(size=(N, 6))
    s = state_from(w, params)
    target = w @ params
    means = np.array([tk.stratified_resample(s, rng).params.mean(axis=0) for _ in range(reps)])
    sigma = np.sqrt(w @ (params - target) ** 2)
    assert np.all(np.abs(means.mean(axis=0) - target) < 3 * sigma / np.sqrt(N))


def test_extract_estimate(rng):
    s = state_from([1.0], [[0.1, 0.2, 0.3, 1, 2, 3]], [[0.05]])
    est = tk.extract_estimate(s)
    assert np.allclose(est.lump.as_vector(), [0.1, 0.2, 0.3, 1, 2, 3]) and est.ess_fraction == 1.0
    s = state_from([1, 1], [[1, 0, 0, 0, 0, 0], [-1, 0, 0, 0, 0, 0]])
    assert np.allclose(tk.extract_estimate(s).lump.as_vector(), 0)
    w = rng.random(30)
    p = rng.normal(size=(30, 6))
    e = rng.normal(size=(30, 2))
    est = tk.extract_estimate(state_from(w, p, e))
    wn = w / w.sum()
    assert np.allclose(est.lump.as_vector(), [sum(wn[i] * p[i, k] for i in range(30)) for k in range(6)],
                       atol=1e-12)
    assert np.allclose(est.joint_errors, [sum(wn[i] * e[i, k] for i in range(30)) for k in range(2)],
                       atol=1e-12)


def test_log_space_matches_linear(rng):
    lw = rng.normal(size=100)
    w = np.exp(lw) / np.exp(lw).sum()
    assert np.allclose(tk.normalized_weights(lw), w, atol=1e-10)


# -- projection ----------------------------------------------------------------

def _model(sim, mode="lumped", calib=None):
    sc = sim.scene
    return tk.TrackingModel.for_mode(mode, sc.chain, sc.rig, calib or sc.base_to_camera,
                                     sc.camera_chain, sc.camera_static)


def test_projection_matches_noise_free_simulation():
    sim = Simulation(static_scenario(steps=1), 0)
    row = sim.step()
    model = _model(sim)
    proj = tk.project_expected_features(model, AxisAnglePose.identity(), np.zeros(0), row.q_meas)
    for (pts, eds), batch in zip(proj, row.batches):
        exp_pts = np.array([p.uv for p in pts if p is not None])
        assert np.allclose(np.sort(exp_pts, axis=0), np.sort(batch.points, axis=0), atol=0)
        exp_eds = np.array([(e.rho, e.phi) for e in eds if e is not None])
        assert np.allclose(np.sort(exp_eds, axis=0), np.sort(batch.edges, axis=0), atol=1e-12)


def test_all_unknowns_equals_lumped_when_base_errors_vanish(rng):
    sim = Simulation(static_scenario(steps=1), 0)
    sc = sim.scene
    q = sc.q0
    lumped = _model(sim, "lumped")
    allu = _model(sim, "all-unknowns")
    lump = np.r_[rng.normal(size=3) * 0.05, rng.normal(size=3)]
    e_tail = np.zeros(sc.chain.n_j)
    a = lumped.project(lump[None], np.zeros((1, 0)), q)
    b = allu.project(lump[None], e_tail[None], q)
    for x, y in zip(a, b):
        assert np.allclose(x[0], y[0], equal_nan=True, atol=1e-9)
        assert np.allclose(x[2], y[2], equal_nan=True, atol=1e-9)


def test_eye_in_hand_zero_arm_reduces_to_stationary():
    base = presets.davinci_scene("stationary")
    cam_chain = presets.davinci_camera_chain()
    q_c = np.zeros(cam_chain.n_j)
    from lumpedtrack.kinematics import KinematicChain, MDHJoint
    flat = KinematicChain(tuple(MDHJoint(0.0, 0.0) for _ in range(4)), 4)
    eih = tk.TrackingModel(base.chain, base.rig, base.base_to_camera, base.chain.n_b, 0, flat,
                           RigidTransform.identity())
    st = tk.TrackingModel(base.chain, base.rig, base.base_to_camera, base.chain.n_b)
    p = np.zeros((1, 6))
    for x, y in zip(eih.project(p, np.zeros((1, 0)), base.q0, q_c), st.project(p, np.zeros((1, 0)), base.q0)):
        assert np.allclose(x[0], y[0], equal_nan=True, atol=1e-9)
    assert cam_chain.n_j == 4


def test_projection_marks_behind_camera_absent():
    sim = Simulation(static_scenario(steps=1), 0)
    model = _model(sim)
    flip = np.array([[np.pi, 0, 0, 0, 0, 0]])
    uv, valid, lines, lvalid = model.project(flip, np.zeros((1, 0)), sim.scene.q0)[0]
    assert not valid.any() and np.isnan(uv).all()


# -- update --------------------------------------------------------------------

def test_update_with_empty_batches_keeps_prediction_weights():
    sim = Simulation(static_scenario(steps=1), 0)
    model = _model(sim)
    cfg = small_filter(n=200)
    state, _ = tk.initialize(cfg, 0)
    empty = [tk.FeatureBatch(0), tk.FeatureBatch(1)]
    pred = tk.predict(state, cfg, np.random.default_rng(7))
    cfg_hi = replace(cfg, ess_threshold=1e-9)  # never resample
    after, _ = tk.update(state, cfg_hi, model, sim.scene.q0, empty, np.random.default_rng(7))
    assert np.allclose(after.weights, pred.weights, atol=1e-12)


def test_update_rejects_mismatched_model():
    sim = Simulation(static_scenario(steps=1), 0)
    cfg = small_filter("lumped-plus-joints", n=10)
    state, rng = tk.initialize(cfg, 0)
    with pytest.raises(ConfigError):
        tk.update(state, cfg, _model(sim, "lumped"), sim.scene.q0, [], rng)
    cfg = small_filter(n=10)
    state, rng = tk.initialize(cfg, 0)
    with pytest.raises(InvalidInputError):
        tk.update(state, cfg, _model(sim), sim.scene.q0, [tk.FeatureBatch(5)], rng)


def test_update_single_particle_is_its_walk():
    sim = Simulation(static_scenario(steps=1), 0)
    cfg = small_filter(n=1)
    state, rng = tk.initialize(cfg, 0)
    new, est = tk.update(state, cfg, _model(sim), sim.scene.q0, sim.step().batches, rng)
    assert np.allclose(est.lump.as_vector(), new.params[0])
    assert est.ess_fraction == 1.0


def test_update_is_deterministic():
    sc = static_scenario(steps=6, detection=presets.DetectionNoise())
    rows = Simulation(sc, 3).run()
    model = _model(Simulation(sc, 3))
    cfg = small_filter(n=100)

    def run():
        s, r = tk.initialize(cfg, 9)
        out = []
        for row in rows:
            s, e = tk.update(s, cfg, model, row.q_meas, row.batches, r)
            out.append(e.lump.as_vector())
        return np.array(out)

    assert np.array_equal(run(), run())


@pytest.mark.slow
def test_noise_free_convergence_to_injected_lump():
    sc = cycling_scenario(steps=100, detection=presets.DetectionNoise.exact(),
                          noise=presets.NoiseModel.zero(7))
    injected = RigidTransform.from_axis_angle([0.05, -0.04, 0.06], [3.0, -2.0, 4.0])
    sim = Simulation(sc, 0, calibration_error=injected)
    model = tk.TrackingModel.for_mode("lumped", sc.scene.chain, sc.scene.rig, sim.calib)
    # a constant lump calls for a slow random walk
    cfg = tk.FilterConfig(n_particles=1000, lump_var_0=(0.01,) * 3 + (25.0,) * 3,
                          lump_var_t=(1e-4,) * 3 + (0.04,) * 3)
    state, rng = tk.initialize(cfg, 0)
    for row in sim:
        state, est = tk.update(state, cfg, model, row.q_meas, row.batches, rng)
    eb, ew = pose_error(injected, est.lump.to_transform())
    assert eb <= 5.0 and ew <= 0.05


def test_beta_equivalent_scenes_give_identical_streams_and_estimates():
    """Two (base error, joint error) pairs from one beta family look the same."""
    sc_a = static_scenario(steps=4, detection=presets.DetectionNoise())
    chain = sc_a.scene.chain
    e = np.array([0.003, -0.002, 1.5, 0.003, 0.0, 0.0, 0.0])
    beta = np.array([0.3, -0.5, 1.7, 0.0])
    E_a = RigidTransform.from_axis_angle([0.02, -0.01, 0.03], [2.0, 1.0, -3.0])
    q_meas = sc_a.scene.q0 - e
    E_b, e_b = lump_family(chain, q_meas, e, beta, E_a)
    truth_a = sc_a.scene.base_to_camera
    truth_b = truth_a @ E_a.inverse() @ E_b
    scene_b = replace(sc_a.scene, base_to_camera=truth_b, q0=q_meas + e_b)
    sc_b = replace(sc_a, scene=scene_b)
    sim_a = Simulation(sc_a, 5, calibration_error=E_a, tool_biases=e)
    sim_b = Simulation(sc_b, 5, calibration_error=E_b, tool_biases=e_b)
    assert sim_a.calib.allclose(sim_b.calib, atol=1e-9)
    rows_a, rows_b = sim_a.run(), sim_b.run()
    cfg = small_filter(n=200)
    model = _model(sim_a, calib=sim_a.calib)
    sa, ra = tk.initialize(cfg, 1)
    sb, rb = tk.initialize(cfg, 1)
    for a, b in zip(rows_a, rows_b):
        assert np.allclose(a.q_meas, b.q_meas, atol=1e-12)
        for ba, bb in zip(a.batches, b.batches):
            assert np.allclose(ba.points, bb.points, atol=1e-9)
            assert np.allclose(ba.edges, bb.edges, atol=1e-9)
        sa, ea = tk.update(sa, cfg, model, a.q_meas, a.batches, ra)
        sb, eb = tk.update(sb, cfg, model, b.q_meas, b.batches, rb)
        assert np.allclose(ea.lump.as_vector(), eb.lump.as_vector(), atol=1e-9)


def test_feature_batch_validation():
    with pytest.raises(InvalidInputError):
        tk.FeatureBatch(0, np.zeros((2, 2)), confidences=[1.0])
    with pytest.raises(InvalidInputError):
        tk.FeatureBatch(0, np.zeros((1, 2)), confidences=[1.5])
    with pytest.raises(InvalidInputError):
        tk.FeatureBatch(0, np.zeros((2, 2)), landmarks=[0])


def test_confidence_model_requires_landmarks():
    sim = Simulation(static_scenario(steps=1), 0)
    cfg = small_filter(n=10, observation_model="confidence-weighted")
    state, rng = tk.initialize(cfg, 0)
    with pytest.raises(InvalidInputError):
        tk.update(state, cfg, _model(sim), sim.scene.q0, [tk.FeatureBatch(0, [[1.0, 2.0]])], rng)
