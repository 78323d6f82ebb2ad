import os
import textwrap

import numpy as np
import pytest

from lumpedtrack import presets
from lumpedtrack.config import (
    chain_from_dict, chain_to_dict, default_burn_in, dump_yaml, experiment_from_dict,
    filter_from_dict, filter_to_dict, load_experiment, load_yaml, rig_from_dict, rig_to_dict,
    scenario_from_dict, scenario_to_dict,
)
from lumpedtrack.errors import ConfigError

CONFIGS = os.path.join(os.path.dirname(__file__), os.pardir, "configs")


def _yaml(text, source="test.yaml"):
    return load_yaml(textwrap.dedent(text), source=source)


def test_syntax_error_names_line():
    with pytest.raises(ConfigError, match=r"test.yaml:3: YAML syntax error"):
        _yaml("""\
            a: 1
            b: [1, 2
            c: 3
            """)


def test_unknown_key_names_line():
    d = _yaml("""\
        scenario: {preset: davinci}
        filter: {preset: davinci}
        trails: 3
        """)
    with pytest.raises(ConfigError, match=r"test.yaml:3: unknown key 'trails'"):
        experiment_from_dict(d)


def test_nested_unknown_key_names_line():
    d = _yaml("""\
        scenario:
          preset: davinci
          noise:
            calib_var: [0, 0, 0, 0, 0, 0]
            bogus: 1
        """)
    with pytest.raises(ConfigError, match=r"test.yaml:5: unknown key 'bogus' in noise"):
        experiment_from_dict(d)


def test_bad_number_names_line():
    d = _yaml("""\
        scenario: {preset: davinci}
        trials: many
        """)
    with pytest.raises(ConfigError, match=r"test.yaml:2: trials must be an integer"):
        experiment_from_dict(d)


def test_unknown_mode_and_camera():
    d = _yaml("scenario: {preset: davinci}\nmode: magic\n")
    with pytest.raises(ConfigError, match="unknown mode"):
        experiment_from_dict(d)
    d = _yaml("scenario: {preset: davinci}\ncamera: fisheye\n")
    with pytest.raises(ConfigError, match="unknown camera mode"):
        experiment_from_dict(d)


def test_burn_in_must_leave_steps():
    d = _yaml("scenario: {preset: davinci, steps: 50}\nburn_in: 50\n")
    with pytest.raises(ConfigError, match="burn_in"):
        experiment_from_dict(d)


def test_default_burn_in():
    assert default_burn_in(140) == 100
    assert default_burn_in(100) == 50
    assert default_burn_in(12) == 6


def test_invalid_values_become_config_errors():
    d = _yaml("""\
        scenario:
          preset: davinci
          detection: {dropout: 2.0}
        """)
    with pytest.raises(ConfigError, match="test.yaml:3"):
        experiment_from_dict(d)
    d = _yaml("scenario: {preset: davinci}\nfilter: {preset: davinci, n_particles: 0}\n")
    with pytest.raises(ConfigError, match="invalid filter"):
        experiment_from_dict(d)


def test_joint_error_count_checked():
    d = _yaml("""\
        scenario: {preset: davinci}
        mode: lumped-plus-joints
        filter: {n_particles: 10, joint_error_bounds: [0.1], joint_error_var: [0.01]}
        """)
    with pytest.raises(ConfigError, match="needs 3 joint-error bounds"):
        experiment_from_dict(d)


def test_missing_file_reported(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_experiment(tmp_path / "absent.yaml")


def test_preset_shortcut_and_overrides():
    e = load_experiment("preset:davinci", trials=3, seed=9, mode="all-unknowns",
                        camera="eye-in-hand", steps=20)
    s = e.spec
    assert (s.trials, s.seed, s.mode, s.camera, s.steps, s.burn_in) == (
        3, 9, "all-unknowns", "eye-in-hand", 20, 10)
    assert s.filter_config.n_joint_errors == 11


def test_shipped_configs_load():
    names = sorted(f for f in os.listdir(CONFIGS) if f.endswith(".yaml"))
    assert names
    for name in names:
        e = load_experiment(os.path.join(CONFIGS, name))
        assert e.spec.trials >= 1


def test_relative_file_references_resolve(tmp_path):
    chain = presets.davinci_tool_chain()
    sub = tmp_path / "parts"
    sub.mkdir()
    (sub / "chain.yaml").write_text(dump_yaml(chain_to_dict(chain)))
    (sub / "rig.yaml").write_text(dump_yaml(rig_to_dict(presets.stereo_rig())))
    sd = scenario_to_dict(presets.davinci_scenario(steps=10))
    sd["chain"], sd["rig"] = "chain.yaml", "rig.yaml"
    (sub / "scene.yaml").write_text(dump_yaml(sd))
    (tmp_path / "exp.yaml").write_text("scenario: parts/scene.yaml\nfilter: {preset: davinci}\n")
    e = load_experiment(tmp_path / "exp.yaml")
    assert chain_to_dict(e.spec.scenario.scene.chain) == chain_to_dict(chain)
    assert e.spec.steps == 10


def test_chain_round_trip():
    chain = presets.davinci_tool_chain()
    d = load_yaml(dump_yaml(chain_to_dict(chain)), source="chain")
    assert chain_to_dict(chain_from_dict(d)) == chain_to_dict(chain)


def test_rig_round_trip():
    rig = presets.stereo_rig()
    back = rig_from_dict(load_yaml(dump_yaml(rig_to_dict(rig)), source="rig"))
    for a, b in zip(rig, back):
        assert (a.fx, a.fy, a.cu, a.cv, a.width, a.height) == (b.fx, b.fy, b.cu, b.cv, b.width, b.height)
        assert a.extrinsic.allclose(b.extrinsic, atol=1e-12)


@pytest.mark.parametrize("camera", ["stationary", "eye-in-hand"])
def test_scenario_round_trip(camera):
    sc = presets.davinci_scenario(camera, steps=25)
    back = scenario_from_dict(load_yaml(dump_yaml(scenario_to_dict(sc)), source="scene"))
    assert back.noise == sc.noise and back.trajectory == sc.trajectory
    assert back.detection == sc.detection
    assert chain_to_dict(back.scene.chain) == chain_to_dict(sc.scene.chain)
    assert back.scene.base_to_camera.allclose(sc.scene.base_to_camera, atol=1e-12)
    np.testing.assert_array_equal(back.scene.q0, sc.scene.q0)
    assert back.scene.eye_in_hand == sc.scene.eye_in_hand


def test_filter_round_trip():
    cfg = presets.davinci_filter_config("lumped-plus-joints", n_particles=77)
    back = filter_from_dict(load_yaml(dump_yaml(filter_to_dict(cfg)), source="f"))
    assert back == cfg


def test_literal_rotation_variance_flag():
    d = _yaml("preset: davinci\nliteral_rotation_var: true\n")
    assert filter_from_dict(d).lump_var_t[2] == 5.0
    assert filter_from_dict(_yaml("preset: davinci\n")).lump_var_t[2] == 0.005
    with pytest.raises(ConfigError, match="only valid with a preset"):
        filter_from_dict(_yaml("literal_rotation_var: true\n"))


def test_empty_file_is_empty_mapping():
    d = load_yaml("", source="empty")
    assert d == {}
    with pytest.raises(ConfigError, match="missing required key 'scenario'"):
        experiment_from_dict(d)
