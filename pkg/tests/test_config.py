import math

import numpy as np
import pytest

from rsma_uav.config import (FIG3_USERS, ConfigError, ExperimentConfig, Method, Preset, load_config,
                             parse_config)
from rsma_uav.precoder import Scheme


def shared_values(sc):
    assert sc.noise_power == 1.0
    assert sc.bandwidth_hz == 20e6
    assert sc.rate_threshold_bps == 0.0
    assert sc.path_loss_exponent == 2.0
    assert sc.area == (300.0, 300.0)
    assert (sc.box.x, sc.box.y, sc.box.z) == ((0.0, 300.0), (0.0, 300.0), (80.0, 120.0))
    assert sc.weights is None


@pytest.mark.parametrize("preset", [Preset.FIG1_CONVERGENCE, Preset.FIG2_TRAJECTORY])
def test_two_user_presets_golden(preset):
    cfg = parse_config("", preset)
    shared_values(cfg.scenario)
    assert (cfg.scenario.n_users, cfg.scenario.n_t, cfg.scenario.channel) == (2, 2, "los")
    assert cfg.scenario.users is None
    assert cfg.sweep.snr_db == [20.0]
    assert cfg.sweep.schemes == [Scheme.RSMA, Scheme.SDMA, Scheme.NOMA]
    assert cfg.sweep.methods == [Method.JOINT]
    assert cfg.sweep.seeds == list(range(10))


def test_los_sweep_preset_golden():
    cfg = parse_config("preset: fig3_snr_los\n")
    shared_values(cfg.scenario)
    assert (cfg.scenario.n_users, cfg.scenario.n_t, cfg.scenario.channel) == (4, 4, "los")
    assert [list(u) for u in cfg.scenario.users] == [[0, 0, 0], [0, 100, 0], [150, 150, 0], [200, 50, 0]]
    assert cfg.sweep.snr_db == [0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0]
    assert cfg.sweep.methods == [Method.JOINT, Method.AVG_LOCATION]


def test_rician_preset_golden():
    cfg = parse_config("preset: fig4_snr_rician\n")
    shared_values(cfg.scenario)
    assert cfg.scenario.channel == "rician"
    assert cfg.scenario.users == [tuple(u) for u in FIG3_USERS]
    assert cfg.scenario.rician.a1 == 10 ** 0.5 and cfg.scenario.rician.b1 == 10 ** 1.5
    assert cfg.sweep.snr_db == [0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0]


def test_scenario_for_maps_snr_to_power():
    cfg = parse_config("preset: fig4_snr_rician\n")
    sc = cfg.scenario_for(20.0, np.asarray(FIG3_USERS))
    assert sc.power == pytest.approx(100.0, rel=1e-15)
    assert sc.rician is not None and sc.rician.a1 == 10 ** 0.5
    np.testing.assert_array_equal(sc.weights, np.ones(4))
    assert sc.thresholds_per_hz.tolist() == [0.0] * 4


def test_file_overrides_preset():
    cfg = parse_config("preset: fig1_convergence\nsweep:\n  seeds: [3, 4]\nscenario:\n  n_t: 4\n")
    assert cfg.sweep.seeds == [3, 4]
    assert cfg.scenario.n_t == 4 and cfg.scenario.n_users == 2


def test_errors_carry_line_numbers():
    text = "preset: custom\nsweep:\n  seeds: []\n"
    with pytest.raises(ConfigError, match=r"line 3: sweep.seeds: .*seeds must not be empty"):
        parse_config(text)


def test_unknown_key_rejected_with_line():
    with pytest.raises(ConfigError, match=r"line 3: scenario.n_antennas"):
        parse_config("preset: custom\nscenario:\n  n_antennas: 3\n")


def test_unknown_preset_rejected():
    with pytest.raises(ConfigError, match=r"line 1: unknown preset 'fig9'"):
        parse_config("preset: fig9\n")


@pytest.mark.parametrize("text, fragment", [
    ("sweep:\n  snr_db: [.nan]\n", "finite"),
    ("sweep:\n  seeds: [1, 1]\n", "distinct"),
    ("scenario:\n  n_users: 3\n  users: [[0, 0, 0]]\n", "n_users is 3"),
    ("scenario:\n  box:\n    z: [120, 80]\n", "lower bound"),
    ("solver:\n  epsilon: 0\n", "greater than 0"),
    ("[1, 2]\n", "mapping"),
    ("scenario: {\n", "malformed"),
])
def test_invalid_values_rejected(text, fragment):
    with pytest.raises(ConfigError, match=fragment):
        parse_config(text)


def test_empty_text_is_default_config():
    assert parse_config("") == ExperimentConfig()


def test_load_config_from_file(tmp_path):
    path = tmp_path / "exp.yaml"
    path.write_text("preset: fig1_convergence\nsolver:\n  epsilon: 1.0e-5\n")
    cfg = load_config(path)
    assert cfg.solver.epsilon == 1e-5
    params = cfg.solver.joint_params(seed=7)
    assert params.precoder.seed == 7 and math.isclose(params.placement.epsilon, 1e-5)
