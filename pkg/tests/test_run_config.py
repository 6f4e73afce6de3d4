from pathlib import Path

import pytest

from dynamics_engine import Backend
from errors import ConfigError
from run_config import default_workers, parse_config, render_config


def parse(text):
    return parse_config(text.strip() + "\n")


def test_defaults_are_resolved():
    config = parse("[experiment]\nname = reset")
    assert config.backend is Backend.LANGEVIN
    assert config.n_trajectories == 1000
    assert config.master_seed == 0
    assert config.potential.barrier_height == 10.0
    assert config.protocol.tilt_peak == 20.0
    assert config.protocol.p1_initial == 0.5
    assert config.protocol.preequilibration_time == 5.0
    assert config.dt == pytest.approx(0.001)
    assert config.sweep is None
    assert config.explicit == (("experiment.name", "reset"),)


def test_backend_default_dt():
    capacitor = parse("[experiment]\nname = capacitor_ite\n[capacitor]\nresistance = 2")
    assert capacitor.backend is Backend.CAPACITOR
    assert capacitor.dt == pytest.approx(0.2)
    two_state = parse("[experiment]\nname = passive_ite\nbackend = two-state\n"
                      "[two_state]\nrate = 0.5")
    assert two_state.dt == pytest.approx(0.1)
    assert two_state.protocol.p1_initial == 1.0


def test_invariant_violation_names_key_and_type():
    with pytest.raises(ConfigError) as info:
        parse("[experiment]\nname = ensemble\n[control]\nbarrier_scale = 1.5")
    assert info.value.key_path == "control.barrier_scale"
    assert "ControlState" in str(info.value)


@pytest.mark.parametrize("text, key_path", [
    ("[experiment]\nname = reset\n[integration]\ndt = -0.1", "integration.dt"),
    ("[experiment]\nname = reset\n[potential]\nheight = 3", "potential.height"),
    ("[experiment]\nname = reset\n[bogus]\nx = 1", "bogus"),
    ("[bath]\nkbt = 1", "experiment.name"),
    ("[experiment]\nname = erase_everything", "experiment.name"),
    ("[experiment]\nname = reset\nbackend = capacitor", "experiment.backend"),
    ("[experiment]\nname = reset\nn_trajectories = 1", "experiment.n_trajectories"),
    ("[experiment]\nname = reset\n[bath]\nkbt = abc", "bath.kbt"),
    ("[experiment]\nname = reset\n[bath]\nkbt = inf", "bath.kbt"),
    ("[experiment]\nname = reset\n[integration]\ndt = 0.01", "integration.dt"),
    ("[experiment]\nname = ensemble\n[sweep]\naxis = bath.kbt\nvalues = 2 1", "sweep.values"),
    ("[experiment]\nname = ensemble\n[sweep]\naxis = experiment.output\nvalues = 1",
     "sweep.axis"),
    ("[experiment]\nname = ensemble\n[sweep]\nvalues = 1 2", "sweep.axis"),
])
def test_config_errors_carry_key_path(text, key_path):
    with pytest.raises(ConfigError) as info:
        parse(text)
    assert info.value.key_path == key_path


def test_config_error_maps_to_usage_exit_code():
    with pytest.raises(ConfigError) as info:
        parse("[experiment]\nname = reset\n[potential]\nbarrier_height = 0")
    assert info.value.exit_code == 2


def test_mfpt_skips_dt_stability_check():
    config = parse("[experiment]\nname = mfpt\n[integration]\ndt = 0.01")
    assert config.dt == 0.01


def test_sweep_values_parsed():
    config = parse("[experiment]\nname = error_vs_dissipation\n"
                   "[sweep]\naxis = protocol.duration\nvalues = 0.01, 0.1 1")
    assert config.sweep.axis == "protocol.duration"
    assert config.sweep.values == (0.01, 0.1, 1.0)


def test_with_value_recomputes_derived_defaults():
    config = parse("[experiment]\nname = reset\nseed = 7")
    swept = config.with_value("potential.barrier_height", 8.0)
    assert swept.potential.barrier_height == 8.0
    assert swept.dt == pytest.approx(0.01 / 8)
    assert swept.protocol.tilt_peak == 16.0
    assert swept.master_seed == 7


def test_with_value_keeps_explicit_settings():
    config = parse("[experiment]\nname = reset\n[protocol]\ntilt_peak = 3.5")
    swept = config.with_value("potential.barrier_height", 8.0)
    assert swept.protocol.tilt_peak == 3.5


def test_render_config_round_trip():
    config = parse("""
[experiment]
name = capacitor_ite
n_trajectories = 500
seed = 3
[capacitor]
setpoint_voltage = 0.7071067811865476
switch_cost = 0.25
""")
    again = parse_config(render_config(config))
    assert again.to_dict() == config.to_dict()


def test_with_seed_and_to_dict():
    config = parse("[experiment]\nname = reset\noutput = out.jsonl").with_seed(11)
    resolved = config.to_dict()
    assert resolved["master_seed"] == 11
    assert resolved["backend"] == "langevin"
    assert "output" not in resolved
    assert "explicit" not in resolved
    assert resolved["protocol"]["tilt_peak"] == 20.0


def test_default_workers_from_environment(monkeypatch):
    monkeypatch.setenv("ERASURE_WORKERS", "3")
    assert default_workers() == 3
    monkeypatch.setenv("ERASURE_WORKERS", "0")
    assert default_workers() == 1


@pytest.mark.parametrize("path", sorted(
    (Path(__file__).resolve().parent.parent / "configs").glob("*.cfg")), ids=lambda p: p.name)
def test_shipped_configs_parse(path):
    config = parse_config(path.read_text(encoding="utf-8"))
    assert config.experiment
