import math

import numpy as np
import pytest

from errors import DomainError, RangeOverflowError
from model_core import (AttemptTime, BathParams, CapacitorSpec, ControlState,
                        PotentialSpec, TwoStateSpec, boltzmann_bin_probabilities,
                        capacitor_energy, kramers_attempt_time, kramers_time,
                        potential_energy, potential_force, two_state_energy,
                        two_state_relaxation)


def test_symmetric_well_minima_and_barrier():
    spec = PotentialSpec(barrier_height=10.0, well_halfwidth=1.0)
    control = ControlState(1.0, 0.0)
    assert potential_energy(spec, control, 1.0) == 0.0
    assert potential_energy(spec, control, -1.0) == 0.0
    assert potential_energy(spec, control, 0.0) == 10.0


def test_tilt_raises_bit_one_well():
    spec = PotentialSpec(4.0, 2.0)
    control = ControlState(1.0, 3.0)
    assert potential_energy(spec, control, 2.0) == pytest.approx(3.0)
    assert potential_energy(spec, control, -2.0) == pytest.approx(-3.0)


def test_force_is_negative_gradient():
    spec = PotentialSpec(6.0, 1.5)
    control = ControlState(0.4, -1.2)
    x = np.linspace(-3.0, 3.0, 41)
    h = 1e-6
    numeric = -(potential_energy(spec, control, x + h)
                - potential_energy(spec, control, x - h)) / (2 * h)
    np.testing.assert_allclose(potential_force(spec, control, x), numeric,
                               rtol=1e-6, atol=1e-5)


def test_non_finite_position_rejected():
    with pytest.raises(DomainError):
        potential_energy(PotentialSpec(), ControlState(), math.nan)
    with pytest.raises(DomainError):
        potential_force(PotentialSpec(), ControlState(), np.array([0.0, math.inf]))


@pytest.mark.parametrize("kwargs", [
    {"barrier_scale": 1.5},
    {"barrier_scale": -0.1},
    {"tilt": math.inf},
])
def test_control_state_invariants(kwargs):
    with pytest.raises(DomainError, match="ControlState"):
        ControlState(**kwargs)


def test_spec_invariants():
    with pytest.raises(DomainError):
        BathParams(kbt=0.0)
    with pytest.raises(DomainError):
        PotentialSpec(barrier_height=-1.0)
    with pytest.raises(DomainError):
        CapacitorSpec(capacitance=0.0)
    with pytest.raises(DomainError):
        TwoStateSpec(p1_initial=1.2)
    with pytest.raises(DomainError):
        AttemptTime(0.0)


def test_kramers_time():
    bath = BathParams()
    assert kramers_time(AttemptTime(1.0), 0.0, bath) == 1.0
    assert kramers_time(AttemptTime(2.0), 4.0, bath) == pytest.approx(2.0 * math.exp(4.0))
    # k_BT を2倍にすると指数が半分になる
    hot = BathParams(kbt=2.0)
    assert kramers_time(AttemptTime(1.0), 4.0, hot) == pytest.approx(math.exp(2.0))


def test_kramers_time_overflow_carries_exponent():
    with pytest.raises(RangeOverflowError) as info:
        kramers_time(AttemptTime(1.0), 1000.0, BathParams())
    assert info.value.exponent == 1000.0


def test_kramers_time_negative_barrier():
    with pytest.raises(DomainError):
        kramers_time(AttemptTime(1.0), -1.0, BathParams())


def test_kramers_attempt_time_from_curvature():
    tau0 = kramers_attempt_time(PotentialSpec(4.0, 1.0), BathParams())
    assert tau0.tau0 == pytest.approx(2.0 * math.pi / math.sqrt(32.0 * 16.0))
    wider = kramers_attempt_time(PotentialSpec(4.0, 2.0), BathParams())
    assert wider.tau0 == pytest.approx(4.0 * tau0.tau0)


def test_two_state_relaxation():
    spec = TwoStateSpec(rate=0.5, p1_initial=1.0)
    assert two_state_relaxation(spec, 0.0) == 1.0
    assert two_state_relaxation(spec, 1.0) == pytest.approx(0.5 + 0.5 * math.exp(-1.0))
    assert two_state_relaxation(spec, 1e3) == pytest.approx(0.5)
    with pytest.raises(DomainError):
        two_state_relaxation(spec, -1.0)


def test_two_state_energy_matches_well_bottoms():
    control = ControlState(1.0, 0.7)
    np.testing.assert_allclose(two_state_energy(control, [1, 0]), [0.7, -0.7])


def test_capacitor_energy():
    spec = CapacitorSpec(capacitance=2.0, resistance=1.0, setpoint_voltage=3.0)
    assert capacitor_energy(spec, 3.0) == pytest.approx(9.0)
    assert spec.stored_energy == pytest.approx(9.0)
    assert spec.rc == 2.0


def test_boltzmann_bins_normalized_and_symmetric():
    edges = np.array([-np.inf, -1.0, 0.0, 1.0, np.inf])
    p = boltzmann_bin_probabilities(PotentialSpec(3.0, 1.0), ControlState(1.0, 0.0),
                                    BathParams(), edges)
    assert p.sum() == pytest.approx(1.0)
    assert p[0] == pytest.approx(p[3], rel=1e-6)
    assert p[1] == pytest.approx(p[2], rel=1e-6)


def test_boltzmann_bins_follow_tilt():
    edges = np.array([-np.inf, 0.0, np.inf])
    p = boltzmann_bin_probabilities(PotentialSpec(3.0, 1.0), ControlState(1.0, 1.0),
                                    BathParams(), edges)
    # 正の傾きは bit 0 側 (x < 0) を有利にする
    assert p[0] > p[1]


def test_untilted_potential_is_even():
    spec = PotentialSpec(barrier_height=3.0, well_halfwidth=1.5)
    control = ControlState(0.6, 0.0)
    x = np.linspace(-3.0, 3.0, 61)
    np.testing.assert_array_equal(potential_energy(spec, control, x),
                                  potential_energy(spec, control, -x))


def test_kramers_time_grows_with_barrier():
    tau0 = AttemptTime(0.5)
    times = [kramers_time(tau0, e, BathParams()) for e in (0.0, 1.0, 2.0, 4.0, 8.0)]
    assert times[0] == pytest.approx(0.5)
    assert all(a < b for a, b in zip(times, times[1:]))


def test_two_state_relaxation_composes_over_time():
    spec = TwoStateSpec(rate=0.7, p1_initial=0.95)
    for t, s in [(0.1, 0.3), (0.5, 1.2), (2.0, 0.0)]:
        midway = two_state_relaxation(spec, s)
        continued = two_state_relaxation(TwoStateSpec(rate=0.7, p1_initial=midway), t)
        assert continued == pytest.approx(two_state_relaxation(spec, t + s), abs=1e-14)
