import math

import numpy as np
import pytest

from dynamics_engine import (Backend, CompensatedSum, DynamicsEngine, StepParams,
                             em_step, jump_step, ou_step, read_bits, two_state_rates)
from errors import DomainError, IntegrationBlowupError, PrecisionError, UsageError
from model_core import (BathParams, CapacitorSpec, ControlState, PotentialSpec,
                        TwoStateSpec)
from protocols import make_constant_schedule, make_reset_schedule
from rng_streams import NOISE_BLOCK, trajectory_generator


@pytest.fixture
def engine(logger):
    return DynamicsEngine(logger)


@pytest.fixture
def well():
    return PotentialSpec(barrier_height=4.0, well_halfwidth=1.0)


def langevin_step(spec, bath=BathParams()):
    return StepParams(dt=0.01 * bath.gamma * spec.well_halfwidth ** 2 / spec.barrier_height,
                      record_stride=50)


def test_em_step_without_noise_follows_force(well):
    control = ControlState(1.0, 0.0)
    assert em_step(0.0, control, BathParams(), well, 0.001, 0.0) == 0.0
    assert em_step(1.0, control, BathParams(), well, 0.001, 0.0) == 1.0
    # x = 0.5 は障壁側へ押し戻されず、井戸の底 (+1) へ向かう
    assert em_step(0.5, control, BathParams(), well, 0.001, 0.0) > 0.5


def test_em_step_blowup():
    with pytest.raises(IntegrationBlowupError) as info:
        em_step(np.float64(1e200), ControlState(), BathParams(), PotentialSpec(), 0.001,
                0.0, step_index=12)
    assert info.value.step_index == 12


def test_ou_step_deterministic_decay():
    spec = CapacitorSpec(capacitance=1.0, resistance=2.0, setpoint_voltage=1.0)
    assert ou_step(1.0, spec, BathParams(), 0.5, 0.0) == pytest.approx(math.exp(-0.25))
    assert ou_step(1.0, spec, BathParams(), 0.0, 0.0) == 1.0
    with pytest.raises(DomainError):
        ou_step(1.0, spec, BathParams(), -1.0, 0.0)


def test_jump_step():
    assert jump_step(1, 1.0, 0.05, 0.0) == 0
    assert jump_step(1, 1.0, 0.05, 0.99) == 1
    assert jump_step(0, 0.0, 0.05, 0.0) == 0
    with pytest.raises(PrecisionError):
        jump_step(1, 3.0, 0.05, 0.5)


def test_read_bits():
    np.testing.assert_array_equal(read_bits(Backend.LANGEVIN, np.array([-0.3, 0.2])), [0, 1])
    np.testing.assert_array_equal(read_bits(Backend.TWO_STATE, np.array([1.0, 0.0])), [1, 0])


def test_step_count_never_exceeds_dt():
    step = StepParams(dt=0.3)
    assert step.step_count(0.0) == 0
    assert step.step_count(0.9) == 3
    assert step.step_count(1.0) == 4
    assert 1.0 / step.step_count(1.0) <= 0.3


def test_stability_limit(well):
    with pytest.raises(DomainError, match="stability"):
        StepParams(dt=0.01).check_stability(well, BathParams())
    StepParams(dt=0.0025).check_stability(well, BathParams())


def test_compensated_sum_recovers_small_terms():
    total = CompensatedSum(1)
    total.add(np.array([1e16]))
    for _ in range(1000):
        total.add(np.array([1.0]))
    total.add(np.array([-1e16]))
    assert total.value()[0] == 1000.0


def test_zero_duration_schedule_has_empty_ledger(engine, well, bath):
    schedule = make_constant_schedule(0.0, ControlState(1.0, 0.0))
    outcome = engine.evolve_batch(schedule, Backend.LANGEVIN, langevin_step(well), bath,
                                  well, 3, [0, 1])
    np.testing.assert_array_equal(outcome.work, [0.0, 0.0])
    np.testing.assert_array_equal(outcome.heat_to_bath, [0.0, 0.0])
    assert outcome.n_steps == 0


def test_constant_control_does_exactly_zero_work(engine, well, bath):
    schedule = make_constant_schedule(2.0, ControlState(1.0, 0.0))
    outcome = engine.evolve_batch(schedule, Backend.LANGEVIN, langevin_step(well), bath,
                                  well, 1, range(8), p1_initial=0.5,
                                  preequilibration_time=1.0)
    assert np.all(outcome.work == 0.0)
    np.testing.assert_allclose(outcome.heat_to_bath, outcome.u_initial - outcome.u_final,
                               atol=1e-12)


@pytest.mark.parametrize("backend,spec,dt", [
    (Backend.LANGEVIN, PotentialSpec(4.0, 1.0), 0.0025),
    (Backend.TWO_STATE, TwoStateSpec(rate=1.0, p1_initial=0.5), 0.001),
    (Backend.CAPACITOR, CapacitorSpec(1.0, 1.0, 1.5), 0.05),
])
def test_first_law_holds_per_trajectory(engine, bath, backend, spec, dt):
    schedule = make_reset_schedule(2.0, 0.5, 2.0)
    outcome = engine.evolve_batch(schedule, backend, StepParams(dt=dt, record_stride=100),
                                  bath, spec, 9, range(6), p1_initial=0.5,
                                  switch_cost=0.3 if backend is Backend.CAPACITOR else 0.0)
    for ledger in outcome.ledgers():
        assert abs(ledger.first_law_residual) <= 1e-12


def test_reset_schedule_does_work_on_langevin_ensemble(engine, well, bath):
    schedule = make_reset_schedule(4.0, 0.9, 8.0)
    outcome = engine.evolve_batch(schedule, Backend.LANGEVIN, langevin_step(well), bath,
                                  well, 2, range(16), p1_initial=0.5)
    assert np.any(outcome.work != 0.0)


def test_capacitor_switch_cost_is_dissipated(engine, bath):
    spec = CapacitorSpec(1.0, 1.0, 0.0)
    schedule = make_constant_schedule(0.0, ControlState())
    outcome = engine.evolve_batch(schedule, Backend.CAPACITOR, StepParams(dt=0.1), bath,
                                  spec, 0, [0, 1], switch_cost=0.25)
    np.testing.assert_array_equal(outcome.work, [0.25, 0.25])
    np.testing.assert_array_equal(outcome.heat_to_bath, [0.25, 0.25])


def test_trajectory_independent_of_batch_composition(engine, well, bath):
    schedule = make_reset_schedule(1.0, 0.9, 8.0)
    step = langevin_step(well)
    full = engine.evolve_batch(schedule, Backend.LANGEVIN, step, bath, well, 5, range(6),
                               p1_initial=0.5, preequilibration_time=0.5)
    part = engine.evolve_batch(schedule, Backend.LANGEVIN, step, bath, well, 5, [3, 4, 5],
                               p1_initial=0.5, preequilibration_time=0.5)
    np.testing.assert_array_equal(full.work[3:], part.work)
    np.testing.assert_array_equal(full.heat_to_bath[3:], part.heat_to_bath)
    np.testing.assert_array_equal(full.final_states[3:], part.final_states)


def test_evolve_trajectory_ledger(engine, well, bath):
    schedule = make_constant_schedule(1.0, ControlState(1.0, 0.0))
    ledger = engine.evolve_trajectory(1.0, schedule, Backend.LANGEVIN,
                                      langevin_step(well), bath, well, (8, 2))
    assert ledger.seed_path == (8, 2)
    assert ledger.times[0] == 0.0
    assert ledger.times[-1] == pytest.approx(1.0)
    assert ledger.states.shape == ledger.times.shape
    assert ledger.work == 0.0
    with pytest.raises(ValueError):
        ledger.states[0] = 5.0


def test_budget_exhaustion_is_flagged(engine, bath):
    spec = TwoStateSpec(rate=1.0, p1_initial=1.0)
    schedule = make_constant_schedule(10.0, ControlState())
    outcome = engine.evolve_batch(schedule, Backend.TWO_STATE,
                                  StepParams(dt=0.05, max_steps=20), bath, spec, 0, [0, 1])
    assert outcome.budget_exhausted
    assert outcome.n_steps == 20


def test_blowup_reports_seed_path(engine, bath):
    spec = PotentialSpec(4.0, 1.0)
    schedule = make_constant_schedule(0.01, ControlState())
    with np.errstate(all="ignore"):
        with pytest.raises(IntegrationBlowupError) as info:
            engine.evolve_batch(schedule, Backend.LANGEVIN, langevin_step(spec), bath, spec,
                                7, [4], initial=1e200)
    assert info.value.trajectory_index == 4
    assert info.value.seed_path == (7, 4)


def test_two_state_precision_guard(engine, bath):
    spec = TwoStateSpec(rate=10.0, p1_initial=1.0)
    schedule = make_constant_schedule(1.0, ControlState())
    with pytest.raises(PrecisionError):
        engine.evolve_batch(schedule, Backend.TWO_STATE, StepParams(dt=0.05), bath, spec,
                            0, [0])


def test_backend_spec_mismatch(engine, bath):
    schedule = make_constant_schedule(1.0, ControlState())
    with pytest.raises(UsageError):
        engine.evolve_batch(schedule, Backend.CAPACITOR, StepParams(dt=0.1), bath,
                            PotentialSpec(), 0, [0])


def test_backend_parse():
    assert Backend.parse("two-state") is Backend.TWO_STATE
    with pytest.raises(UsageError):
        Backend.parse("quantum")


def test_em_step_single_update_value():
    spec = PotentialSpec(barrier_height=1.0, well_halfwidth=1.0)
    # F(0.5) = −4·E·x·(x² − 1)/x0² = 1.5
    assert em_step(0.5, ControlState(1.0, 0.0), BathParams(), spec, 0.001, 0.0) == \
        pytest.approx(0.5015, abs=1e-15)


def test_em_step_accepts_arrays(well):
    x = np.array([-1.0, 0.0, 0.5])
    stepped = em_step(x, ControlState(), BathParams(), well, 0.001, np.zeros(3))
    expected = [em_step(float(v), ControlState(), BathParams(), well, 0.001, 0.0) for v in x]
    np.testing.assert_array_equal(stepped, expected)


def test_ou_autocorrelation_decays_with_rc():
    spec = CapacitorSpec(capacitance=2.0, resistance=0.5, setpoint_voltage=0.0)
    bath = BathParams()
    rng = np.random.default_rng(5)
    n = 200000
    v0 = rng.standard_normal(n) * math.sqrt(bath.kbt / spec.capacitance)
    v1 = ou_step(v0, spec, bath, spec.rc, rng.standard_normal(n))
    v2 = ou_step(v1, spec, bath, spec.rc, rng.standard_normal(n))
    assert np.corrcoef(v0, v1)[0, 1] == pytest.approx(math.exp(-1.0), abs=0.01)
    assert np.corrcoef(v0, v2)[0, 1] == pytest.approx(math.exp(-2.0), abs=0.01)


def test_jump_step_accepts_arrays():
    flipped = jump_step(np.array([1.0, 0.0, 1.0]), np.array([1.0, 1.0, 0.0]), 0.05,
                        np.array([0.0, 0.01, 0.0]))
    np.testing.assert_array_equal(flipped, [0.0, 1.0, 1.0])


def test_two_state_rates_satisfy_detailed_balance(bath):
    spec = TwoStateSpec(rate=2.0, p1_initial=0.5)
    control = ControlState(1.0, 0.4)
    up, down = two_state_rates(spec, control, bath, np.array([0.0, 1.0]))
    # 傾きが正なら bit 0 の方がエネルギーが低い
    assert up / down == pytest.approx(math.exp(-0.8 / bath.kbt))


def test_langevin_batch_replays_em_step(engine, well, bath):
    schedule = make_constant_schedule(0.5, ControlState(1.0, 0.0))
    params = StepParams(dt=0.0025)
    outcome = engine.evolve_batch(schedule, Backend.LANGEVIN, params, bath, well, 4, [6],
                                  initial=1.0)
    generator = trajectory_generator(4, 6)
    generator.random()
    noise = generator.standard_normal(NOISE_BLOCK)
    n = params.step_count(schedule.duration)
    x = 1.0
    for k in range(n):
        x = em_step(x, ControlState(1.0, 0.0), bath, well, schedule.duration / n, noise[k])
    np.testing.assert_allclose(outcome.final_states[0], x, rtol=1e-13)


def test_capacitor_batch_replays_ou_step(engine, bath):
    spec = CapacitorSpec(1.0, 1.0, 0.7)
    schedule = make_constant_schedule(3.0, ControlState())
    params = StepParams(dt=0.05)
    outcome = engine.evolve_batch(schedule, Backend.CAPACITOR, params, bath, spec, 2, [9],
                                  initial=0.7)
    generator = trajectory_generator(2, 9)
    generator.random()
    noise = generator.standard_normal(NOISE_BLOCK)
    n = params.step_count(schedule.duration)
    v = 0.7
    for k in range(n):
        v = ou_step(v, spec, bath, schedule.duration / n, noise[k])
    np.testing.assert_allclose(outcome.final_states[0], v, rtol=1e-13)


def test_two_state_batch_replays_jump_step(engine, bath):
    spec = TwoStateSpec(rate=1.0, p1_initial=1.0)
    control = ControlState(1.0, 0.3)
    schedule = make_constant_schedule(3.0, control)
    params = StepParams(dt=0.01)
    outcome = engine.evolve_batch(schedule, Backend.TWO_STATE, params, bath, spec, 3,
                                  range(4), initial=1.0)
    n = params.step_count(schedule.duration)
    for position in range(4):
        generator = trajectory_generator(3, position)
        generator.random()
        uniforms = generator.random(NOISE_BLOCK)
        s = 1.0
        for k in range(n):
            rates = two_state_rates(spec, control, bath, s)
            s = jump_step(s, rates, schedule.duration / n, uniforms[k])
        assert outcome.final_states[position] == s


def test_preequilibration_blowup_reports_seed_path(engine):
    spec = PotentialSpec(4.0, 1.0)
    hot = BathParams(kbt=1e300)
    schedule = make_constant_schedule(0.01, ControlState())
    with np.errstate(all="ignore"):
        with pytest.raises(IntegrationBlowupError) as info:
            engine.evolve_batch(schedule, Backend.LANGEVIN, langevin_step(spec, hot), hot,
                                spec, 7, [3, 4], initial=1.0, preequilibration_time=0.05)
    assert info.value.trajectory_index == 3
    assert info.value.seed_path == (7, 3)


def test_preequilibration_from_the_barrier_top_joins_bit_one(engine, well, bath):
    schedule = make_constant_schedule(0.0, ControlState())
    outcome = engine.evolve_batch(schedule, Backend.LANGEVIN, langevin_step(well), bath,
                                  well, 1, range(8), initial=0.0,
                                  preequilibration_time=0.5)
    assert np.all(outcome.final_states > 0)
    np.testing.assert_array_equal(outcome.final_bits, np.ones(8))
