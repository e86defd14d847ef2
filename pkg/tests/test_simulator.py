from pathlib import Path
import math
import sys

import numpy as np
import pytest
import scipy.linalg

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from powerloop_designer.exceptions import DomainError, NotSettledError, NumericalBlowupError
from powerloop_designer.models import FeedbackGain, PlantMatrices, SetpointEvent, SimConfig, SystemParams, Trajectory
from powerloop_designer.pole_design import place_poles, po_from_damping, spec_to_targets
from powerloop_designer.powerflow_model import compute_power, linearize, solve_operating_point
from powerloop_designer.simulator import (
    rk4_transition,
    simulate_linear,
    simulate_nonlinear,
    step_initial_state,
    step_metrics,
)
from powerloop_designer.statespace import build_state_space
from powerloop_designer.verification import (
    PUBLISHED_GAINS,
    REFERENCE_CASES,
    second_order_step,
    signal_trajectory,
)


def make_plant(params: SystemParams) -> PlantMatrices:
    return build_state_space(params, linearize(params, solve_operating_point(params)))


def make_gain(case_name: str, params: SystemParams = SystemParams()) -> FeedbackGain:
    case = next(c for c in REFERENCE_CASES if c.name == case_name)
    return place_poles(make_plant(params), spec_to_targets(case.to_performance_spec()))


def power_step(time: float = 0.2, value: float = 1.0) -> SetpointEvent:
    return SetpointEvent(time=time, target="p_set", value=value)


# Nonlinear closed loop

@pytest.mark.parametrize("case_name", [c.name for c in REFERENCE_CASES])
def test_equilibrium_is_held_without_events(case_name: str) -> None:
    params = SystemParams()
    op = solve_operating_point(params)
    p0, q0 = compute_power(params, op.delta0, op.v0)

    cfg = SimConfig(t_end=10.0, dt=1e-3, record_every=100)
    traj = simulate_nonlinear(params, make_gain(case_name), [], cfg)

    assert traj.t[-1] == pytest.approx(10.0)
    assert np.max(np.abs(traj.p - p0)) < 1e-9
    assert np.max(np.abs(traj.q - q0)) < 1e-9
    assert np.max(np.abs(traj.delta - op.delta0)) < 1e-9
    assert np.max(np.abs(traj.omega - traj.omega[0])) < 1e-9
    assert np.max(np.abs(traj.v - op.v0)) < 1e-9
    assert np.max(np.abs(traj.e1)) < 1e-9
    assert np.max(np.abs(traj.e2)) < 1e-9


def test_power_step_reaches_the_new_setpoint() -> None:
    params = SystemParams()
    cfg = SimConfig(t_end=4.0, dt=1e-3, record_every=10)
    traj = simulate_nonlinear(params, make_gain("case3"), [power_step()], cfg)

    assert traj.kind == "nonlinear"
    assert len(traj) == 401
    assert traj.t[-1] == pytest.approx(4.0)
    assert traj.p[-1] == pytest.approx(1.0, abs=1e-3)
    assert traj.omega[-1] == pytest.approx(params.omega_g, abs=1e-6)
    # frequency droop law: omega + d_p * p settles on omega_set + d_p * p_set
    assert traj.y1[-1] == pytest.approx(params.omega_set + params.d_p * 1.0, abs=1e-6)
    assert traj.y2[-1] == pytest.approx(params.v_set + params.d_q * params.q_set, abs=1e-6)


def test_event_before_the_step_leaves_the_prefix_untouched() -> None:
    params = SystemParams()
    cfg = SimConfig(t_end=1.0, dt=1e-3)
    traj = simulate_nonlinear(params, make_gain("case1"), [power_step(time=0.5)], cfg)
    before = traj.t < 0.5
    assert np.ptp(traj.p[before]) < 1e-8
    assert traj.e1[500] == pytest.approx(-params.d_p * 0.5, rel=1e-6)


def test_event_outside_horizon_is_rejected() -> None:
    with pytest.raises(DomainError):
        simulate_nonlinear(SystemParams(), make_gain("case1"), [power_step(time=2.0)], SimConfig(t_end=1.0))


def test_voltage_step_moves_the_voltage_droop_output() -> None:
    params = SystemParams()
    event = SetpointEvent(time=0.1, target="v_set", value=1.02)
    traj = simulate_nonlinear(params, make_gain("case3"), [event], SimConfig(t_end=3.0, dt=1e-3))
    assert traj.y2[-1] == pytest.approx(1.02 + params.d_q * params.q_set, abs=1e-5)
    assert traj.p[-1] == pytest.approx(params.p_set, abs=1e-4)


def test_published_gain_runs_the_reference_step() -> None:
    params = SystemParams()
    cfg = SimConfig(t_end=5.0, dt=1e-3, record_every=5)
    traj = simulate_nonlinear(params, PUBLISHED_GAINS["case1"], [power_step(time=1.0)], cfg)
    metrics = step_metrics(traj, "p", 1.0)
    assert metrics.final_value == pytest.approx(1.0, abs=1e-3)
    assert metrics.overshoot == pytest.approx(po_from_damping(0.4), abs=3.0)


# Linear closed loop

def test_zero_gain_integrates_the_open_loop_ramp() -> None:
    plant = make_plant(SystemParams())
    traj = simulate_linear(plant, np.zeros((2, 3)), [0.0, 0.0, 1.0], SimConfig(t_end=1.0, dt=1e-3))
    assert traj.kind == "linear"
    np.testing.assert_allclose(traj.e1, plant.a[0, 2] * traj.t, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(traj.e2, plant.a[1, 2] * traj.t, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(traj.delta, 1.0)
    assert not traj.p.any()


def test_rk4_transition_matches_the_exponential() -> None:
    m = np.array([[-1.0, 2.0, 0.0], [0.0, -3.0, 1.0], [0.5, 0.0, -2.0]])
    np.testing.assert_allclose(rk4_transition(m, 1e-3), scipy.linalg.expm(1e-3 * m), atol=1e-14)


def test_halving_the_step_shrinks_the_error_by_rk4_order() -> None:
    plant = make_plant(SystemParams())
    gain = make_gain("case1")
    x0 = np.array([-1.0, 0.0, 0.0])
    exact = scipy.linalg.expm(plant.closed_loop(gain.k) * 0.5) @ x0

    errors = []
    for dt in (4e-3, 2e-3):
        traj = simulate_linear(plant, gain, x0, SimConfig(t_end=0.5, dt=dt))
        final = np.array([traj.e1[-1], traj.e2[-1], traj.delta[-1]])
        errors.append(float(np.max(np.abs(final - exact))))

    assert errors[1] < errors[0] / 8.0
    assert errors[1] < 1e-7 * np.max(np.abs(exact))


def test_quartering_the_step_shrinks_the_nonlinear_error_a_hundredfold() -> None:
    params = SystemParams()
    gain = make_gain("case1")
    event = power_step(time=0.0)

    def states(dt: float) -> np.ndarray:
        # every run records on the same 0.02 s grid
        cfg = SimConfig(t_end=1.0, dt=dt, record_every=int(round(0.02 / dt)))
        traj = simulate_nonlinear(params, gain, [event], cfg)
        return np.column_stack([traj.delta, traj.e1, traj.e2])

    coarse, fine, reference = states(4e-3), states(1e-3), states(2.5e-4)
    assert coarse.shape == fine.shape == reference.shape == (51, 3)

    coarse_error = float(np.max(np.abs(coarse - reference)))
    fine_error = float(np.max(np.abs(fine - reference)))
    assert coarse_error > 0.0
    assert fine_error * 100.0 <= coarse_error


@pytest.mark.parametrize("case_name", [c.name for c in REFERENCE_CASES])
def test_linear_and_nonlinear_agree_for_small_steps(case_name: str) -> None:
    params = SystemParams()
    step = 0.02
    event = SetpointEvent(time=0.0, target="p_set", value=params.p_set + step)
    cfg = SimConfig(t_end=4.0, dt=1e-3, record_every=5)
    gain = make_gain(case_name)

    nonlinear = simulate_nonlinear(params, gain, [event], cfg)
    linear = simulate_linear(make_plant(params), gain, step_initial_state(params, event), cfg)

    np.testing.assert_allclose(nonlinear.t, linear.t)
    assert float(np.max(np.abs(nonlinear.e1 - linear.e1))) <= 0.02 * step
    assert float(np.max(np.abs(nonlinear.e2 - linear.e2))) <= 0.02 * step
    scale = float(np.max(np.abs(linear.e1)))
    assert float(np.max(np.abs(nonlinear.e1 - linear.e1))) <= 0.05 * scale


@pytest.mark.parametrize("case_name", [c.name for c in REFERENCE_CASES])
def test_placed_loop_decays_within_ten_time_constants(case_name: str) -> None:
    plant = make_plant(SystemParams())
    gain = make_gain(case_name)
    tau = 1.0 / float(np.min(-gain.achieved_eigs.real))
    x0 = np.random.default_rng(3).normal(size=3)

    traj = simulate_linear(plant, gain, x0 / np.linalg.norm(x0), SimConfig(t_end=10 * tau, dt=1e-3, record_every=10))
    norms = np.sqrt(traj.e1**2 + traj.e2**2 + traj.delta**2)
    assert norms[-1] < 1e-3 * norms.max()


def test_destabilizing_gain_blows_up() -> None:
    plant = make_plant(SystemParams())
    with pytest.raises(NumericalBlowupError) as excinfo:
        simulate_linear(plant, -np.array(PUBLISHED_GAINS["case1"]), [1.0, 0.0, 0.0], SimConfig(t_end=5.0, dt=1e-3))
    assert 0.0 < excinfo.value.time <= 5.0
    assert len(excinfo.value.state) == 3


def test_initial_state_must_have_three_entries() -> None:
    with pytest.raises(DomainError):
        simulate_linear(make_plant(SystemParams()), np.zeros((2, 3)), [1.0, 0.0], SimConfig(t_end=1.0))


@pytest.mark.parametrize(
    "target,value,expected",
    [
        ("p_set", 1.0, (-0.005, 0.0, 0.0)),
        ("omega_set", 1.01, (-0.01, 0.0, 0.0)),
        ("q_set", 0.1, (0.0, -0.005, 0.0)),
        ("v_set", 1.05, (0.0, -0.05, 0.0)),
    ],
)
def test_step_initial_state(target: str, value: float, expected: tuple) -> None:
    event = SetpointEvent(time=0.0, target=target, value=value)
    np.testing.assert_allclose(step_initial_state(SystemParams(), event), expected, atol=1e-15)


# Step metrics

def analytic_trajectory(xi: float, omega_n: float, t_end: float = 4.0, event_time: float = 0.0) -> Trajectory:
    t = np.arange(0.0, t_end + 5e-4, 1e-3)
    shifted = np.clip(t - event_time, 0.0, None)
    return signal_trajectory(t, second_order_step(xi, omega_n, shifted))


@pytest.mark.parametrize(
    "xi,omega_n,settling",
    [(0.4, 10.0, 0.841), (0.707, 5.66, 1.054)],
)
def test_second_order_metrics(xi: float, omega_n: float, settling: float) -> None:
    metrics = step_metrics(analytic_trajectory(xi, omega_n), "p", 0.0)

    assert metrics.overshoot == pytest.approx(po_from_damping(xi), abs=0.2)
    assert metrics.settling_time == pytest.approx(settling, abs=0.02)
    assert abs(metrics.settling_time - 4.0 / (xi * omega_n)) <= 0.2 * 4.0 / (xi * omega_n)
    assert metrics.peak_time == pytest.approx(math.pi / (omega_n * math.sqrt(1 - xi * xi)), abs=2e-3)
    assert metrics.initial_value == pytest.approx(0.0, abs=1e-12)
    assert metrics.final_value == pytest.approx(1.0, abs=1e-4)


def test_metrics_are_measured_from_the_event() -> None:
    early = step_metrics(analytic_trajectory(0.4, 10.0), "p", 0.0)
    late = step_metrics(analytic_trajectory(0.4, 10.0, t_end=5.0, event_time=1.0), "p", 1.0)
    assert late.settling_time == pytest.approx(early.settling_time, abs=2e-3)
    assert late.peak_time == pytest.approx(early.peak_time, abs=2e-3)


def test_downward_step_has_the_same_overshoot() -> None:
    t = np.arange(0.0, 4.0005, 1e-3)
    down = signal_trajectory(t, 1.0 - 0.5 * second_order_step(0.4, 10.0, t))
    metrics = step_metrics(down, "p", 0.0)
    assert metrics.overshoot == pytest.approx(po_from_damping(0.4), abs=0.2)
    assert metrics.final_value == pytest.approx(0.5, abs=1e-4)


def test_first_order_response_has_no_overshoot() -> None:
    t = np.arange(0.0, 3.0005, 1e-3)
    metrics = step_metrics(signal_trajectory(t, 1.0 - np.exp(-t / 0.2)), "p", 0.0)
    assert metrics.overshoot < 1e-3
    assert metrics.settling_time == pytest.approx(0.2 * math.log(50.0), abs=5e-3)


def test_unsettled_signal_is_reported() -> None:
    t = np.linspace(0.0, 3.0, 301)
    with pytest.raises(NotSettledError):
        step_metrics(signal_trajectory(t, t), "p", 0.0)


def test_flat_signal_has_no_step() -> None:
    t = np.linspace(0.0, 1.0, 101)
    with pytest.raises(DomainError):
        step_metrics(signal_trajectory(t, np.full_like(t, 0.5)), "p", 0.0)


def test_event_after_the_record_is_rejected() -> None:
    with pytest.raises(DomainError):
        step_metrics(analytic_trajectory(0.4, 10.0, t_end=1.0), "p", 2.0)


def test_band_must_be_a_fraction() -> None:
    with pytest.raises(DomainError):
        step_metrics(analytic_trajectory(0.4, 10.0), "p", 0.0, band=0.0)


def test_unknown_signal_is_rejected() -> None:
    with pytest.raises(KeyError):
        step_metrics(analytic_trajectory(0.4, 10.0), "power", 0.0)
