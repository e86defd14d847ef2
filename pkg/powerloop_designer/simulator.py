"""Closed-loop time-domain simulation of the grid-forming power loops.

The nonlinear simulator integrates the power angle and the two controller
integrators in absolute quantities; the constant offsets of the -k13*delta and
-k23*delta feedback terms are absorbed into the integrator initial values at
equilibrium. Both simulators use classical fixed-step RK4.
"""

import math
from typing import List, Sequence

import numpy as np
from loguru import logger

from .exceptions import DomainError, NotSettledError, NumericalBlowupError
from .models import (
    PlantMatrices,
    SetpointEvent,
    SimConfig,
    StepMetrics,
    SystemParams,
    Trajectory,
)
from .pole_design import GainLike, gain_matrix
from .powerflow_model import solve_operating_point

BLOWUP_LIMIT = 1e6
FINAL_VALUE_FRACTION = 0.05


def _event_schedule(events: Sequence[SetpointEvent], cfg: SimConfig) -> List[tuple]:
    """(step index, event) pairs, snapped to the nearest grid point."""
    schedule = []
    for order, event in enumerate(events):
        if not 0.0 <= event.time <= cfg.t_end:
            raise DomainError(f"event time {event.time} outside [0, {cfg.t_end}]")
        schedule.append((int(round(event.time / cfg.dt)), order, event))
    schedule.sort(key=lambda item: (item[0], item[1]))
    return [(index, event) for index, _, event in schedule]


def simulate_nonlinear(
    params: SystemParams,
    gain: GainLike,
    events: Sequence[SetpointEvent],
    cfg: SimConfig,
) -> Trajectory:
    """Simulate the nonlinear closed loop from its pre-event equilibrium.

    Args:
        params: System parameters before any event
        gain: Feedback gain (FeedbackGain or 2x3 array)
        events: Setpoint steps, applied between integration steps
        cfg: Integration settings

    Returns:
        Trajectory with columns t, delta, omega, v, p, q, e1, e2

    Raises:
        NoEquilibriumError: If the initial operating point cannot be solved
        NumericalBlowupError: If a state exceeds 1e6 or becomes non-finite
    """
    k = gain_matrix(gain)
    k11, k12, k13 = (float(v) for v in k[0])
    k21, k22, k23 = (float(v) for v in k[1])
    op = solve_operating_point(params)
    schedule = _event_schedule(events, cfg)

    omega_b, omega_g, v_g = params.omega_b, params.omega_g, params.v_g
    r, x, d_p, d_q = params.r_g, params.x_g, params.d_p, params.d_q
    inv_z = 1.0 / (r * r + x * x)
    setpoints = {
        "omega_set": params.omega_set,
        "p_set": params.p_set,
        "q_set": params.q_set,
        "v_set": params.v_set,
    }
    ref1 = setpoints["omega_set"] + d_p * setpoints["p_set"]
    ref2 = setpoints["v_set"] + d_q * setpoints["q_set"]

    def outputs(delta: float, z1: float, z2: float) -> tuple:
        w_u = z1 - k13 * delta
        e_u = z2 - k23 * delta
        sin_d, cos_d = math.sin(delta), math.cos(delta)
        p = (e_u * e_u * r + e_u * v_g * (x * sin_d - r * cos_d)) * inv_z
        q = (e_u * e_u * x - e_u * v_g * (r * sin_d + x * cos_d)) * inv_z
        return w_u, e_u, p, q, w_u + d_p * p - ref1, e_u + d_q * q - ref2

    def derivative(delta: float, z1: float, z2: float) -> tuple:
        w_u, _, _, _, e1, e2 = outputs(delta, z1, z2)
        return omega_b * (w_u - omega_g), -k11 * e1 - k12 * e2, -k21 * e1 - k22 * e2

    delta = op.delta0
    z1 = omega_g + k13 * op.delta0
    z2 = op.v0 + k23 * op.delta0

    dt = cfg.dt
    n_steps = cfg.n_steps
    n_records = n_steps // cfg.record_every + 1
    records = np.empty((n_records, 8))
    next_event = 0
    logger.debug(f"Nonlinear simulation: {n_steps} steps of {dt:g} s, {len(schedule)} events")

    for step in range(n_steps + 1):
        while next_event < len(schedule) and schedule[next_event][0] == step:
            event = schedule[next_event][1]
            setpoints[event.target] = event.value
            ref1 = setpoints["omega_set"] + d_p * setpoints["p_set"]
            ref2 = setpoints["v_set"] + d_q * setpoints["q_set"]
            logger.debug(f"t={step * dt:.4f}s: {event.target} -> {event.value}")
            next_event += 1

        if step % cfg.record_every == 0:
            w_u, e_u, p, q, e1, e2 = outputs(delta, z1, z2)
            records[step // cfg.record_every] = (step * dt, delta, w_u, e_u, p, q, e1, e2)
        if step == n_steps:
            break

        a0, a1, a2 = derivative(delta, z1, z2)
        b0, b1, b2 = derivative(delta + 0.5 * dt * a0, z1 + 0.5 * dt * a1, z2 + 0.5 * dt * a2)
        c0, c1, c2 = derivative(delta + 0.5 * dt * b0, z1 + 0.5 * dt * b1, z2 + 0.5 * dt * b2)
        d0, d1, d2 = derivative(delta + dt * c0, z1 + dt * c1, z2 + dt * c2)
        delta += dt / 6.0 * (a0 + 2.0 * b0 + 2.0 * c0 + d0)
        z1 += dt / 6.0 * (a1 + 2.0 * b1 + 2.0 * c1 + d1)
        z2 += dt / 6.0 * (a2 + 2.0 * b2 + 2.0 * c2 + d2)

        if not (abs(delta) < BLOWUP_LIMIT and abs(z1) < BLOWUP_LIMIT and abs(z2) < BLOWUP_LIMIT):
            raise NumericalBlowupError(
                f"state diverged at t={(step + 1) * dt:.4f}s", time=(step + 1) * dt, state=(delta, z1, z2)
            )

    columns = dict(zip(("t", "delta", "omega", "v", "p", "q", "e1", "e2"), records.T))
    return Trajectory(kind="nonlinear", d_p=d_p, d_q=d_q, **columns)


def rk4_transition(matrix: np.ndarray, dt: float) -> np.ndarray:
    """One RK4 step of x' = M x written as a matrix: I + hM + (hM)^2/2 + (hM)^3/6 + (hM)^4/24."""
    hm = dt * np.asarray(matrix, dtype=float)
    identity = np.eye(hm.shape[0])
    return identity + hm @ (identity + hm @ (identity / 2.0 + hm @ (identity / 6.0 + hm / 24.0)))


def step_initial_state(params: SystemParams, event: SetpointEvent) -> np.ndarray:
    """Linear state (e1, e2, z) right after a setpoint step from equilibrium.

    The step moves a droop reference, so the error states jump by minus the
    reference change while z stays zero.
    """
    change = event.value - getattr(params, event.target)
    jump = {
        "omega_set": (change, 0.0),
        "p_set": (params.d_p * change, 0.0),
        "v_set": (0.0, change),
        "q_set": (0.0, params.d_q * change),
    }[event.target]
    return np.array([-jump[0], -jump[1], 0.0])


def simulate_linear(
    plant: PlantMatrices,
    gain: GainLike,
    x0: Sequence[float],
    cfg: SimConfig,
) -> Trajectory:
    """Integrate the linear closed loop x' = (A - B K) x.

    The returned trajectory has ``kind == "linear"``: e1, e2 hold the error
    states, ``delta`` holds z, and omega/v/p/q are zero.

    Raises:
        NumericalBlowupError: If a state exceeds 1e6 or becomes non-finite
    """
    state = np.array(x0, dtype=float)
    if state.shape != (3,):
        raise DomainError(f"x0 must have three entries, got shape {state.shape}")
    transition = rk4_transition(plant.closed_loop(gain_matrix(gain)), cfg.dt)

    n_steps = cfg.n_steps
    n_records = n_steps // cfg.record_every + 1
    states = np.empty((n_records, 3))
    for step in range(n_steps + 1):
        if step % cfg.record_every == 0:
            states[step // cfg.record_every] = state
        if step == n_steps:
            break
        state = transition @ state
        if not np.max(np.abs(state)) < BLOWUP_LIMIT:
            raise NumericalBlowupError(
                f"linear state diverged at t={(step + 1) * cfg.dt:.4f}s",
                time=(step + 1) * cfg.dt,
                state=state,
            )

    t = np.arange(n_records) * cfg.record_every * cfg.dt
    zeros = np.zeros(n_records)
    return Trajectory(
        kind="linear",
        t=t,
        delta=states[:, 2],
        omega=zeros,
        v=zeros,
        p=zeros,
        q=zeros,
        e1=states[:, 0],
        e2=states[:, 1],
    )


def step_metrics(
    traj: Trajectory,
    signal: str,
    event_time: float,
    band: float = 0.02,
) -> StepMetrics:
    """Overshoot, peak time and settling time of a step response.

    The final value is the mean of the trailing 5% of samples; settling time is
    the instant after which the signal stays inside +-band*|step| around it.

    Raises:
        DomainError: If the record ends before the event or shows no step
        NotSettledError: If the signal is outside the band at the last sample
    """
    if not 0.0 < band < 1.0:
        raise DomainError(f"band must be in (0, 1), got {band}")
    values = traj.column(signal)
    t = traj.t
    if event_time > t[-1]:
        raise DomainError(f"trajectory ends at {t[-1]:g}s, before the event at {event_time:g}s")

    before = t < event_time
    initial = float(values[before][-1]) if np.any(before) else float(values[0])
    n_tail = max(1, int(round(FINAL_VALUE_FRACTION * len(values))))
    final = float(np.mean(values[-n_tail:]))
    step = final - initial
    if abs(step) <= 1e-12 * max(1.0, abs(final)):
        raise DomainError(f"signal '{signal}' shows no step after t={event_time:g}s")

    after = ~before
    t_after = t[after]
    v_after = values[after]
    excursion = math.copysign(1.0, step) * (v_after - initial)
    peak = int(np.argmax(excursion))
    overshoot = max(0.0, (float(excursion[peak]) - abs(step)) / abs(step) * 100.0)

    outside = np.flatnonzero(np.abs(v_after - final) > band * abs(step))
    if outside.size == 0:
        settling_time = 0.0
    elif outside[-1] == v_after.size - 1:
        raise NotSettledError(
            f"signal '{signal}' is still outside the {band:.0%} band at t={t[-1]:g}s"
        )
    else:
        settling_time = float(t_after[outside[-1] + 1] - event_time)

    return StepMetrics(
        signal=signal,
        overshoot=overshoot,
        settling_time=settling_time,
        peak_time=float(t_after[peak] - event_time),
        final_value=final,
        initial_value=initial,
        band=band,
    )
