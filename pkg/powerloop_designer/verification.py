"""Built-in regression fixtures for the design and simulation pipeline.

The fixtures run on the reference hardware parameters (0.087 p.u. inductive
line, 1% P-f and 5% Q-V droop, 0.5 p.u. active power) and the four reference
placement cases, and compare against the published design numbers.
"""

import math
from typing import Callable, Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from loguru import logger

from .exceptions import DomainError, PowerLoopError
from .models import (
    CaseSpec,
    DesignConfig,
    EigenvalueTargets,
    FeedbackGain,
    FixtureResult,
    PerformanceSpec,
    PlantMatrices,
    SetpointEvent,
    SimConfig,
    SimSettings,
    SystemParams,
    Trajectory,
)
from .pole_design import (
    DEFAULT_PARAMETER_MATRIX,
    closed_loop_eigs,
    eigenvalue_mismatch,
    place_poles,
    placement_certificate,
    po_from_damping,
    spec_to_targets,
)
from .powerflow_model import compute_power, linearize, power_sensitivities, solve_operating_point
from .simulator import simulate_linear, simulate_nonlinear, step_initial_state, step_metrics
from .statespace import build_state_space, controllability, controllability_matrix, rank_criterion

REFERENCE_SYSTEM = SystemParams()

REFERENCE_CASES: Tuple[CaseSpec, ...] = (
    CaseSpec(name="case1", xi=0.4, ts=1.0, a=20.0),
    CaseSpec(name="case2", xi=0.4, ts=2.0, a=20.0),
    CaseSpec(name="case3", xi=0.707, ts=1.0, a=20.0),
    CaseSpec(name="case4", xi=0.707, ts=2.0, a=20.0),
)

# Published gains, rounded to four decimals.
PUBLISHED_GAINS: Dict[str, Tuple[Tuple[float, float, float], Tuple[float, float, float]]] = {
    "case1": ((2.7756, -0.0088, 0.0166), (0.0367, 12.7007, 0.0161)),
    "case2": ((0.6939, -0.0022, 0.0105), (0.0389, 12.7007, 0.0161)),
    "case3": ((0.8885, -0.0028, 0.0226), (0.0385, 12.7007, 0.0161)),
    "case4": ((0.2221, -0.0007, 0.0120), (0.0399, 12.7007, 0.0161)),
}

PUBLISHED_OPERATING_POINT = (0.0435, 0.9997)
PUBLISHED_LINEARIZED_GAINS = (11.4761, 0.5002, 0.5000, 11.4939)
PUBLISHED_A = ((0.0, 0.0, 0.1148), (0.0, 0.0, 0.025), (0.0, 0.0, 0.0))
PUBLISHED_B = ((1.0, 0.005), (0.0, 1.5747), (314.1593, 0.0))
PUBLISHED_P = (
    (1.0, 0.005, 36.0533, 0.0, 0.0, 0.0),
    (0.0, 1.5747, 7.854, 0.0, 0.0, 0.0),
    (314.1593, 0.0, 0.0, 0.0, 0.0, 0.0),
)

REFERENCE_STEP = SetpointEvent(time=1.0, target="p_set", value=1.0)
REFERENCE_T_END = 8.0
SMALL_STEP = 0.02


def reference_config() -> DesignConfig:
    """Reference system, the four cases and the 0.5 -> 1.0 p.u. power step."""
    return DesignConfig(
        system=REFERENCE_SYSTEM,
        cases=list(REFERENCE_CASES),
        sim=SimSettings(t_end=REFERENCE_T_END, events=[REFERENCE_STEP]),
    )


def published_gain_for(spec: PerformanceSpec) -> Optional[np.ndarray]:
    """Published gain of the reference case with the same (xi, ts, a), if any."""
    for case in REFERENCE_CASES:
        if (
            math.isclose(case.damping, spec.xi, rel_tol=1e-9)
            and math.isclose(case.ts, spec.ts, rel_tol=1e-9)
            and math.isclose(case.a, spec.a, rel_tol=1e-9)
        ):
            return np.array(PUBLISHED_GAINS[case.name])
    return None


def second_order_step(xi: float, omega_n: float, t: np.ndarray) -> np.ndarray:
    """Unit step response of omega_n^2 / (s^2 + 2 xi omega_n s + omega_n^2)."""
    root = math.sqrt(1.0 - xi * xi)
    omega_d = omega_n * root
    phase = math.acos(xi)
    return 1.0 - np.exp(-xi * omega_n * t) / root * np.sin(omega_d * t + phase)


def signal_trajectory(t: np.ndarray, values: np.ndarray) -> Trajectory:
    """Wrap one sampled signal as the ``p`` column of a trajectory."""
    zeros = np.zeros_like(t)
    return Trajectory(t=t, delta=zeros, omega=zeros, v=zeros, p=values, q=zeros, e1=zeros, e2=zeros)


def _relative_error(measured: Iterable[float], expected: Iterable[float]) -> float:
    """Worst entrywise relative error over the nonzero expected entries."""
    worst = 0.0
    for m, e in zip(np.ravel(list(measured)), np.ravel(list(expected))):
        if e != 0.0:
            worst = max(worst, abs(m - e) / abs(e))
    return worst


def _reference_plant(params: SystemParams = REFERENCE_SYSTEM) -> PlantMatrices:
    op = solve_operating_point(params)
    return build_state_space(params, linearize(params, op))


PlacedCase = Tuple[CaseSpec, PlantMatrices, EigenvalueTargets, FeedbackGain]


def _placed_cases(params: SystemParams = REFERENCE_SYSTEM) -> List[PlacedCase]:
    plant = _reference_plant(params)
    placed = []
    for case in REFERENCE_CASES:
        targets = spec_to_targets(case.to_performance_spec())
        placed.append((case, plant, targets, place_poles(plant, targets)))
    return placed


class Fixture(NamedTuple):
    """A named regression check and its default tolerance."""

    name: str
    description: str
    tolerance: float
    check: Callable[[float], Tuple[float, bool, str]]


def check_operating_point(tolerance: float) -> Tuple[float, bool, str]:
    op = solve_operating_point(REFERENCE_SYSTEM)
    error = max(abs(op.delta0 - PUBLISHED_OPERATING_POINT[0]), abs(op.v0 - PUBLISHED_OPERATING_POINT[1]))
    return error, error <= tolerance, f"delta0={op.delta0:.6f} rad, V0={op.v0:.6f} p.u."


def check_linearized_gains(tolerance: float) -> Tuple[float, bool, str]:
    gains = linearize(REFERENCE_SYSTEM, solve_operating_point(REFERENCE_SYSTEM))
    error = _relative_error(gains.as_tuple(), PUBLISHED_LINEARIZED_GAINS)
    detail = ", ".join(f"{v:.4f}" for v in gains.as_tuple())
    return error, error <= tolerance, f"(K_pd, K_pV, K_qd, K_qV) = ({detail})"


def check_state_space(tolerance: float) -> Tuple[float, bool, str]:
    plant = _reference_plant()
    error = max(_relative_error(plant.a, PUBLISHED_A), _relative_error(plant.b, PUBLISHED_B))
    return error, error <= tolerance, f"A[0,2]={plant.a[0, 2]:.4f}, B[1,1]={plant.b[1, 1]:.4f}"


def check_controllability(tolerance: float) -> Tuple[float, bool, str]:
    plant = _reference_plant()
    report = controllability(plant)
    error = _relative_error(controllability_matrix(plant), PUBLISHED_P)
    passed = error <= tolerance and report.rank == 3
    return error, passed, f"rank {report.rank}, P[0,2]={report.p_matrix[0, 2]:.4f}"


def check_placement(tolerance: float) -> Tuple[float, bool, str]:
    worst = 0.0
    fallbacks = []
    for case, plant, targets, gain in _placed_cases():
        worst = max(worst, gain.max_rel_error, placement_certificate(plant, gain, targets))
        if not np.array_equal(gain.parameter_matrix, DEFAULT_PARAMETER_MATRIX):
            fallbacks.append(case.name)
    detail = "eigenvalue and coefficient errors over all cases"
    if fallbacks:
        detail += f"; fell back from the default parameter matrix: {', '.join(fallbacks)}"
    return worst, worst <= tolerance and not fallbacks, detail


def check_published_gains(tolerance: float) -> Tuple[float, bool, str]:
    plant = _reference_plant()
    worst = 0.0
    lines: List[str] = []
    for case in REFERENCE_CASES:
        targets = spec_to_targets(case.to_performance_spec())
        achieved = closed_loop_eigs(plant, PUBLISHED_GAINS[case.name])
        error = eigenvalue_mismatch(achieved, targets.lambdas)
        worst = max(worst, error)
        if error > tolerance:
            roots = ", ".join(f"{z.real:.4f}{z.imag:+.4f}j" for z in achieved)
            lines.append(f"{case.name}: roots {roots}")
    return worst, worst <= tolerance, "; ".join(lines) or "all published gains near their targets"


def check_sensitivities(tolerance: float) -> Tuple[float, bool, str]:
    rng = np.random.default_rng(7)
    step = 5e-6
    worst = 0.0
    for _ in range(100):
        params = SystemParams(r_g=rng.uniform(0.0, 0.1), x_g=rng.uniform(0.05, 0.2), v_g=rng.uniform(0.9, 1.1))
        delta, v = rng.uniform(-1.4, 1.4), rng.uniform(0.7, 1.3)
        analytic = power_sensitivities(params, delta, v)
        p_plus, q_plus = compute_power(params, delta + step, v)
        p_minus, q_minus = compute_power(params, delta - step, v)
        pv_plus, qv_plus = compute_power(params, delta, v + step)
        pv_minus, qv_minus = compute_power(params, delta, v - step)
        numeric = (
            (p_plus - p_minus) / (2 * step),
            (pv_plus - pv_minus) / (2 * step),
            (q_plus - q_minus) / (2 * step),
            (qv_plus - qv_minus) / (2 * step),
        )
        for a, n in zip(analytic, numeric):
            worst = max(worst, abs(a - n) / abs(a))
    return worst, worst <= tolerance, "100 random operating points, |delta0| < 1.4, V0 in [0.7, 1.3]"


def check_rank_criterion(tolerance: float) -> Tuple[float, bool, str]:
    rng = np.random.default_rng(11)
    disagreements = 0
    degenerate = 0
    for draw in range(200):
        d_p = 0.0 if draw % 10 == 0 else rng.uniform(0.002, 0.05)
        params = SystemParams(
            r_g=rng.uniform(0.0, 0.1),
            x_g=rng.uniform(0.05, 0.2),
            d_p=d_p,
            d_q=rng.uniform(0.01, 0.1),
            p_set=rng.uniform(0.1, 0.8),
        )
        try:
            gains = linearize(params, solve_operating_point(params))
        except PowerLoopError:
            continue
        report = controllability(build_state_space(params, gains))
        closed_form = abs(rank_criterion(params, gains)) > 1e-12
        disagreements += int(report.controllable != closed_form)
        degenerate += int(not report.controllable)
    fraction = disagreements / 200.0
    return fraction, fraction <= tolerance, f"{disagreements} disagreements, {degenerate} rank-deficient draws"


def check_step_metrics(tolerance: float) -> Tuple[float, bool, str]:
    t = np.arange(0.0, 4.0 + 5e-4, 1e-3)
    worst = 0.0
    passed = True
    parts = []
    for xi, omega_n in ((0.4, 10.0), (0.707, 5.66)):
        metrics = step_metrics(signal_trajectory(t, second_order_step(xi, omega_n, t)), "p", 0.0)
        error = abs(metrics.overshoot - po_from_damping(xi))
        design_ts = 4.0 / (xi * omega_n)
        worst = max(worst, error)
        passed = passed and error <= tolerance and abs(metrics.settling_time - design_ts) <= 0.2 * design_ts
        parts.append(f"xi={xi}: P.O. {metrics.overshoot:.2f}%, Ts {metrics.settling_time:.3f}s")
    return worst, passed, "; ".join(parts)


def check_small_signal(tolerance: float) -> Tuple[float, bool, str]:
    event = SetpointEvent(time=0.0, target="p_set", value=REFERENCE_SYSTEM.p_set + SMALL_STEP)
    cfg = SimConfig(t_end=4.0, dt=1e-4, record_every=10)
    x0 = step_initial_state(REFERENCE_SYSTEM, event)
    worst = 0.0
    for _, plant, _, gain in _placed_cases():
        nonlinear = simulate_nonlinear(REFERENCE_SYSTEM, gain, [event], cfg)
        linear = simulate_linear(plant, gain, x0, cfg)
        deviation = max(
            float(np.max(np.abs(nonlinear.e1 - linear.e1))),
            float(np.max(np.abs(nonlinear.e2 - linear.e2))),
        )
        worst = max(worst, deviation / SMALL_STEP)
    return worst, worst <= tolerance, f"{SMALL_STEP} p.u. power step, worst deviation over the step size"


def check_step_response(tolerance: float) -> Tuple[float, bool, str]:
    cfg = SimConfig(t_end=REFERENCE_T_END)
    results = {}
    worst = 0.0
    passed = True
    for case, _, _, gain in _placed_cases():
        traj = simulate_nonlinear(REFERENCE_SYSTEM, gain, [REFERENCE_STEP], cfg)
        metrics = step_metrics(traj, "p", REFERENCE_STEP.time)
        design_ts = case.ts
        worst = max(worst, abs(metrics.settling_time - design_ts) / design_ts)
        passed = passed and abs(metrics.final_value - 1.0) <= 1e-3
        passed = passed and abs(float(np.mean(traj.omega[-100:])) - REFERENCE_SYSTEM.omega_g) <= 1e-6
        results[case.name] = metrics
    ordered = (
        results["case1"].overshoot > results["case3"].overshoot
        and results["case2"].overshoot > results["case4"].overshoot
        and results["case1"].settling_time < results["case2"].settling_time
        and results["case3"].settling_time < results["case4"].settling_time
    )
    detail = ", ".join(
        f"{name} {m.overshoot:.1f}%/{m.settling_time:.2f}s" for name, m in sorted(results.items())
    )
    return worst, passed and ordered and worst <= tolerance, detail


FIXTURES: Dict[str, Fixture] = {
    fixture.name: fixture
    for fixture in (
        Fixture("operating-point", "Steady state (delta0, V0) of the reference system", 5e-4, check_operating_point),
        Fixture("linearized-gains", "Small-signal power sensitivities", 5e-3, check_linearized_gains),
        Fixture("state-space", "Extended open-loop A and B", 1e-3, check_state_space),
        Fixture("controllability", "Controllability matrix and rank", 1e-3, check_controllability),
        Fixture("placement", "Placed spectra of the four cases", 1e-8, check_placement),
        Fixture("published-gains", "Spectra of the published gains", 0.15, check_published_gains),
        Fixture("sensitivities", "Analytic vs finite-difference gains", 1e-5, check_sensitivities),
        Fixture("rank-criterion", "SVD rank vs closed-form criterion", 0.0, check_rank_criterion),
        Fixture("step-metrics", "Metric extraction on analytic responses", 0.2, check_step_metrics),
        Fixture("small-signal", "Linear vs nonlinear closed loop", 0.02, check_small_signal),
        Fixture("step-response", "Power step ordering and settling", 0.5, check_step_response),
    )
}


def run_fixtures(
    names: Optional[Sequence[str]] = None,
    tolerance: Optional[float] = None,
) -> List[FixtureResult]:
    """Run the named fixtures (all by default).

    Args:
        names: Fixture names; None runs every fixture
        tolerance: Replaces every fixture's own tolerance when given

    Returns:
        One FixtureResult per fixture, in the requested order (registry order by default)

    Raises:
        DomainError: If a name is unknown or the tolerance is negative
    """
    selected = list(FIXTURES) if not names else list(names)
    unknown = [name for name in selected if name not in FIXTURES]
    if unknown:
        raise DomainError(f"unknown fixture(s): {', '.join(unknown)}")
    if tolerance is not None and tolerance < 0.0:
        raise DomainError(f"tolerance must be nonnegative, got {tolerance}")

    results = []
    for name in selected:
        fixture = FIXTURES[name]
        tol = fixture.tolerance if tolerance is None else tolerance
        try:
            error, passed, detail = fixture.check(tol)
        except PowerLoopError as e:
            logger.error(f"Fixture {name} raised {type(e).__name__}: {e}")
            error, passed, detail = math.inf, False, f"{type(e).__name__}: {e}"
        logger.debug(f"Fixture {name}: error {error:.3e} vs {tol:.3e} -> {'pass' if passed else 'FAIL'}")
        results.append(FixtureResult(name=name, passed=passed, worst_error=error, tolerance=tol, detail=detail))
    return results
