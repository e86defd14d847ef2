"""Power-flow relations of a converter behind a complex line impedance.

The line is algebraic: active and reactive power follow from the power angle
and the capacitor voltage magnitude. The droop balance fixes the steady state,
and the four partial derivatives at that point form the small-signal model.
"""

import math
from typing import Tuple

import numpy as np
from loguru import logger

from .exceptions import DegenerateDroopError, DomainError, NoEquilibriumError
from .models import LinearizedGains, OperatingPoint, SystemParams

NEWTON_TOLERANCE = 1e-10
NEWTON_MAX_ITERATIONS = 50


def compute_power(params: SystemParams, delta: float, v: float) -> Tuple[float, float]:
    """Active and reactive power delivered through the line.

    Args:
        params: System parameters (grid voltage and line impedance are used)
        delta: Power angle, rad
        v: Capacitor voltage magnitude, p.u.

    Returns:
        Tuple (p, q) in p.u.

    Raises:
        DomainError: If v <= 0 or the line impedance is zero
    """
    if not v > 0.0:
        raise DomainError(f"voltage magnitude must be positive, got {v}")
    z_sq = params.r_g**2 + params.x_g**2
    if z_sq <= 0.0:
        raise DomainError("line impedance must be nonzero")

    sin_d, cos_d = math.sin(delta), math.cos(delta)
    p = (v * v * params.r_g + v * params.v_g * (params.x_g * sin_d - params.r_g * cos_d)) / z_sq
    q = (v * v * params.x_g - v * params.v_g * (params.r_g * sin_d + params.x_g * cos_d)) / z_sq
    return p, q


def power_sensitivities(params: SystemParams, delta: float, v: float) -> Tuple[float, float, float, float]:
    """Partial derivatives (dp/d delta, dp/dV, dq/d delta, dq/dV) at (delta, v)."""
    z_sq = params.r_g**2 + params.x_g**2
    sin_d, cos_d = math.sin(delta), math.cos(delta)
    r, x, v_g = params.r_g, params.x_g, params.v_g

    k_pdelta = v * v_g * (r * sin_d + x * cos_d) / z_sq
    k_pv = (2.0 * v * r + v_g * (x * sin_d - r * cos_d)) / z_sq
    k_qdelta = v * v_g * (x * sin_d - r * cos_d) / z_sq
    k_qv = (2.0 * v * x - v_g * (r * sin_d + x * cos_d)) / z_sq
    return k_pdelta, k_pv, k_qdelta, k_qv


def _power_target(params: SystemParams) -> float:
    """Active power the frequency droop settles to on a grid-synchronized bus."""
    if params.d_p == 0.0:
        if params.omega_set != params.omega_g:
            raise DegenerateDroopError(
                f"d_p = 0 requires omega_set == omega_g (got {params.omega_set} vs {params.omega_g})"
            )
        return params.p_set
    return params.p_set + (params.omega_set - params.omega_g) / params.d_p


def droop_residual(params: SystemParams, delta: float, v: float) -> np.ndarray:
    """Residual of the two steady-state droop balance equations at (delta, v)."""
    p, q = compute_power(params, delta, v)
    return np.array([
        p - _power_target(params),
        v - params.v_set - params.d_q * (params.q_set - q),
    ])


def solve_operating_point(params: SystemParams) -> OperatingPoint:
    """Solve the droop balance for the steady-state (delta0, V0).

    Newton iteration with the analytic Jacobian, started from (0, v_set).

    Args:
        params: System parameters

    Returns:
        OperatingPoint on the stable branch of the power-angle curve

    Raises:
        DegenerateDroopError: If d_p = 0 and omega_set != omega_g
        NoEquilibriumError: If Newton fails or lands outside |delta| < pi/2
    """
    _power_target(params)

    delta, v = 0.0, params.v_set
    for iteration in range(NEWTON_MAX_ITERATIONS):
        if not v > 0.0:
            raise NoEquilibriumError(f"Newton iterate left the positive-voltage region (v={v:.4g})")
        residual = droop_residual(params, delta, v)
        norm = float(np.linalg.norm(residual))
        logger.debug(f"Newton iteration {iteration}: delta={delta:.12f}, v={v:.12f}, |F|={norm:.3e}")
        if not math.isfinite(norm):
            break
        if norm <= NEWTON_TOLERANCE:
            if abs(delta) >= math.pi / 2:
                raise NoEquilibriumError(
                    f"equilibrium at delta={delta:.4f} rad lies on the unstable branch"
                )
            logger.debug(f"Operating point converged in {iteration} iterations")
            return OperatingPoint(delta0=delta, v0=v)

        k_pdelta, k_pv, k_qdelta, k_qv = power_sensitivities(params, delta, v)
        jacobian = np.array([
            [k_pdelta, k_pv],
            [params.d_q * k_qdelta, 1.0 + params.d_q * k_qv],
        ])
        try:
            step = np.linalg.solve(jacobian, -residual)
        except np.linalg.LinAlgError as e:
            raise NoEquilibriumError(f"singular Jacobian at delta={delta:.4f}, v={v:.4f}") from e
        delta += float(step[0])
        v += float(step[1])

    raise NoEquilibriumError(
        f"Newton iteration did not converge within {NEWTON_MAX_ITERATIONS} iterations"
    )


def linearize(params: SystemParams, op: OperatingPoint) -> LinearizedGains:
    """Small-signal gains K_p_delta, K_pV, K_q_delta, K_qV at the operating point."""
    k_pdelta, k_pv, k_qdelta, k_qv = power_sensitivities(params, op.delta0, op.v0)
    return LinearizedGains(k_pdelta=k_pdelta, k_pv=k_pv, k_qdelta=k_qdelta, k_qv=k_qv)
