"""Extended open-loop state space of the power loops and its controllability.

States are the two tracking errors e1, e2 of the droop outputs and the
power-angle rate z; inputs are the rates of the frequency and voltage
commands.
"""

import numpy as np
from loguru import logger

from .exceptions import DomainError
from .models import ControllabilityReport, LinearizedGains, PlantMatrices, SystemParams

DEFAULT_RANK_TOL = 1e-9


def build_state_space(params: SystemParams, gains: LinearizedGains) -> PlantMatrices:
    """Assemble the extended open-loop pair (A, B).

    Args:
        params: System parameters (droop coefficients and frequency base)
        gains: Linearized power sensitivities at the operating point

    Returns:
        PlantMatrices with A nilpotent (A @ A == 0)
    """
    a = np.zeros((3, 3))
    a[0, 2] = params.d_p * gains.k_pdelta
    a[1, 2] = params.d_q * gains.k_qdelta

    b = np.array([
        [1.0, params.d_p * gains.k_pv],
        [0.0, 1.0 + params.d_q * gains.k_qv],
        [params.omega_b, 0.0],
    ])
    return PlantMatrices(a=a, b=b)


def controllability_matrix(plant: PlantMatrices) -> np.ndarray:
    """[B, AB, A^2 B] as a 3x6 array."""
    ab = plant.a @ plant.b
    return np.hstack([plant.b, ab, plant.a @ ab])


def controllability(plant: PlantMatrices, rank_tol: float = DEFAULT_RANK_TOL) -> ControllabilityReport:
    """Numerical rank test of the controllability matrix.

    The rank counts singular values at or above ``rank_tol`` times the largest
    one. No balancing is applied before the decomposition.

    Raises:
        DomainError: If rank_tol is outside (0, 1)
    """
    if not 0.0 < rank_tol < 1.0:
        raise DomainError(f"rank_tol must be in (0, 1), got {rank_tol}")

    p_matrix = controllability_matrix(plant)
    singular_values = np.linalg.svd(p_matrix, compute_uv=False)
    largest = float(singular_values[0])
    rank = int(np.sum(singular_values >= rank_tol * largest)) if largest > 0.0 else 0

    logger.debug(f"Controllability singular values: {singular_values}, rank {rank}")
    return ControllabilityReport(
        p_matrix=p_matrix,
        singular_values=singular_values,
        rank=rank,
        controllable=rank == 3,
        rank_tol=rank_tol,
    )


def rank_criterion(params: SystemParams, gains: LinearizedGains) -> float:
    """Closed-form controllability scalar, det([B, AB] first three columns) / omega_b^2.

    The pair is controllable exactly when this value is nonzero.
    """
    return params.d_p * (
        gains.k_pv * params.d_q * gains.k_qdelta
        - gains.k_pdelta * (1.0 + params.d_q * gains.k_qv)
    )
