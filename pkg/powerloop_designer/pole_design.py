"""Eigenvalue targets from time-domain specs and MIMO pole placement.

The gain system of the three-state, two-input plant is underdetermined (three
coefficient constraints, six unknowns). Gains are therefore synthesised by
eigenstructure assignment: with a real block-diagonal target matrix L and a
2x3 parameter matrix G, the Sylvester equation A X - X L = B G gives a
similarity transform X and K = G X^-1 places the spectrum of A - B K on L.
"""

import math
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg
from loguru import logger

from .cubic import characteristic_polynomial, matrix_eigenvalues
from .exceptions import DomainError, PlacementSingularError, UncontrollableError
from .models import ControllabilityReport, EigenvalueTargets, FeedbackGain, PerformanceSpec, PlantMatrices
from .statespace import DEFAULT_RANK_TOL, controllability

# Columns follow the block order of the target matrix: complex pair, then real poles.
DEFAULT_PARAMETER_MATRIX: Tuple[Tuple[float, ...], ...] = ((1.0, 0.0, 0.0), (0.0, 1.0, 1.0))

# Tried in order when the requested parameter matrix yields a singular transform.
PARAMETER_MATRIX_RETRIES: Tuple[Tuple[Tuple[float, ...], ...], ...] = (
    ((1.0, 0.0, 1.0), (0.0, 1.0, 1.0)),
    ((1.0, 1.0, 0.0), (0.0, 1.0, 1.0)),
    ((1.0, 0.0, 1.0), (1.0, 1.0, 0.0)),
    ((0.0, 1.0, 1.0), (1.0, 0.0, 1.0)),
    ((1.0, 1.0, 1.0), (1.0, -1.0, 1.0)),
    ((1.0, 0.0, 0.0), (1.0, 1.0, 1.0)),
    ((1.0, 1.0, 0.0), (1.0, 0.0, 1.0)),
    ((2.0, 1.0, 1.0), (1.0, 2.0, -1.0)),
)

MAX_TRANSFORM_CONDITION = 1e12
MAX_PLACEMENT_ERROR = 1e-8
SEPARATION_FACTOR = 5.0

TargetsLike = Union[EigenvalueTargets, Sequence[complex], np.ndarray]
GainLike = Union[FeedbackGain, Sequence[Sequence[float]], np.ndarray]


def po_from_damping(xi: float) -> float:
    """Percent overshoot of the standard second-order step response."""
    if not 0.0 < xi < 1.0:
        raise DomainError(f"damping ratio must be in (0, 1), got {xi}")
    return 100.0 * math.exp(-math.pi * xi / math.sqrt(1.0 - xi * xi))


def damping_from_po(po: float) -> float:
    """Damping ratio producing the given percent overshoot."""
    if not 0.0 < po < 100.0:
        raise DomainError(f"percent overshoot must be in (0, 100), got {po}")
    log_po = math.log(po / 100.0)
    return -log_po / math.sqrt(math.pi**2 + log_po**2)


def spec_to_targets(spec: PerformanceSpec) -> EigenvalueTargets:
    """Dominant complex pair from (xi, ts) plus the real pole at -a.

    Logs a warning when the real pole is not well separated from the pair.
    """
    omega_n = spec.omega_n
    sigma = -spec.xi * omega_n
    omega_d = omega_n * math.sqrt(1.0 - spec.xi**2)

    if not spec.is_well_separated:
        logger.warning(
            f"Third pole at -{spec.a:g} is within {SEPARATION_FACTOR:g}x of the dominant decay "
            f"rate {-sigma:.4g} 1/s; the response will deviate from the second-order design"
        )
    lambdas = np.array([complex(sigma, -omega_d), complex(sigma, omega_d), complex(-spec.a, 0.0)])
    return EigenvalueTargets(lambdas=lambdas[np.lexsort((lambdas.imag, lambdas.real))])


def pair_to_damping(targets: TargetsLike) -> Tuple[float, float]:
    """Read (xi, omega_n) back from the complex pair of a target set.

    Raises:
        DomainError: If the set has no complex pair
    """
    lambdas = _as_lambdas(targets)
    upper = [z for z in lambdas if z.imag > 0.0]
    if not upper:
        raise DomainError("target set has no complex-conjugate pair")
    omega_n = abs(upper[0])
    return -upper[0].real / omega_n, omega_n


def _as_lambdas(targets: TargetsLike) -> np.ndarray:
    if isinstance(targets, EigenvalueTargets):
        return targets.lambdas
    lambdas = np.asarray(targets, dtype=complex)
    if lambdas.shape != (3,):
        raise DomainError(f"expected three eigenvalues, got shape {lambdas.shape}")
    return lambdas


def _is_conjugate_closed(lambdas: np.ndarray) -> bool:
    scale = max(1.0, float(np.max(np.abs(lambdas))))
    return all(np.min(np.abs(lambdas - np.conj(z))) <= 1e-12 * scale for z in lambdas)


def target_polynomial(targets: TargetsLike) -> np.ndarray:
    """Monic cubic [1, c2, c1, c0] whose roots are the targets.

    Raises:
        DomainError: If the targets are not closed under conjugation
    """
    lambdas = _as_lambdas(targets)
    if not _is_conjugate_closed(lambdas):
        raise DomainError("eigenvalue targets must be closed under complex conjugation")

    coeffs = np.poly(lambdas)
    residue = float(np.max(np.abs(np.imag(coeffs))))
    if residue >= 1e-12 * max(1.0, float(np.max(np.abs(coeffs)))):
        raise DomainError(f"target polynomial has imaginary residue {residue:.3e}")
    return np.real(coeffs).astype(float)


def _real_block_form(lambdas: np.ndarray) -> np.ndarray:
    """Real block-diagonal matrix with the given spectrum.

    A complex pair takes the leading 2x2 block and real eigenvalues follow, so
    column j of the parameter matrix drives the j-th column of the transform.
    """
    blocks: List[np.ndarray] = []
    for z in sorted(lambdas, key=lambda z: (z.imag == 0.0, z.real, z.imag)):
        if z.imag > 0.0:
            blocks.append(np.array([[z.real, z.imag], [-z.imag, z.real]]))
        elif z.imag == 0.0:
            blocks.append(np.array([[z.real]]))
    return scipy.linalg.block_diag(*blocks)


def eigenvalue_mismatch(achieved: np.ndarray, targets: np.ndarray) -> float:
    """Worst relative distance after pairing each target with its nearest eigenvalue."""
    remaining = list(np.asarray(achieved, dtype=complex))
    worst = 0.0
    for target in sorted(np.asarray(targets, dtype=complex), key=lambda z: (z.real, z.imag)):
        distances = [abs(z - target) for z in remaining]
        index = int(np.argmin(distances))
        worst = max(worst, distances[index] / max(abs(target), 1e-300))
        remaining.pop(index)
    return worst


def gain_matrix(gain: GainLike) -> np.ndarray:
    """The 2x3 K of a FeedbackGain or array-like."""
    k = gain.k if isinstance(gain, FeedbackGain) else np.asarray(gain, dtype=float)
    if k.shape != (2, 3):
        raise DomainError(f"gain matrix must be 2x3, got shape {k.shape}")
    return k


def closed_loop_eigs(plant: PlantMatrices, gain: GainLike) -> np.ndarray:
    """Eigenvalues of A - B K sorted by (real, imag)."""
    return matrix_eigenvalues(plant.closed_loop(gain_matrix(gain)))


def placement_certificate(plant: PlantMatrices, gain: GainLike, targets: TargetsLike) -> float:
    """Worst per-coefficient relative error between det(lambda I - A + B K) and the target cubic."""
    achieved = characteristic_polynomial(plant.closed_loop(gain_matrix(gain)))
    wanted = target_polynomial(targets)
    scale = np.maximum(np.abs(wanted), 1e-300)
    return float(np.max(np.abs(achieved - wanted) / scale))


def place_poles(
    plant: PlantMatrices,
    targets: EigenvalueTargets,
    parameter_matrix: Optional[Sequence[Sequence[float]]] = None,
    rank_tol: float = DEFAULT_RANK_TOL,
    report: Optional[ControllabilityReport] = None,
) -> FeedbackGain:
    """Synthesize K so that eig(A - B K) equals the targets.

    Args:
        plant: Extended open-loop pair
        targets: Closed-loop eigenvalue targets
        parameter_matrix: 2x3 matrix G; defaults to DEFAULT_PARAMETER_MATRIX
        rank_tol: Relative singular-value threshold of the controllability test
        report: Controllability report already computed for this plant; the
            rank test is run here only when it is omitted

    Returns:
        FeedbackGain whose achieved spectrum matches the targets to 1e-8

    Raises:
        UncontrollableError: If (A, B) is not controllable
        PlacementSingularError: If no parameter matrix gives a usable transform
    """
    if report is None:
        report = controllability(plant, rank_tol)
    if not report.controllable:
        raise UncontrollableError(
            f"plant is not controllable (rank {report.rank} < 3)",
            rank=report.rank,
            singular_values=report.singular_values,
        )

    open_loop = matrix_eigenvalues(plant.a)
    scale = max(1.0, float(np.max(np.abs(targets.lambdas))))
    if np.min(np.abs(targets.lambdas[:, None] - open_loop[None, :])) <= 1e-12 * scale:
        raise DomainError("targets must differ from the open-loop eigenvalues")

    block = _real_block_form(targets.lambdas)
    requested = DEFAULT_PARAMETER_MATRIX if parameter_matrix is None else parameter_matrix
    first = tuple(tuple(float(v) for v in row) for row in requested)
    candidates = [first] + [g for g in PARAMETER_MATRIX_RETRIES if g != first]

    attempts: List[Dict[str, Any]] = []
    for attempt, candidate in enumerate(candidates):
        g = np.array(candidate, dtype=float)
        if g.shape != (2, 3):
            raise DomainError(f"parameter matrix must be 2x3, got shape {g.shape}")

        x = scipy.linalg.solve_sylvester(plant.a, -block, plant.b @ g)
        condition = float(np.linalg.cond(x))
        if not math.isfinite(condition) or condition > MAX_TRANSFORM_CONDITION:
            logger.warning(
                f"Parameter matrix {g.tolist()} gives a singular transform (cond {condition:.3e}); retrying"
            )
            attempts.append({"parameter_matrix": g.tolist(), "condition": condition, "error": None})
            continue

        k = np.linalg.solve(x.T, g.T).T
        achieved = matrix_eigenvalues(plant.closed_loop(k))
        error = eigenvalue_mismatch(achieved, targets.lambdas)
        logger.debug(f"Attempt {attempt}: cond(X)={condition:.3e}, eigenvalue error={error:.3e}")
        if error > MAX_PLACEMENT_ERROR:
            logger.warning(f"Parameter matrix {g.tolist()} misses the targets by {error:.3e}; retrying")
            attempts.append({"parameter_matrix": g.tolist(), "condition": condition, "error": error})
            continue

        return FeedbackGain(
            k=k,
            achieved_eigs=achieved,
            max_rel_error=error,
            parameter_matrix=g,
            transform_condition=condition,
        )

    raise PlacementSingularError(
        f"all {len(candidates)} parameter matrices failed to place the targets", attempts=attempts
    )
