"""Closed-form roots of monic cubics and characteristic polynomials of 3x3 matrices."""

import math

import numpy as np

_POLISH_STEPS = 2


def characteristic_polynomial(matrix: np.ndarray) -> np.ndarray:
    """Coefficients [1, c2, c1, c0] of det(lambda*I - M) for a real 3x3 M."""
    m = np.asarray(matrix, dtype=float)
    if m.shape != (3, 3):
        raise ValueError(f"expected a 3x3 matrix, got shape {m.shape}")

    trace = m[0, 0] + m[1, 1] + m[2, 2]
    minors = (
        m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
        + m[0, 0] * m[2, 2] - m[0, 2] * m[2, 0]
        + m[1, 1] * m[2, 2] - m[1, 2] * m[2, 1]
    )
    det = (
        m[0, 0] * (m[1, 1] * m[2, 2] - m[1, 2] * m[2, 1])
        - m[0, 1] * (m[1, 0] * m[2, 2] - m[1, 2] * m[2, 0])
        + m[0, 2] * (m[1, 0] * m[2, 1] - m[1, 1] * m[2, 0])
    )
    return np.array([1.0, -trace, minors, -det])


def _polish(root: float, c2: float, c1: float, c0: float) -> float:
    """Newton refinement of a real root; skipped near multiple roots."""
    for _ in range(_POLISH_STEPS):
        value = ((root + c2) * root + c1) * root + c0
        slope = (3.0 * root + 2.0 * c2) * root + c1
        if abs(slope) <= 1e-8 * (1.0 + abs(c1) + abs(c2) * abs(root) + root * root):
            break
        root -= value / slope
    return root


def _quadratic_roots(b1: float, b0: float) -> list:
    """Roots of x^2 + b1*x + b0 without cancellation."""
    disc = b1 * b1 - 4.0 * b0
    if disc < 0.0:
        half_imag = math.sqrt(-disc) / 2.0
        return [complex(-b1 / 2.0, -half_imag), complex(-b1 / 2.0, half_imag)]
    big = -(b1 + math.copysign(math.sqrt(disc), b1)) / 2.0
    if big == 0.0:
        return [0.0, 0.0]
    return [big, b0 / big]


def solve_monic_cubic(c2: float, c1: float, c0: float) -> np.ndarray:
    """Roots of x^3 + c2*x^2 + c1*x + c0, sorted by (real, imag).

    Works on the depressed cubic t^3 + p*t + q. The trigonometric form is used
    when all three roots are real (p < 0 and |q| / (2 r^3) <= 1 with
    r = sqrt(-p/3)); otherwise Cardano's formula gives the real root and the
    pair comes from deflation. The discriminant is never formed unscaled, so
    tiny coefficients cannot underflow it to zero.
    """
    shift = c2 / 3.0
    p = c1 - c2 * c2 / 3.0
    q = 2.0 * c2**3 / 27.0 - c2 * c1 / 3.0 + c0

    if p == 0.0 and q == 0.0:
        return np.array([-shift] * 3, dtype=complex)
    if q == 0.0:
        return _sorted(_deflated(-shift, c2, c1, c0))
    if p == 0.0:
        return _sorted(_deflated(_polish(float(np.cbrt(-q)) - shift, c2, c1, c0), c2, c1, c0))

    r = math.sqrt(-p / 3.0) if p < 0.0 else 0.0
    if r > 0.0:
        ratio = q / 2.0 / r / r / r
        if abs(ratio) <= 1.0:
            theta = math.acos(-ratio) / 3.0
            return _sorted([
                _polish(2.0 * r * math.cos(theta - 2.0 * math.pi * k / 3.0) - shift, c2, c1, c0)
                for k in range(3)
            ])

    # sqrt((q/2)^2 + (p/3)^3) evaluated relative to its larger term
    cube = math.sqrt(abs(p) / 3.0) ** 3
    scale = max(abs(q), cube)
    inner = (q / scale / 2.0) ** 2 + math.copysign((cube / scale) ** 2, p)
    root_disc = scale * math.sqrt(max(inner, 0.0))

    u = float(np.cbrt(-q / 2.0 - math.copysign(root_disc, q)))
    t = u - p / (3.0 * u) if u != 0.0 else float(np.cbrt(-q))
    return _sorted(_deflated(_polish(t - shift, c2, c1, c0), c2, c1, c0))


def _deflated(real_root: float, c2: float, c1: float, c0: float) -> list:
    """The real root followed by the two roots of the deflated quadratic."""
    b1 = c2 + real_root
    b0 = c1 + real_root * b1
    return [real_root] + _quadratic_roots(b1, b0)


def _sorted(roots: list) -> np.ndarray:
    values = np.array(roots, dtype=complex)
    return values[np.lexsort((values.imag, values.real))]


def matrix_eigenvalues(matrix: np.ndarray) -> np.ndarray:
    """Eigenvalues of a real 3x3 matrix via its characteristic cubic."""
    _, c2, c1, c0 = characteristic_polynomial(matrix)
    return solve_monic_cubic(c2, c1, c0)
