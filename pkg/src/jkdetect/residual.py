"""Jackknife residuals, solution separations, and the map between them.

Both statistics are pure linear combinations of the measurement errors,
so each carries its coefficient vector(s) as a first-class output. The
distribution machinery consumes those coefficients directly, keeping one
canonical linear form for both detectors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGeometryError
from .estimator import CONDITION_LIMIT, SubsetSolution, WlsSolution
from .geometry import LinearSystem


@dataclass(frozen=True)
class JackknifeResidual:
    """Leave-one-out prediction residual t_k and its error coefficients.

    ``coefficients[j]`` weights measurement error j in t_k; the entry at
    the excluded index is exactly 1.
    """

    k: int
    t_k: float
    coefficients: np.ndarray


@dataclass(frozen=True)
class SeparationVector:
    """Full-minus-subset state separation d_k with per-component coefficients.

    ``coefficients[q, j]`` weights measurement error j in component q;
    rows are taken from S - S^(k).
    """

    k: int
    d_k: np.ndarray
    coefficients: np.ndarray


def jackknife_residual(sys: LinearSystem, sub: SubsetSolution, k: int) -> JackknifeResidual:
    """Residual between measurement k and its leave-one-out prediction."""
    if sub.k != k:
        raise ValueError("subset solution does not exclude the requested index")
    g_k = sys.G[k]
    t_k = float(sys.y[k] - g_k @ sub.x_hat)
    coeff = -(g_k @ sub.S)
    coeff[k] += 1.0
    return JackknifeResidual(k=k, t_k=t_k, coefficients=coeff)


def separation_vector(full: WlsSolution, sub: SubsetSolution) -> SeparationVector:
    """Difference between the full solution and the k-th subset solution."""
    return SeparationVector(k=sub.k, d_k=full.x_hat - sub.x_hat,
                            coefficients=full.S - sub.S)


def _normal_inverse_column(sys: LinearSystem, k: int) -> np.ndarray:
    gtw = sys.G.T * sys.w
    normal = gtw @ sys.G
    if np.linalg.cond(normal) > CONDITION_LIMIT:
        raise DegenerateGeometryError("normal matrix is ill-conditioned")
    return np.linalg.solve(normal, sys.G[k])


def ss_from_jackknife(sys: LinearSystem, k: int, t_k: float) -> np.ndarray:
    """Map a jackknife residual to its separation vector.

    Returns (G^T W G)^-1 g_k^T W_kk t_k, which equals
    ``separation_vector(...).d_k`` up to floating-point error.
    """
    return _normal_inverse_column(sys, k) * (sys.w[k] * t_k)


def solution_derivative(sys: LinearSystem, k: int) -> np.ndarray:
    """Sensitivity of the full WLS solution to measurement k.

    d x_hat / d y_k = (G^T W G)^-1 g_k^T W_kk; invariant under uniform
    positive rescaling of the weights.
    """
    return _normal_inverse_column(sys, k) * sys.w[k]
