"""Weighted least squares for the full measurement set and every subset."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGeometryError, SubsetDegenerateError
from .geometry import LinearSystem

CONDITION_LIMIT = 1e12


@dataclass(frozen=True)
class WlsSolution:
    """Full-set WLS estimate and its solution matrix S (S @ G = I)."""

    x_hat: np.ndarray
    S: np.ndarray


@dataclass(frozen=True)
class SubsetSolution:
    """Leave-one-out WLS estimate; column k of S is exactly zero."""

    k: int
    x_hat: np.ndarray
    S: np.ndarray


def _solution_matrix(G: np.ndarray, w: np.ndarray) -> np.ndarray:
    """S = (G^T W G)^-1 G^T W for diagonal W, with a conditioning guard."""
    n, m = G.shape
    if n < m:
        raise DegenerateGeometryError(f"underdetermined system ({n} < {m})")
    gtw = G.T * w
    normal = gtw @ G
    if np.linalg.cond(normal) > CONDITION_LIMIT:
        raise DegenerateGeometryError("normal matrix is ill-conditioned")
    return np.linalg.solve(normal, gtw)


def wls_solve(sys: LinearSystem) -> WlsSolution:
    """Weighted least-squares solution of the full measurement set."""
    S = _solution_matrix(sys.G, sys.w)
    return WlsSolution(x_hat=S @ sys.y, S=S)


def subset_solution(sys: LinearSystem, k: int) -> SubsetSolution:
    """WLS solution with measurement k removed by zeroing its weight.

    Zeroing w[k] rather than deleting the row keeps every solution matrix
    aligned on the same n columns. Raises SubsetDegenerateError when the
    remaining geometry cannot support a solution, so callers can skip that
    subset and continue.
    """
    n, m = sys.G.shape
    if not 0 <= k < n:
        raise IndexError(f"subset index {k} out of range")
    if n - 1 < m:
        raise SubsetDegenerateError(k, "too few measurements after exclusion")
    w_sub = sys.w.copy()
    w_sub[k] = 0.0
    gtw = sys.G.T * w_sub
    normal = gtw @ sys.G
    if np.linalg.cond(normal) > CONDITION_LIMIT:
        raise SubsetDegenerateError(k)
    S = np.linalg.solve(normal, gtw)
    return SubsetSolution(k=k, x_hat=S @ sys.y, S=S)
