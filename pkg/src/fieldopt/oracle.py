"""Slow reference paths used to cross-check the fast implementations.

Everything here trades speed for obviousness: exhaustive enumeration of
permutations, the PEV through the full mixed-model equations, and the
residual matrix through an explicit Kronecker product.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import SingularMatrixError
from .model import FieldLayout, KinshipMatrix, VarianceComponents

#: Largest dimension exhaustive_best will enumerate (9! = 362880 candidates).
MAX_EXHAUSTIVE_DIMENSION = 9


@dataclass(frozen=True)
class OracleResult:
    best_perm: np.ndarray
    best_value: float
    evaluated: int


def exhaustive_best(problem) -> OracleResult:
    """Global minimum over all feasible permutations of a small problem.

    Permutations are visited in lexicographic order and ties keep the first
    minimizer, so the result is fully deterministic.
    """
    dim = problem.dimension
    if dim > MAX_EXHAUSTIVE_DIMENSION:
        raise ValueError(
            f"exhaustive search refused: dimension {dim} exceeds the "
            f"bound {MAX_EXHAUSTIVE_DIMENSION}"
        )
    feasible = getattr(problem, "feasible", None)
    best_perm = None
    best_value = np.inf
    evaluated = 0
    for candidate in itertools.permutations(range(dim)):
        perm = np.array(candidate, dtype=np.intp)
        if feasible is not None and not feasible(perm):
            continue
        value = problem.evaluate(perm)
        evaluated += 1
        if value < best_value:
            best_value = value
            best_perm = perm
    if best_perm is None:
        raise ValueError("no feasible permutation exists")
    return OracleResult(best_perm=best_perm, best_value=float(best_value), evaluated=evaluated)


def pev_via_mme(
    X: np.ndarray,
    Z: np.ndarray,
    R: np.ndarray,
    K: KinshipMatrix,
    vc: VarianceComponents,
) -> np.ndarray:
    """PEV as the genetic block of the inverted mixed-model coefficient matrix.

    Builds Henderson's coefficient matrix

        [ X'R^-1X   X'R^-1Z        ]
        [ Z'R^-1X   Z'R^-1Z + G^-1 ]

    with ``R`` scaled by ``sigma_e2`` and ``G = K * sigma_a2``, inverts it
    whole, and returns the genetic diagonal block.
    """
    X = np.asarray(X, dtype=float)
    Z = np.asarray(Z, dtype=float)
    r_full = vc.sigma_e2 * np.asarray(R, dtype=float)
    try:
        r_inv = np.linalg.inv(r_full)
        g_inv = np.linalg.inv(vc.sigma_a2 * K.values)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError("R or G is singular") from exc
    n_fixed = X.shape[1] if X.size else 0
    genetic_block = Z.T @ r_inv @ Z + g_inv
    if n_fixed == 0:
        coefficient = genetic_block
    else:
        coefficient = np.block(
            [
                [X.T @ r_inv @ X, X.T @ r_inv @ Z],
                [Z.T @ r_inv @ X, genetic_block],
            ]
        )
    try:
        full_inverse = np.linalg.inv(coefficient)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError("mixed-model coefficient matrix is singular") from exc
    return full_inverse[n_fixed:, n_fixed:]


def kron_ar1_reference(
    layout: FieldLayout,
    rho_r: float,
    rho_c: float,
    nugget: float = 0.0,
) -> np.ndarray:
    """Residual matrix built the long way round.

    Forms the full Kronecker product of the one-dimensional AR(1)
    correlation matrices over rows and over columns, truncates it to the
    plot count (dropping the missing cells of an incomplete last row), and
    sets the diagonal to ``1 + nugget``.  ``rho_r`` decays with column
    offset and ``rho_c`` with row offset, matching ``build_residual``.
    """
    across_rows = _ar1_matrix(rho_c, layout.rows)
    along_row = _ar1_matrix(rho_r, layout.cols)
    full = np.kron(across_rows, along_row)
    n = layout.n_plots
    residual = full[:n, :n].copy()
    np.fill_diagonal(residual, 1.0 + nugget)
    return residual


def _ar1_matrix(rho: float, size: int) -> np.ndarray:
    idx = np.arange(size)
    return rho ** np.abs(idx[:, None] - idx[None, :])
