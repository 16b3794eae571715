"""Mixed-model matrices and the prediction-error-variance design score.

A candidate field design is scored through the linear mixed model
``y = X*beta + Z*u + e`` with ``u ~ N(0, K*sigma_a2)`` and a residual
covariance ``R*sigma_e2``.  The prediction error variance (PEV) of the
genetic effects is ``[Z'MZ/sigma_e2 + (K*sigma_a2)^-1]^-1`` where ``M``
projects out the fixed effects under the residual metric.  The score is a
scalar summary of the PEV spectrum; smaller is better.
"""

from __future__ import annotations

import logging
import threading
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse.linalg

from .errors import (
    NumericalError,
    RankDeficiencyError,
    SingularMatrixError,
    SpecError,
)

log = logging.getLogger(__name__)

RESIDUAL_KINDS = ("identity", "ar1xar1")
OBJECTIVE_MODES = ("truncated_eigen", "full_trace")

#: Ridge added to a kinship matrix that turns out not to be positive definite.
DEFAULT_KINSHIP_RIDGE = 1e-6

#: Below this dimension a dense decomposition beats the iterative solver.
FAST_EIGEN_MIN_DIMENSION = 64

#: ARPACK is not reentrant, so concurrent evaluations take turns.
_ARPACK_LOCK = threading.Lock()


@dataclass(frozen=True)
class KinshipMatrix:
    """Symmetric relatedness matrix over the genotypes under evaluation."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise SpecError(f"kinship matrix must be square, got shape {values.shape}")
        if not np.array_equal(values, values.T):
            raise SpecError("kinship matrix must be symmetric")
        object.__setattr__(self, "values", values)

    @property
    def n_genotypes(self) -> int:
        return self.values.shape[0]


def build_kinship_blocks(family_sizes, off_diag: float) -> KinshipMatrix:
    """Block-diagonal kinship for independent families.

    Within a family every off-diagonal entry is ``off_diag``, across
    families the relationship is zero and the diagonal is one.
    """
    sizes = list(family_sizes)
    if not sizes:
        raise SpecError("family_sizes: at least one family is required")
    for k, size in enumerate(sizes):
        if size < 1:
            raise SpecError(f"family_sizes[{k}]: must be >= 1, got {size}")
    if not 0.0 <= off_diag < 1.0:
        raise SpecError(f"off_diag: must lie in [0, 1), got {off_diag}")
    blocks = [
        np.full((size, size), off_diag) + (1.0 - off_diag) * np.eye(size)
        for size in sizes
    ]
    return KinshipMatrix(scipy.linalg.block_diag(*blocks))


@dataclass(frozen=True)
class VarianceComponents:
    """Genetic and residual variance scales of the mixed model."""

    sigma_a2: float
    sigma_e2: float = 1.0
    heritability: float | None = None

    def __post_init__(self):
        if self.sigma_a2 <= 0.0:
            raise SpecError(f"sigma_a2: must be positive, got {self.sigma_a2}")
        if self.sigma_e2 <= 0.0:
            raise SpecError(f"sigma_e2: must be positive, got {self.sigma_e2}")

    @classmethod
    def from_heritability(cls, h2: float) -> "VarianceComponents":
        """Variances implied by a narrow-sense heritability.

        The residual scale is pinned at one, so ``sigma_a2 = h2 / (1 - h2)``.
        """
        if not 0.0 < h2 < 1.0:
            raise SpecError(f"heritability: must lie in (0, 1), got {h2}")
        return cls(sigma_a2=h2 / (1.0 - h2), sigma_e2=1.0, heritability=h2)


@dataclass(frozen=True)
class FieldLayout:
    """Row-major rectangular plot grid whose last row may be incomplete.

    Plot ``p`` (0-based) sits in row ``p // cols`` and column ``p % cols``;
    the last row holds only ``last_row_cols`` plots.
    """

    rows: int
    cols: int
    last_row_cols: int | None = None

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise SpecError(
                f"field layout needs positive rows and cols, got {self.rows}x{self.cols}"
            )
        last = self.cols if self.last_row_cols is None else self.last_row_cols
        if not 1 <= last <= self.cols:
            raise SpecError(f"last_row_cols: must lie in [1, cols], got {last}")
        object.__setattr__(self, "last_row_cols", last)

    @property
    def n_plots(self) -> int:
        return self.cols * (self.rows - 1) + self.last_row_cols

    def grid_positions(self) -> tuple[np.ndarray, np.ndarray]:
        """Arrays of (row, col), both 0-based, one entry per plot."""
        idx = np.arange(self.n_plots)
        return idx // self.cols, idx % self.cols


@dataclass(frozen=True)
class ResidualModel:
    """Residual correlation structure over the plots of one location.

    ``ar1xar1`` is separable first-order autoregression: ``rho_r`` acts on
    column offsets (along a row), ``rho_c`` on row offsets, and the nugget
    inflates the diagonal to ``1 + nugget``.
    """

    kind: str = "identity"
    rho_r: float = 0.0
    rho_c: float = 0.0
    nugget: float = 0.0

    def __post_init__(self):
        if self.kind not in RESIDUAL_KINDS:
            raise SpecError(
                f"residual.kind: unknown kind {self.kind!r}, choose from {RESIDUAL_KINDS}"
            )
        for name in ("rho_r", "rho_c"):
            rho = getattr(self, name)
            if not 0.0 <= rho < 1.0:
                raise SpecError(f"residual.{name}: must lie in [0, 1), got {rho}")
        if self.nugget < 0.0:
            raise SpecError(f"residual.nugget: must be >= 0, got {self.nugget}")


def build_residual(layout: FieldLayout, model: ResidualModel) -> np.ndarray:
    """Residual correlation matrix for every plot pair of a layout."""
    n = layout.n_plots
    if model.kind == "identity":
        return np.eye(n)
    row, col = layout.grid_positions()
    row_offset = np.abs(row[:, None] - row[None, :])
    col_offset = np.abs(col[:, None] - col[None, :])
    residual = model.rho_r**col_offset * model.rho_c**row_offset
    np.fill_diagonal(residual, 1.0 + model.nugget)
    return residual


@dataclass(frozen=True)
class DesignMatrices:
    """Fixed-effect (X) and genetic (Z) incidence matrices, one row per plot."""

    X: np.ndarray
    Z: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.X, dtype=float)
        z = np.asarray(self.Z, dtype=float)
        if x.ndim != 2 or z.ndim != 2:
            raise SpecError("design matrices must be two-dimensional")
        if x.shape[0] != z.shape[0]:
            raise SpecError(
                f"X and Z must agree on the observation count: {x.shape[0]} vs {z.shape[0]}"
            )
        if not np.all((z == 0.0) | (z == 1.0)) or not np.all(z.sum(axis=1) == 1.0):
            raise SpecError("Z must have exactly one unit entry per row")
        object.__setattr__(self, "X", x)
        object.__setattr__(self, "Z", z)

    @property
    def n_observations(self) -> int:
        return self.Z.shape[0]

    @property
    def n_genotypes(self) -> int:
        return self.Z.shape[1]


@dataclass(frozen=True)
class ObjectiveConfig:
    """How the PEV matrix is collapsed to a scalar.

    ``truncated_eigen`` averages the ``k_eigen`` largest eigenvalues;
    ``full_trace`` is the trace divided by the genotype count.  With
    ``k_eigen`` equal to the matrix size the two coincide.
    """

    k_eigen: int = 3
    mode: str = "truncated_eigen"

    def __post_init__(self):
        if self.k_eigen < 1:
            raise SpecError(f"k_eigen: must be >= 1, got {self.k_eigen}")
        if self.mode not in OBJECTIVE_MODES:
            raise SpecError(
                f"objective mode: unknown mode {self.mode!r}, choose from {OBJECTIVE_MODES}"
            )


def build_projection(R: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Residual-metric annihilator of the fixed-effect columns.

    Returns ``R^-1 - R^-1 X (X'R^-1 X)^-1 X'R^-1``; with no fixed-effect
    columns this degenerates to ``R^-1``.  ``M @ X`` is zero and ``M`` is
    symmetric positive semidefinite.
    """
    R = np.asarray(R, dtype=float)
    X = np.asarray(X, dtype=float)
    n = R.shape[0]
    try:
        chol = scipy.linalg.cho_factor(R, lower=True)
    except scipy.linalg.LinAlgError as exc:
        raise SingularMatrixError("residual matrix is not positive definite") from exc
    r_inv = scipy.linalg.cho_solve(chol, np.eye(n))
    if X.size == 0:
        m = r_inv
    else:
        ri_x = scipy.linalg.cho_solve(chol, X)
        gram = X.T @ ri_x
        try:
            gram_chol = scipy.linalg.cho_factor(gram, lower=True)
        except scipy.linalg.LinAlgError:
            columns = _dependent_columns(X)
            raise RankDeficiencyError(
                "fixed-effect matrix is rank deficient; "
                f"dependent columns: {columns}",
                columns=columns,
            ) from None
        m = r_inv - ri_x @ scipy.linalg.cho_solve(gram_chol, ri_x.T)
    return 0.5 * (m + m.T)


def _dependent_columns(X: np.ndarray) -> list[int]:
    """Columns of X that a pivoted QR marks as linearly dependent."""
    _, r, pivots = scipy.linalg.qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    if diag.size == 0:
        return []
    tol = diag.max() * max(X.shape) * np.finfo(float).eps
    rank = int(np.count_nonzero(diag > tol))
    return sorted(int(c) for c in pivots[rank:])


def kinship_inverse(K: KinshipMatrix, ridge: float = DEFAULT_KINSHIP_RIDGE) -> np.ndarray:
    """Inverse of the kinship matrix.

    If ``K`` is not positive definite a single ridge ``ridge * I`` is added
    before retrying; the fallback is logged so runs can report it.
    """
    values = K.values
    try:
        chol = scipy.linalg.cho_factor(values, lower=True)
    except scipy.linalg.LinAlgError:
        log.warning(
            "kinship matrix is not positive definite; adding ridge %g to the diagonal",
            ridge,
        )
        try:
            chol = scipy.linalg.cho_factor(values + ridge * np.eye(len(values)), lower=True)
        except scipy.linalg.LinAlgError as exc:
            raise SingularMatrixError(
                f"kinship matrix is singular even with ridge {ridge:g}"
            ) from exc
    inverse = scipy.linalg.cho_solve(chol, np.eye(len(values)))
    return 0.5 * (inverse + inverse.T)


def pev(
    Z: np.ndarray,
    M: np.ndarray,
    K: KinshipMatrix,
    vc: VarianceComponents,
    ridge: float = DEFAULT_KINSHIP_RIDGE,
) -> np.ndarray:
    """Prediction error variance of the genetic effects for one design."""
    g_inv = kinship_inverse(K, ridge=ridge) / vc.sigma_a2
    info = Z.T @ M @ Z / vc.sigma_e2
    coefficient = info + g_inv
    try:
        chol = scipy.linalg.cho_factor(coefficient, lower=True)
    except scipy.linalg.LinAlgError as exc:
        raise SingularMatrixError(
            "information matrix Z'MZ + G^-1 is not positive definite"
        ) from exc
    out = scipy.linalg.cho_solve(chol, np.eye(coefficient.shape[0]))
    return 0.5 * (out + out.T)


def objective(pev_matrix: np.ndarray, cfg: ObjectiveConfig) -> float:
    """Scalar score of a PEV matrix; smaller is better."""
    pev_matrix = np.asarray(pev_matrix, dtype=float)
    n = pev_matrix.shape[0]
    if cfg.mode == "full_trace":
        return float(np.trace(pev_matrix) / n)
    if cfg.k_eigen > n:
        raise SpecError(f"k_eigen: {cfg.k_eigen} exceeds the genotype count {n}")
    try:
        eigenvalues = np.linalg.eigvalsh(pev_matrix)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(
            f"eigenvalue computation failed (condition number {np.linalg.cond(pev_matrix):.3e})"
        ) from exc
    return float(eigenvalues[n - cfg.k_eigen:].mean())


def objective_from_information(info_matrix: np.ndarray, cfg: ObjectiveConfig) -> float:
    """Same score as ``objective`` applied to the inverse of ``info_matrix``.

    The k largest PEV eigenvalues are the reciprocals of the k smallest
    eigenvalues of the information matrix, so the inverse never has to be
    formed.
    """
    info_matrix = np.asarray(info_matrix, dtype=float)
    n = info_matrix.shape[0]
    if cfg.mode == "truncated_eigen" and cfg.k_eigen > n:
        raise SpecError(f"k_eigen: {cfg.k_eigen} exceeds the genotype count {n}")
    # Full decomposition is cheaper than a subset call for small matrices.
    if cfg.mode == "full_trace" or cfg.k_eigen >= n or n <= 64:
        try:
            eigenvalues = np.linalg.eigvalsh(info_matrix)
        except np.linalg.LinAlgError as exc:
            raise NumericalError("eigenvalue computation failed") from exc
        smallest = eigenvalues if cfg.mode == "full_trace" else eigenvalues[: cfg.k_eigen]
    else:
        try:
            smallest = scipy.linalg.eigh(
                info_matrix,
                subset_by_index=(0, cfg.k_eigen - 1),
                eigvals_only=True,
            )
        except scipy.linalg.LinAlgError as exc:
            raise NumericalError("eigenvalue computation failed") from exc
    if smallest[0] <= 0.0:
        raise SingularMatrixError("information matrix is not positive definite")
    return float(np.mean(1.0 / smallest))


def objective_from_downdated_information(
    base_eigvals: np.ndarray,
    base_eigvecs: np.ndarray,
    downdate: np.ndarray,
    cfg: ObjectiveConfig,
) -> float:
    """Same score as ``objective_from_information`` for ``B - W @ W.T``.

    ``base_eigvals`` and ``base_eigvecs`` hold a one-time eigendecomposition
    of the constant part ``B``, with eigenvalues ascending as
    ``numpy.linalg.eigh`` returns them; ``downdate`` is the thin factor
    ``W`` that changes between evaluations.  Working in the eigenbasis of ``B`` makes
    ``B`` diagonal, so a Woodbury identity gives the trace in closed form
    and a shift-invert Lanczos run extracts the extreme eigenvalues without
    ever assembling the full matrix.  Falls back to the dense path for
    small problems or when the iteration does not converge.
    """
    d = np.asarray(base_eigvals, dtype=float)
    n = d.shape[0]
    if d[0] <= 0.0:
        raise SingularMatrixError("information matrix is not positive definite")
    w = base_eigvecs.T @ np.asarray(downdate, dtype=float)
    rank = w.shape[1]
    if rank == 0:
        return objective_from_information(np.diag(d), cfg)
    w_over_d = w / d[:, None]
    cross = np.eye(rank) - w.T @ w_over_d
    cross_eigvals = np.linalg.eigvalsh(cross)
    if cross_eigvals[0] <= 0.0:
        raise SingularMatrixError("information matrix is not positive definite")
    if cfg.mode == "full_trace":
        correction = np.trace(np.linalg.solve(cross, w_over_d.T @ w_over_d))
        return float((np.sum(1.0 / d) + correction) / n)
    if cfg.k_eigen > n:
        raise SpecError(f"k_eigen: {cfg.k_eigen} exceeds the genotype count {n}")
    if n < FAST_EIGEN_MIN_DIMENSION or rank * 4 >= n or 2 * cfg.k_eigen + 1 >= n:
        return objective_from_information(np.diag(d) - w @ w.T, cfg)
    # The inverse of the downdated matrix applied through Woodbury; its k
    # largest eigenvalues are the k largest PEV eigenvalues.
    cross_inv = np.linalg.inv(cross)

    def apply_inverse(x: np.ndarray) -> np.ndarray:
        y = x / d
        return y + w_over_d @ (cross_inv @ (y @ w))

    operator = scipy.sparse.linalg.LinearOperator((n, n), matvec=apply_inverse)
    start_vector = np.full(n, 1.0 / np.sqrt(n))
    try:
        with _ARPACK_LOCK:
            largest = scipy.sparse.linalg.eigsh(
                operator,
                k=cfg.k_eigen,
                which="LM",
                v0=start_vector,
                tol=0.0,
                return_eigenvectors=False,
            )
    except scipy.sparse.linalg.ArpackNoConvergence:
        log.info("falling back to dense eigensolver after a stalled iteration")
        return objective_from_information(np.diag(d) - w @ w.T, cfg)
    return float(np.mean(largest))
