"""Dense matrix kernels and special functions.

Matrices and vectors are plain ``numpy`` float64 arrays; the helpers here
validate shapes and finiteness and wrap the LAPACK / cephes routines that the
rest of the package builds on.
"""

from __future__ import annotations

import numpy as np
from scipy import linalg, special

from .errors import DimensionMismatch, DomainError, NotPositiveDefinite

SYMMETRY_TOL = 1e-10
DEFAULT_RIDGE_SCALE = 1e-6


def as_vector(values, name: str = "vector") -> np.ndarray:
    """Return ``values`` as a finite 1-D float64 array."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def as_matrix(values, name: str = "matrix") -> np.ndarray:
    """Return ``values`` as a finite 2-D float64 array."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be two-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def _check_symmetric(a: np.ndarray) -> None:
    if a.shape[0] != a.shape[1]:
        raise DimensionMismatch(a.shape[0], a.shape[1], "square matrix")
    scale = max(1.0, float(np.max(np.abs(a)))) if a.size else 1.0
    if np.max(np.abs(a - a.T), initial=0.0) > SYMMETRY_TOL * scale:
        raise NotPositiveDefinite(
            "Matrix is not symmetric",
            suggestion="Symmetrize the matrix, e.g. (A + A.T) / 2.",
        )


def cholesky(a) -> np.ndarray:
    """
    Lower-triangular Cholesky factor of a symmetric positive-definite matrix.

    Parameters
    ----------
    a : array_like
        Square symmetric matrix.

    Returns
    -------
    numpy.ndarray
        ``L`` with ``L @ L.T == a``.

    Raises
    ------
    NotPositiveDefinite
        If ``a`` is asymmetric beyond tolerance or a pivot is not positive.
    """
    a = as_matrix(a)
    _check_symmetric(a)
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError as e:
        raise NotPositiveDefinite(
            f"Matrix is not positive definite: {e}",
            suggestion="Add a ridge to the diagonal or drop collinear features.",
        ) from e


def default_ridge(sigma) -> float:
    """Ridge used for empirical covariances: ``1e-6 * trace(sigma) / d``."""
    sigma = as_matrix(sigma)
    return DEFAULT_RIDGE_SCALE * float(np.trace(sigma)) / sigma.shape[0]


def sym_eig(sigma, ridge: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of ``sigma + ridge * I``, requiring positive eigenvalues."""
    sigma = as_matrix(sigma)
    _check_symmetric(sigma)
    if ridge < 0:
        raise DomainError("ridge must be non-negative")
    shifted = sigma + ridge * np.eye(sigma.shape[0])
    eigvals, eigvecs = linalg.eigh(shifted)
    if eigvals[0] <= 0:
        raise NotPositiveDefinite(
            f"Smallest eigenvalue {eigvals[0]:.3e} is not positive",
            suggestion="Increase the covariance ridge.",
        )
    return eigvals, eigvecs


def sym_inv_sqrt(sigma, ridge: float = 0.0) -> np.ndarray:
    """
    Symmetric inverse square root ``(sigma + ridge I)^(-1/2)``.

    The result ``R`` satisfies ``R.T @ R == inv(sigma + ridge I)``, so
    ``||R @ delta||_2`` is the Mahalanobis norm of ``delta``.
    """
    eigvals, eigvecs = sym_eig(sigma, ridge)
    r = (eigvecs / np.sqrt(eigvals)) @ eigvecs.T
    return 0.5 * (r + r.T)


def sym_sqrt(sigma, ridge: float = 0.0) -> np.ndarray:
    """Symmetric square root ``(sigma + ridge I)^(1/2)``, the inverse of :func:`sym_inv_sqrt`."""
    eigvals, eigvecs = sym_eig(sigma, ridge)
    r = (eigvecs * np.sqrt(eigvals)) @ eigvecs.T
    return 0.5 * (r + r.T)


def chi_cdf(dof: int, x) -> np.ndarray:
    """CDF of the chi distribution with ``dof`` degrees of freedom."""
    x = np.asarray(x, dtype=np.float64)
    return special.gammainc(dof / 2.0, np.maximum(x, 0.0) ** 2 / 2.0)


def chi_quantile(dof: int, p: float) -> float:
    """
    Quantile of the chi distribution (the norm of a ``dof``-dimensional
    standard normal vector).

    Computed through the inverse regularized lower incomplete gamma function:
    ``x = sqrt(2 * P^{-1}(dof/2, p))``.

    Raises
    ------
    DomainError
        If ``p`` lies outside ``[0, 1)`` or ``dof < 1``.
    """
    if dof < 1 or int(dof) != dof:
        raise DomainError(f"degrees of freedom must be a positive integer, got {dof}")
    if not (0.0 <= p < 1.0):
        raise DomainError(f"probability must lie in [0, 1), got {p}")
    if p == 0.0:
        return 0.0
    return float(np.sqrt(2.0 * special.gammaincinv(dof / 2.0, p)))
