"""
Dense linear algebra on float64 row-major arrays.

Matrices and vectors are plain ``numpy.ndarray`` objects of dtype float64;
the helpers here validate shapes and finiteness at the public boundary.
"""
import logging

import numpy as np
from scipy.linalg import lapack

from core.exceptions import DomainError, NonFiniteError, NotPositiveDefiniteError, ShapeMismatchError

logger = logging.getLogger(__name__)

PIVOT_TOLERANCE = 1e-12
SYMMETRY_TOLERANCE = 1e-12


def as_matrix(a, name='matrix'):
    """Coerce ``a`` to a 2-D float64 array."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeMismatchError(f"{name} must be 2-D, got shape {arr.shape}")
    return arr


def as_vector(x, name='vector'):
    """Coerce ``x`` to a 1-D float64 array."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise ShapeMismatchError(f"{name} must be 1-D, got shape {arr.shape}")
    return arr


def require_finite(arr, what='result'):
    """Raise NonFiniteError if ``arr`` contains NaN or infinity."""
    values = np.asarray(arr)
    if not np.all(np.isfinite(values)):
        first = tuple(int(i) for i in np.argwhere(~np.isfinite(values))[0]) if values.ndim else ()
        raise NonFiniteError(f"Non-finite value in {what}", location=first)
    return arr


def matmul(a, b):
    """Standard matrix product with shape checking."""
    a = as_matrix(a, 'left operand')
    b = as_matrix(b, 'right operand')
    if a.shape[1] != b.shape[0]:
        raise ShapeMismatchError("Cannot multiply matrices", a.shape, b.shape)
    return require_finite(a @ b, 'matmul')


def cholesky(a):
    """
    Lower-triangular factor L with L @ L.T == a.

    Uses LAPACK ``dpotrf`` so the failing leading minor can be reported;
    pivots (squared diagonal entries of L) at or below 1e-12 are rejected.
    """
    a = as_matrix(a, 'cholesky input')
    if a.shape[0] != a.shape[1]:
        raise ShapeMismatchError("Cholesky needs a square matrix", a.shape, a.shape[::-1])
    require_finite(a, 'cholesky input')
    scale = max(1.0, float(np.max(np.abs(a)))) if a.size else 1.0
    if np.max(np.abs(a - a.T), initial=0.0) > SYMMETRY_TOLERANCE * scale:
        raise DomainError("Cholesky input is not symmetric")

    factor, info = lapack.dpotrf(a, lower=1, clean=1)
    if info > 0:
        raise NotPositiveDefiniteError(pivot=int(info) - 1)
    if info < 0:
        raise DomainError(f"dpotrf rejected argument {-info}")

    pivots = np.diag(factor) ** 2
    bad = np.flatnonzero(pivots <= PIVOT_TOLERANCE)
    if bad.size:
        raise NotPositiveDefiniteError(pivot=int(bad[0]), value=float(pivots[bad[0]]))
    return np.tril(factor)


def log_det_from_cholesky(factor):
    """log det(L L^T) for a Cholesky factor with positive diagonal."""
    return 2.0 * float(np.sum(np.log(np.abs(np.diag(factor)))))
