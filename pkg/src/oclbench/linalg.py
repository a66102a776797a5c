"""Small dense symmetric linear algebra.

Only what the discriminant learners need: a pivot-free Cholesky that reports
the failing pivot, and the shrunk inverse ``[(1 - eps) S + eps I]^-1``.
"""

import numpy as np
from scipy.linalg import solve_triangular

from .errors import ContractError, NumericError


def check_symmetric(a, name="matrix"):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ContractError(f"{name} must be square, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ContractError(f"{name} has non-finite entries")
    tol = 1e-6 * np.maximum(1.0, np.abs(a))
    if np.any(np.abs(a - a.T) > tol):
        raise ContractError(f"{name} is not symmetric")
    return a


def cholesky(a):
    """Lower-triangular ``L`` with ``L @ L.T == a``.

    Raises :class:`NumericError` with ``pivot`` set to the first row whose
    pivot is not strictly positive.
    """
    a = np.asarray(a, dtype=np.float64)
    n = a.shape[0]
    L = np.zeros_like(a)
    for j in range(n):
        row = L[j, :j]
        pivot = a[j, j] - row @ row
        if not pivot > 0.0:
            raise NumericError(f"matrix is not positive definite at pivot {j} (value {pivot:.3e})", pivot=j)
        ljj = np.sqrt(pivot)
        L[j, j] = ljj
        if j + 1 < n:
            L[j + 1 :, j] = (a[j + 1 :, j] - L[j + 1 :, :j] @ row) / ljj
    return L


def shrink(sigma, eps):
    sigma = check_symmetric(sigma, "covariance")
    if not eps > 0:
        raise ContractError(f"shrinkage eps must be > 0, got {eps}")
    n = sigma.shape[0]
    return (1.0 - eps) * sigma + eps * np.eye(n)


def inverse_from_cholesky(L):
    n = L.shape[0]
    Linv = solve_triangular(L, np.eye(n), lower=True, check_finite=False)
    inv = Linv.T @ Linv
    return 0.5 * (inv + inv.T)


def shrunk_inverse(sigma, eps=1e-4):
    """``[(1 - eps) * sigma + eps * I]^-1`` via Cholesky."""
    return inverse_from_cholesky(cholesky(shrink(sigma, eps)))


def shrunk_inverse_logdet(sigma, eps=1e-4):
    """Shrunk inverse together with ``log det`` of the shrunk matrix."""
    L = cholesky(shrink(sigma, eps))
    return inverse_from_cholesky(L), 2.0 * float(np.sum(np.log(np.diag(L))))
