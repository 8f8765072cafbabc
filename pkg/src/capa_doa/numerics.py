"""Dense linear algebra used by the estimator and the bounds.

Hermitian eigendecomposition and the pseudo-inverse delegate to LAPACK
through numpy; :func:`jacobi_eigh` is a self-contained cyclic Jacobi solver
kept as an independent cross-check.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import lapack

from .errors import NumericError, SingularMatrixError

HERMITIAN_RTOL = 1e-8


@dataclass(frozen=True)
class EigenPairs:
    values: np.ndarray  # real, descending
    vectors: np.ndarray  # column i pairs with values[i]


def _check_finite(a, name):
    if not np.all(np.isfinite(a)):
        idx = tuple(int(i) for i in np.argwhere(~np.isfinite(a))[0])
        raise NumericError(f"{name} has non-finite entries", where=idx)


def _hermitian_part(a):
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    _check_finite(a, "matrix")
    scale = np.max(np.abs(a)) if a.size else 0.0
    if np.max(np.abs(a - a.conj().T), initial=0.0) > HERMITIAN_RTOL * scale:
        raise ValueError("matrix is not Hermitian within tolerance")
    return 0.5 * (a + a.conj().T)


def _sort_descending(values, vectors):
    # stable sort keeps the solver's order among exact ties
    order = np.argsort(-values, kind="stable")
    return EigenPairs(values[order], vectors[:, order])


def eig_hermitian(a):
    """Eigendecomposition of a Hermitian matrix, eigenvalues descending."""
    h = _hermitian_part(a)
    values, vectors = np.linalg.eigh(h)
    return _sort_descending(values, vectors)


def jacobi_eigh(a, tol=1e-14, max_sweeps=100):
    """Cyclic Jacobi eigensolver for complex Hermitian matrices.

    Each rotation zeroes one off-diagonal pair; sweeps run in fixed
    row-major order until the off-diagonal Frobenius norm drops below
    ``tol`` times the matrix norm.
    """
    h = _hermitian_part(a).astype(complex)
    n = h.shape[0]
    v = np.eye(n, dtype=complex)
    norm = np.linalg.norm(h)
    if norm == 0.0:
        return EigenPairs(np.zeros(n), v)
    for _ in range(max_sweeps):
        off = np.linalg.norm(h - np.diag(np.diag(h)))
        if off <= tol * norm:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = h[p, q]
                mag = abs(apq)
                if mag <= 1e-300:
                    continue
                # unitary phase makes the pair real, then a real Givens rotation
                phase = apq / mag
                app, aqq = h[p, p].real, h[q, q].real
                theta = 0.5 * np.arctan2(2 * mag, aqq - app)
                c, s = np.cos(theta), np.sin(theta)
                g = np.array([[c, s], [-s * np.conj(phase), c * np.conj(phase)]])
                cols = [p, q]
                h[:, cols] = h[:, cols] @ g
                h[cols, :] = g.conj().T @ h[cols, :]
                v[:, cols] = v[:, cols] @ g
                h[p, q] = h[q, p] = 0.0
    else:
        raise NumericError(f"Jacobi eigensolver did not converge in {max_sweeps} sweeps")
    return _sort_descending(np.real(np.diag(h)).copy(), v)


def pinv(a, rcond=1e-12):
    """Moore-Penrose pseudo-inverse via the SVD.

    Singular values below ``rcond * s_max`` are treated as zero.
    """
    a = np.asarray(a)
    if a.ndim != 2 or min(a.shape) < 1:
        raise ValueError(f"expected a non-empty matrix, got shape {a.shape}")
    if not 0.0 < rcond < 1.0:
        raise ValueError(f"rcond must lie in (0, 1), got {rcond}")
    _check_finite(a, "matrix")
    u, s, vh = np.linalg.svd(a, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros(a.shape[::-1], dtype=a.dtype)
    keep = s > rcond * s[0]
    return (vh[keep].conj().T / s[keep]) @ u[:, keep].conj().T


def solve_spd(a, b):
    """Solve ``A X = B`` for real symmetric positive-definite ``A`` by Cholesky.

    Raises :class:`SingularMatrixError` with the failing pivot when ``A`` is
    not numerically positive definite; in this package that means some
    parameter combination is not identifiable.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    vector_rhs = b.ndim == 1
    if vector_rhs:
        b = b[:, None]
    if a.ndim != 2 or a.shape[0] != a.shape[1] or b.shape[0] != a.shape[0]:
        raise ValueError(f"shape mismatch: A {a.shape}, B {b.shape}")
    _check_finite(a, "A")
    _check_finite(b, "B")
    sym = 0.5 * (a + a.T)
    chol, info = lapack.dpotrf(sym, lower=True, clean=True)
    if info > 0:
        raise SingularMatrixError("matrix is not positive definite", pivot=info - 1)
    # reject pivots that only survive by rounding
    diag = np.diag(chol)
    tiny = diag ** 2 <= 1e-14 * np.max(np.abs(np.diag(sym)))
    if np.any(tiny):
        raise SingularMatrixError("matrix is numerically singular", pivot=int(np.flatnonzero(tiny)[0]))
    x, info = lapack.dpotrs(chol, b, lower=True)
    if info != 0:
        raise NumericError(f"dpotrs failed with info={info}")
    return x[:, 0] if vector_rhs else x


def inv_spd(a):
    return solve_spd(a, np.eye(np.asarray(a).shape[0]))
