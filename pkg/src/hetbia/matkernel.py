"""Dense complex-matrix kernel.

Thin, convention-pinning wrappers around numpy/LAPACK. Everything here
operates on plain ``numpy.ndarray`` of dtype complex128 (row-major); the
wrappers exist so that the rest of the package gets a *deterministic*
null-space basis and an explicit rank failure instead of a silent
least-squares fallback.

All functions are pure; inputs are never modified.
"""

import numpy as np

from .errors import RankDeficient

#: Relative singular-value cutoff used for rank decisions throughout.
DEFAULT_TOL = 1e-10


def dagger(a):
    """Conjugate transpose (works on stacked matrices ``(..., m, n)``)."""
    return np.conj(np.swapaxes(a, -1, -2))


def kron(a, b):
    """Kronecker product of two 2-D matrices.

    Result has shape ``(a.rows*b.rows, a.cols*b.cols)``; block (i, j)
    equals ``a[i, j] * b``.
    """
    return np.kron(np.asarray(a), np.asarray(b))


def phase_fix_columns(q, eps=0.0):
    """Rotate each column of ``q`` so its largest-magnitude entry is real
    and positive (ties broken by lowest row index).

    Accepts stacked input ``(..., m, k)``. Columns that are entirely zero
    (magnitude <= eps) are left untouched. This is the deterministic basis
    convention every null-space consumer in the package relies on.
    """
    q = np.array(q, dtype=complex)
    if q.shape[-1] == 0:
        return q
    idx = np.argmax(np.abs(q), axis=-2, keepdims=True)
    pivot = np.take_along_axis(q, idx, axis=-2)
    mag = np.abs(pivot)
    phase = np.where(mag > eps, np.conj(pivot) / np.where(mag > eps, mag, 1.0), 1.0)
    return q * phase


def nullspace(a, tol=DEFAULT_TOL):
    """Orthonormal basis of the (right) null space ``{x : a @ x = 0}``.

    Singular values below ``tol * s_max`` are treated as zero. Returns an
    ``n x d`` matrix with orthonormal columns (``d = 0`` for full column
    rank), phase-fixed by :func:`phase_fix_columns` so the basis is
    deterministic across runs and platforms.
    """
    a = np.asarray(a, dtype=complex)
    _, s, vh = np.linalg.svd(a)
    if s.size == 0 or s[0] == 0.0:
        rank = 0
    else:
        rank = int(np.sum(s > tol * s[0]))
    basis = vh[rank:].conj().T
    return phase_fix_columns(basis)


def pinv_solve(a, y, rcond=DEFAULT_TOL):
    """Least-squares solution ``argmin_x ||a @ x - y||``.

    For square invertible ``a`` this equals ``inv(a) @ y``. Raises
    :class:`RankDeficient` when the numerical rank of ``a`` (at relative
    cutoff ``rcond``) is below its column count, signalling a degenerate
    channel draw.
    """
    a = np.asarray(a, dtype=complex)
    y = np.asarray(y, dtype=complex)
    x, _, rank, _ = np.linalg.lstsq(a, y, rcond=rcond)
    if rank < a.shape[1]:
        raise RankDeficient(
            f"matrix has numerical rank {rank} < {a.shape[1]} columns"
        )
    return x


def det(a):
    """Determinant of a square matrix (LU with partial pivoting), complex."""
    a = np.asarray(a, dtype=complex)
    if a.shape[-1] != a.shape[-2]:
        raise ValueError(f"determinant needs a square matrix, got {a.shape}")
    return complex(np.linalg.det(a))
