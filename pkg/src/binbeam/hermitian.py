"""Small dense kernels for complex Hermitian matrices.

Everything here works on a single M x M matrix; per-frequency batching is
left to the callers. All solves go through a Cholesky factorization with
escalating diagonal loading for nearly singular estimates.
"""

import numpy as np
import scipy.linalg

from .errors import DimensionMismatch, NoConvergence, NotHermitian, NotPositiveDefinite

HERMITIAN_RTOL = 1e-12
LOADING_START = 1e-10
LOADING_RETRIES = 3


def as_hermitian(A, rtol=HERMITIAN_RTOL):
    """Validate ``A`` as a finite square Hermitian matrix and symmetrize it."""
    A = np.asarray(A, dtype=np.complex128)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise NotHermitian("matrix contains NaN or Inf")
    scale = np.linalg.norm(A)
    if np.linalg.norm(A - A.conj().T) > rtol * max(scale, np.finfo(float).tiny):
        raise NotHermitian("matrix is not Hermitian within tolerance")
    return 0.5 * (A + A.conj().T)


def cholesky(A):
    """Lower Cholesky factor of ``A`` with diagonal loading on failure.

    Loading starts at ``1e-10 * trace(A) / M`` and grows tenfold for up to
    three retries. Returns ``(L, loading)``.
    """
    A = as_hermitian(A)
    m = A.shape[0]
    try:
        return scipy.linalg.cholesky(A, lower=True, check_finite=False), 0.0
    except np.linalg.LinAlgError:
        pass
    eps = LOADING_START * np.real(np.trace(A)) / m
    if not eps > 0:
        raise NotPositiveDefinite("matrix has non-positive trace")
    for _ in range(LOADING_RETRIES):
        try:
            L = scipy.linalg.cholesky(A + eps * np.eye(m), lower=True, check_finite=False)
            return L, eps
        except np.linalg.LinAlgError:
            eps *= 10.0
    raise NotPositiveDefinite("Cholesky failed after maximum diagonal loading")


def herm_solve(A, b):
    """Solve ``A x = b`` for Hermitian positive definite ``A``.

    ``b`` may be a vector of length M or an M x K block of right-hand sides.
    """
    L, _ = cholesky(A)
    b = np.asarray(b, dtype=np.complex128)
    if b.shape[0] != L.shape[0]:
        raise DimensionMismatch(f"matrix is {L.shape}, right-hand side is {b.shape}")
    if not np.all(np.isfinite(b)):
        raise DimensionMismatch("right-hand side contains NaN or Inf")
    return scipy.linalg.cho_solve((L, True), b, check_finite=False)


def gevd_principal(A, B):
    """Dominant generalized eigenpair of the pencil ``(A, B)``.

    ``B`` is whitened through its Cholesky factor and the resulting standard
    Hermitian problem is solved with ``eigh``. Returns ``(lam, v)`` with
    ``A v = lam B v`` and ``||v||_2 = 1``.
    """
    A = as_hermitian(A)
    Lb, _ = cholesky(B)
    if A.shape != Lb.shape:
        raise DimensionMismatch(f"pencil shapes differ: {A.shape} vs {Lb.shape}")
    tmp = scipy.linalg.solve_triangular(Lb, A, lower=True, check_finite=False)
    C = scipy.linalg.solve_triangular(Lb, tmp.conj().T, lower=True, check_finite=False)
    C = 0.5 * (C + C.conj().T)
    try:
        vals, vecs = scipy.linalg.eigh(C, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NoConvergence(str(exc)) from exc
    u = vecs[:, -1]
    v = scipy.linalg.solve_triangular(Lb, u, lower=True, trans="C", check_finite=False)
    v = v / np.linalg.norm(v)
    return float(vals[-1]), v


def check_psd(A, tol=1e-9):
    """True iff the smallest eigenvalue of ``A`` is at least ``-tol * ||A||_2``."""
    A = as_hermitian(A, rtol=1e-9)
    vals = np.linalg.eigvalsh(A)
    norm = max(abs(vals[0]), abs(vals[-1]))
    return bool(vals[0] >= -tol * norm)
