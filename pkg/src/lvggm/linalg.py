"""Dense symmetric linear algebra foundation.

Symmetric matrices are carried as plain ``(p, p)`` float64 ndarrays; every
routine that constructs one symmetrizes as ``(A + A.T) / 2`` so that iterates
stay exactly in the symmetric cone. Low-rank positive semidefinite matrices
are carried as ``(p, r)`` factors ``U`` with ``L = U @ U.T``.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve


class NotPositiveDefiniteError(Exception):
    """Raised when a Cholesky factorization (or an inner Woodbury solve)
    encounters a matrix that is not positive definite."""


def symmetrize(A):
    """Return ``(A + A.T) / 2`` as a float64 array.

    Applied at every construction site to suppress rounding drift.
    """
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    return (A + A.T) / 2.0


def check_finite_symmetric(A, name="matrix"):
    """Validate that ``A`` is square, finite and symmetric; return it as float64."""
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"{name} must be square, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError(f"{name} contains non-finite entries")
    if not np.array_equal(A, A.T):
        scale = max(1.0, float(np.abs(A).max()))
        if np.abs(A - A.T).max() > 1e-12 * scale:
            raise ValueError(f"{name} is not symmetric")
        A = symmetrize(A)
    return A


class Spectrum:
    """Full eigendecomposition of a symmetric matrix, sorted descending.

    Attributes
    ----------
    eigenvalues : (p,) ndarray, descending order
    eigenvectors : (p, p) ndarray, orthonormal columns, ``A = V diag(w) V.T``
    """

    __slots__ = ("eigenvalues", "eigenvectors")

    def __init__(self, eigenvalues, eigenvectors):
        self.eigenvalues = eigenvalues
        self.eigenvectors = eigenvectors

    def reconstruct(self):
        return symmetrize((self.eigenvectors * self.eigenvalues) @ self.eigenvectors.T)


def sym_evd(A):
    """Eigendecomposition of a symmetric matrix with eigenvalues descending.

    Ties between equal eigenvalues keep the earlier index of the descending
    sort, so results are deterministic for a fixed LAPACK backend.
    """
    A = check_finite_symmetric(A)
    w, V = np.linalg.eigh(A)
    return Spectrum(w[::-1].copy(), V[:, ::-1].copy())


def frobenius_inner(A, B):
    """Frobenius inner product ``sum_ij A_ij * B_ij``."""
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if A.shape != B.shape:
        raise ValueError(f"shape mismatch: {A.shape} vs {B.shape}")
    return float(np.sum(A * B))


def best_rank_r(A, r):
    """Best rank-``r`` approximation of a symmetric matrix in Frobenius norm.

    Keeps the ``r`` eigencomponents of largest magnitude (for symmetric
    matrices the singular values are the absolute eigenvalues).
    """
    A = check_finite_symmetric(A)
    p = A.shape[0]
    if not 1 <= r <= p:
        raise ValueError(f"rank r={r} out of range [1, {p}]")
    spec = sym_evd(A)
    # rank by |eigenvalue|; stable sort keeps the earlier (larger-eigenvalue)
    # index on ties
    order = np.argsort(-np.abs(spec.eigenvalues), kind="stable")[:r]
    w = spec.eigenvalues[order]
    V = spec.eigenvectors[:, order]
    return symmetrize((V * w) @ V.T)


class CholeskyFactor:
    """Opaque handle around a Cholesky factorization of an SPD matrix.

    Computed once per solver run for the fixed sparse part and reused across
    gradient evaluations.  The dense inverse is materialized lazily the first
    time :attr:`inverse` is accessed and cached thereafter.
    """

    def __init__(self, factor, lower):
        self._factor = factor
        self._lower = lower
        self._inverse = None

    @property
    def dim(self):
        return self._factor.shape[0]

    def solve(self, b):
        """Solve ``A x = b`` using the cached factorization."""
        return cho_solve((self._factor, self._lower), b, check_finite=False)

    @property
    def inverse(self):
        """Dense inverse of the factored matrix (computed once, cached)."""
        if self._inverse is None:
            self._inverse = symmetrize(self.solve(np.eye(self.dim)))
        return self._inverse

    @property
    def logdet(self):
        return 2.0 * float(np.sum(np.log(np.diag(self._factor))))


def cholesky_logdet(A):
    """Cholesky-factor a symmetric matrix and return ``(factor, log det A)``.

    Raises
    ------
    NotPositiveDefiniteError
        If ``A`` is not positive definite.  Solvers use this as the
        backtracking signal for steps that leave the PD cone.
    """
    A = check_finite_symmetric(A)
    try:
        c, lower = cho_factor(A, lower=True)
    except LinAlgError as exc:
        raise NotPositiveDefiniteError(str(exc)) from exc
    fac = CholeskyFactor(c, lower)
    return fac, fac.logdet


def woodbury_inverse(S_chol, U):
    """Inverse of ``S + U @ U.T`` via the Woodbury identity.

    Uses the cached dense ``S``-inverse of the factor, so the per-call cost
    is ``O(p^2 r + r^3)``; the dense inverse of the *sum* is never formed
    directly.

    Raises
    ------
    NotPositiveDefiniteError
        If the inner ``r x r`` system ``I + U.T S^-1 U`` is not positive
        definite, which signals ``S + U U.T`` leaving the PD cone.
    """
    U = np.asarray(U, dtype=np.float64)
    if U.ndim != 2 or U.shape[0] != S_chol.dim:
        raise ValueError(f"factor shape {U.shape} incompatible with dim {S_chol.dim}")
    S_inv = S_chol.inverse
    X = S_inv @ U  # S^-1 U, (p, r)
    K = np.eye(U.shape[1]) + U.T @ X
    try:
        kc, klower = cho_factor(symmetrize(K), lower=True)
    except LinAlgError as exc:
        raise NotPositiveDefiniteError("inner Woodbury system not PD") from exc
    correction = X @ cho_solve((kc, klower), X.T, check_finite=False)
    return symmetrize(S_inv - correction)


def woodbury_inverse_eig(S_chol, V, d):
    """Inverse of ``S + V diag(d) V.T`` for a possibly indefinite eigenform.

    ``V`` is ``(p, r)`` with orthonormal columns and ``d`` may carry negative
    entries (approximate-projection iterates).  The inner ``r x r`` solve uses
    the symmetric form ``(diag(d)^-1 + V.T S^-1 V)^-1`` rewritten to avoid
    inverting ``d``:  ``K = diag(d) (I + V.T S^-1 V diag(d))^-1``, which is
    symmetric whenever it exists.

    Raises
    ------
    NotPositiveDefiniteError
        If ``S + V diag(d) V.T`` is singular at the inner solve.
    """
    V = np.asarray(V, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    S_inv = S_chol.inverse
    if V.shape[1] == 0:
        return S_inv.copy()
    K, M = woodbury_core_eig(S_chol, V, d)
    return symmetrize(S_inv - (M @ K) @ M.T)


def woodbury_core_eig(S_chol, V, d):
    """Inner pieces of the eigenform Woodbury update.

    Returns ``(K, M)`` with ``M = S^-1 V`` and
    ``K = diag(d) (I + V.T M diag(d))^-1`` (symmetric), so that
    ``(S + V diag(d) V.T)^-1 = S^-1 - M K M.T``.
    """
    M = S_chol.inverse @ V
    G = V.T @ M  # V.T S^-1 V, SPD
    inner = np.eye(len(d)) + G * d[np.newaxis, :]
    try:
        K = np.linalg.solve(inner.T, np.diag(d)).T  # diag(d) @ inv(inner)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError("inner Woodbury system singular") from exc
    return (K + K.T) / 2.0, M
