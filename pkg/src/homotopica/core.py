"""Dense-matrix primitives: centering, thin SVD and PCA whitening.

Matrices follow one orientation throughout the package: rows are time
points (or principal components, or components) and columns are voxels.
Voxels are the samples of spatial ICA, so "centering" removes each row's
mean over the voxels.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceFailure, NotCentered, RankDeficient

RANK_RTOL = 1e-10
CENTER_ATOL = 1e-6


def as_matrix(X, name="X"):
    """Return ``X`` as a finite 2-D float64 array with at least one entry."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[np.newaxis, :]
    if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
        raise ValueError(f"{name} must be a non-empty 2-D matrix, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contains non-finite entries")
    return X


def center_rows(X):
    """Subtract each row's mean so that every row sums to zero."""
    X = as_matrix(X)
    return X - X.mean(axis=1, keepdims=True)


def standardize_rows(X):
    """Center rows and scale them to unit (population) variance.

    Rows with zero variance are left centered at zero instead of dividing
    by zero.
    """
    Xc = center_rows(X)
    sd = Xc.std(axis=1, keepdims=True)
    return Xc / np.where(sd > 0, sd, 1.0)


def svd_thin(X):
    """Thin SVD ``X = U @ diag(s) @ Vt`` with a deterministic sign convention.

    Each left singular vector is flipped so that its entry of largest
    magnitude is positive (the matching row of ``Vt`` flips with it).
    Two matrices that share a column space up to duplication, such as
    ``[Y, Y]`` and ``[Y; Y]``, therefore get consistent signs.
    """
    X = as_matrix(X)
    try:
        U, s, Vt = np.linalg.svd(X, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceFailure(f"SVD did not converge: {exc}") from exc
    idx = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[idx, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    return U * signs, s, Vt * signs[:, np.newaxis]


def numerical_rank(s, rtol=RANK_RTOL):
    """Count singular values above ``rtol * max(s)``."""
    s = np.asarray(s)
    if s.size == 0 or s[0] <= 0:
        return 0
    return int(np.sum(s > rtol * s[0]))


@dataclass(frozen=True)
class WhiteningResult:
    """Output of :func:`pca_whiten`.

    Attributes
    ----------
    K : ndarray, shape (q, m)
        Whitening operator, ``Z = K @ X``.
    Z : ndarray, shape (q, V)
        Whitened data with ``Z @ Z.T / V == I``.
    singular_values : ndarray, shape (q,)
        Retained singular values of ``X / sqrt(V)``, descending.
    dewhiten : ndarray, shape (m, q)
        Back-projection; ``dewhiten @ Z`` is the rank-q approximation of X.
    """

    K: np.ndarray
    Z: np.ndarray
    singular_values: np.ndarray
    dewhiten: np.ndarray

    @property
    def n_components(self):
        return self.K.shape[0]


def pca_whiten(X, q, rank_policy="strict"):
    """Reduce the centered matrix ``X`` (m x V) to ``q`` whitened rows.

    With ``X / sqrt(V) = U S Vt`` the operator is ``K = S_q^-1 U_q^T``, so
    the sample covariance of ``Z = K X`` (normalized by V) is the identity.

    Parameters
    ----------
    X : array_like, shape (m, V)
        Row-centered data.
    q : int
        Number of components to keep.
    rank_policy : {"strict", "truncate"}
        ``"strict"`` raises :class:`RankDeficient` when fewer than ``q``
        singular values exceed the relative tolerance; ``"truncate"``
        keeps ``min(q, rank)`` components instead (possibly zero).
    """
    X = as_matrix(X)
    m, V = X.shape
    if not 1 <= q <= min(m, V):
        raise ValueError(f"q must lie in [1, {min(m, V)}], got {q}")
    if np.max(np.abs(X.mean(axis=1))) > CENTER_ATOL:
        raise NotCentered("rows of X must be mean-zero before whitening")
    U, s, Vt = svd_thin(X / np.sqrt(V))
    rank = numerical_rank(s)
    if rank < q:
        if rank_policy == "strict":
            raise RankDeficient(
                f"requested {q} components but only {rank} singular values "
                f"exceed {RANK_RTOL:g} x sigma_max"
            )
        if rank_policy != "truncate":
            raise ValueError(f"unknown rank_policy {rank_policy!r}")
        q = rank
    U, s = U[:, :q], s[:q]
    K = U.T / s[:, np.newaxis]
    Z = np.sqrt(V) * Vt[:q]
    return WhiteningResult(K=K, Z=Z, singular_values=s, dewhiten=U * s)
