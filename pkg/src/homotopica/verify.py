"""Explicit whitening constructions behind the gICA / H-gICA equivalence.

For a row-centered reduced stack ``X1`` (left hemispheres) with
``X1 / sqrt(V) = U S Vt``, the doubled-row stack ``[X1; X1]`` is whitened by
``K_h = 1/2 S^-1 [U^T, U^T]`` and the doubled-column stack ``[X1, X1]`` by
``K_g = S^-1 U^T``. Both give the same whitened rows ``Z = sqrt(V) Vt``,
once as ``Z`` and once as ``[Z, Z]``, so every fixed-point update agrees.
"""

from dataclasses import dataclass, field

import numpy as np

from .core import CENTER_ATOL, WhiteningResult, as_matrix, numerical_rank, svd_thin
from .errors import NotCentered, RankDeficient
from .fastica import get_contrast

IDENTITY_ATOL = 1e-8


@dataclass
class AppendixWhiteners:
    """``K_h``, ``K_g`` and the whitened data, all from one SVD of ``X1``."""

    K_h: np.ndarray
    K_g: np.ndarray
    Z: np.ndarray
    Z_tilde: np.ndarray
    singular_values: np.ndarray
    U: np.ndarray
    identity_gap: float = 0.0

    def row_stack_whitening(self):
        """Group whitener for the doubled-row stack ``[X1; X1]``."""
        s = self.singular_values
        return WhiteningResult(self.K_h, self.Z, np.sqrt(2.0) * s,
                               np.vstack([self.U, self.U]) * s)

    def column_stack_whitening(self):
        """Group whitener for the doubled-column stack ``[X1, X1]``."""
        s = self.singular_values
        return WhiteningResult(self.K_g, self.Z_tilde, s, self.U * s)


def build_appendix_whiteners(X1, rank=None):
    """Construct ``K_h``, ``K_g`` and the two whitened matrices from ``X1``.

    Keeps every singular value above the relative rank tolerance (or the
    leading ``rank`` ones) and checks ``K_h [X1; X1] = Z`` and
    ``K_g [X1, X1] = [Z, Z]`` to 1e-8.
    """
    X1 = as_matrix(X1, "X1")
    if np.max(np.abs(X1.mean(axis=1))) > CENTER_ATOL:
        raise NotCentered("X1 must be row-demeaned")
    V = X1.shape[1]
    U, s, Vt = svd_thin(X1 / np.sqrt(V))
    r = numerical_rank(s)
    if r == 0:
        raise RankDeficient("X1 has no non-zero singular values")
    if rank is not None:
        if rank > r:
            raise RankDeficient(f"X1 has rank {r} < {rank}")
        r = rank
    U, s, Vt = U[:, :r], s[:r], Vt[:r]
    K_g = U.T / s[:, np.newaxis]
    K_h = 0.5 * np.hstack([K_g, K_g])
    Z = np.sqrt(V) * Vt
    Z_tilde = np.hstack([Z, Z])
    gap_h = np.max(np.abs(K_h @ np.vstack([X1, X1]) - Z))
    gap_g = np.max(np.abs(K_g @ np.hstack([X1, X1]) - Z_tilde))
    if max(gap_h, gap_g) > IDENTITY_ATOL * max(1.0, np.max(np.abs(Z))):
        raise AssertionError(
            f"whitening identities violated (row stack {gap_h:.3g}, column stack {gap_g:.3g})"
        )
    return AppendixWhiteners(K_h, K_g, Z, Z_tilde, s, U, float(max(gap_h, gap_g)))


def fixed_point_update(w, Z, contrast="logcosh"):
    """``E{z g(w^T z)} - E{g'(w^T z)} w`` over the columns of ``Z``."""
    G = get_contrast(contrast)
    y = w @ Z
    return (Z @ G.g(y)) / Z.shape[1] - G.g_prime(y).mean() * w


def fixed_point_step_equality(Z, Z_tilde, w, contrast="logcosh"):
    """Max-abs gap between one fixed-point update on ``Z`` and on ``Z_tilde``."""
    w = np.asarray(w, dtype=np.float64).ravel()
    if abs(np.linalg.norm(w) - 1.0) > 1e-10:
        raise ValueError("w must be a unit vector")
    a = fixed_point_update(w, as_matrix(Z), contrast)
    b = fixed_point_update(w, as_matrix(Z_tilde), contrast)
    return float(np.max(np.abs(a - b)))


@dataclass
class EquivalenceWitness:
    """Evidence that H-gICA and gICA coincide on one dataset.

    ``S_gap`` compares the gICA maps with ``[S_h, S_h]``; ``W_gap`` compares
    the H-gICA unmixing of the stacked reduced data with ``1/2 [W_g, W_g]``;
    ``step_gaps`` holds the max-abs difference of the whitened-space
    iterates at every FastICA step; ``K_gap`` compares the H-gICA group
    whitener with ``1/2 S^-1 [U^T, U^T]``. ``pipeline_S_gap`` repeats the map comparison
    with each pipeline running its own group PCA, which is informative
    only: when the group spectrum is degenerate the two SVDs may pick
    different bases and the iterations then follow different paths.
    """

    K_h: np.ndarray
    K_g: np.ndarray
    S_gap: float
    W_gap: float
    K_gap: float
    step_gaps: list = field(default_factory=list)
    iterations: tuple = (0, 0)
    iterations_matched: bool = False
    pipeline_S_gap: float = float("nan")

    @property
    def max_step_gap(self):
        return max(self.step_gaps) if self.step_gaps else 0.0

    def to_dict(self):
        return {
            "K_h": self.K_h.tolist(),
            "K_g": self.K_g.tolist(),
            "S_gap": self.S_gap,
            "W_gap": self.W_gap,
            "K_gap": self.K_gap,
            "max_step_gap": self.max_step_gap,
            "step_gaps": list(self.step_gaps),
            "iterations": list(self.iterations),
            "iterations_matched": self.iterations_matched,
            "pipeline_S_gap": self.pipeline_S_gap,
        }
