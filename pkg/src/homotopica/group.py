"""Temporal-concatenation group ICA.

Each subject is centered and reduced by PCA, the reduced matrices are
stacked along time, the stack is reduced again, and FastICA runs on the
result. Subject time courses come back by least-squares projection of
each subject's reduced data onto the group maps.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .core import WhiteningResult, as_matrix, center_rows, pca_whiten, standardize_rows
from .errors import ShapeMismatch, Singular
from .fastica import FastICAOptions, fastica_fit

logger = logging.getLogger(__name__)

PINV_COND_MAX = 1e12


@dataclass
class SubjectData:
    subject_id: str
    X: np.ndarray


@dataclass
class GroupDecomposition:
    """Group maps plus everything needed to recover per-block loadings.

    Attributes
    ----------
    method : {"gica", "hgica"}
    S_hat : ndarray, shape (Q, V)
        Standardized source maps (row mean 0, variance 1).
    M_hat : ndarray, shape (n_stacked_rows, Q)
        Group mixing matrix in reduced coordinates, ``Y ~ M_hat @ S_hat``.
    blocks : list of (subject_index, hemisphere)
        Stacking order of the reduced blocks; ``hemisphere`` is ``None``
        for ordinary group ICA and 0 (left) / 1 (right) otherwise.
    block_whitening : list of WhiteningResult
        The first-level reduction of every block, same order as ``blocks``.
    group_whitening : WhiteningResult
    unmixing : UnmixingEstimate
    map_signs : ndarray, shape (Q,)
        Sign applied to each row of ``W @ Z`` to obtain ``S_hat``.
    """

    method: str
    S_hat: np.ndarray
    M_hat: np.ndarray
    blocks: list
    block_whitening: list
    group_whitening: object
    unmixing: object
    map_signs: np.ndarray
    subject_ids: list = field(default_factory=list)
    options: dict = field(default_factory=dict)

    @property
    def n_components(self):
        return self.S_hat.shape[0]

    @property
    def n_subjects(self):
        return len(self.subject_ids)

    def block_index(self, subject, hemisphere=None):
        try:
            return self.blocks.index((subject, hemisphere))
        except ValueError:
            raise KeyError(f"no block for subject {subject}, hemisphere {hemisphere}") from None

    def block_rows(self, b):
        start = sum(w.n_components for w in self.block_whitening[:b])
        return slice(start, start + self.block_whitening[b].n_components)

    @property
    def subject_mixing(self):
        """Reduced-space loadings of every block, in stacking order."""
        return [self.M_hat[self.block_rows(b)] for b in range(len(self.blocks))]

    @property
    def group_unmixing(self):
        """Unmixing of the stacked reduced data: ``S_raw = W_hat @ Y``."""
        return self.unmixing.W @ self.group_whitening.K

    def time_courses(self, subject, hemisphere=None):
        """Loadings mapped back to the time domain, shape (T, Q)."""
        b = self.block_index(subject, hemisphere)
        return self.block_whitening[b].dewhiten @ back_reconstruct(self, subject, hemisphere)


def project_onto_maps(X_reduced, S_hat):
    """Least-squares loadings ``X S^T (S S^T)^-1`` of ``X`` on the maps ``S``."""
    S = as_matrix(S_hat, "S_hat")
    X = np.asarray(X_reduced, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != S.shape[1]:
        raise ShapeMismatch(
            f"reduced data has shape {X.shape}, maps have {S.shape[1]} columns"
        )
    gram = S @ S.T
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond > PINV_COND_MAX:
        raise Singular(f"S_hat S_hat^T is ill-conditioned (cond={cond:.3g})")
    return np.linalg.solve(gram, S @ X.T).T


def back_reconstruct(decomp, subject_index, hemisphere=None):
    """Recover the reduced-space loadings of one subject (or hemisphere)."""
    b = decomp.block_index(subject_index, hemisphere)
    return project_onto_maps(decomp.block_whitening[b].Z, decomp.S_hat)


def reduce_block(X, q, rank_policy="truncate"):
    """Center one time-by-voxel block and whiten it to (at most) ``q`` rows."""
    X = as_matrix(X)
    T = X.shape[0]
    if q > T:
        raise ValueError(f"q_subject={q} exceeds the {T} available time points")
    wr = pca_whiten(center_rows(X), q, rank_policy=rank_policy)
    if wr.n_components < q:
        logger.info("block reduced to rank %d < q_subject=%d", wr.n_components, q)
    return wr


def skew_signs(S):
    """+1/-1 per row so that each row has non-negative skewness."""
    sk = np.mean(S**3, axis=1)
    return np.where(sk < 0, -1.0, 1.0)


def fit_stacked(block_whitening, q_group, options=None, *, group_pca=True,
                group_whitening=None, record_history=False):
    """Shared group stage: stack reduced blocks, whiten, run FastICA.

    ``group_whitening`` replaces the group PCA by a precomputed operator
    (only its ``K`` and ``dewhiten`` are used; ``Z`` is recomputed from the
    stack). Returns ``(S_hat, M_hat, group_whitening, unmixing, signs)``.
    """
    Y = np.vstack([w.Z for w in block_whitening])
    if not group_pca and q_group != Y.shape[0]:
        raise ValueError(
            "without the group PCA step q_group must equal the stacked row "
            f"count {Y.shape[0]}"
        )
    if group_whitening is None:
        gw = pca_whiten(center_rows(Y), q_group, rank_policy="strict")
    else:
        K = np.asarray(group_whitening.K, dtype=np.float64)
        if K.shape != (q_group, Y.shape[0]):
            raise ShapeMismatch(
                f"group whitener has shape {K.shape}, expected {(q_group, Y.shape[0])}"
            )
        gw = WhiteningResult(K, K @ center_rows(Y), group_whitening.singular_values,
                             group_whitening.dewhiten)
    est = fastica_fit(gw.Z, options, record_history=record_history)
    S_raw = est.W @ gw.Z
    signs = skew_signs(S_raw)
    S_hat = standardize_rows(S_raw * signs[:, np.newaxis])
    M_hat = project_onto_maps(Y, S_hat)
    return S_hat, M_hat, gw, est, signs


def _as_subjects(subjects):
    out = []
    for i, s in enumerate(subjects):
        if isinstance(s, SubjectData):
            out.append(SubjectData(s.subject_id, as_matrix(s.X)))
        else:
            out.append(SubjectData(f"sub-{i:03d}", as_matrix(s)))
    if not out:
        raise ValueError("at least one subject is required")
    shapes = {s.X.shape for s in out}
    if len(shapes) != 1:
        raise ShapeMismatch(f"subjects differ in shape: {sorted(shapes)}")
    return out


def gica_fit(subjects, q_subject, q_group=None, options=None, *, group_pca=True,
             subject_rank_policy="truncate", group_whitening=None, record_history=False):
    """Ordinary group ICA on full-brain subject matrices (T x V each).

    Parameters
    ----------
    subjects : sequence of SubjectData or array_like
    q_subject : int
        Components kept per subject in the first PCA.
    q_group : int, optional
        Number of group components; defaults to ``q_subject``.
    options : FastICAOptions, optional
    group_pca : bool
        Apply the second (group-level) reduction. When disabled the stack
        is only whitened, so ``q_group`` must equal ``N * q_subject``.
    group_whitening : WhiteningResult, optional
        Fixed group-level whitener used instead of the group PCA.
    """
    subjects = _as_subjects(subjects)
    q_group = q_subject if q_group is None else q_group
    if q_group > len(subjects) * q_subject:
        raise ValueError("q_group cannot exceed N * q_subject")
    options = options or FastICAOptions()
    bw = [reduce_block(s.X, q_subject, subject_rank_policy) for s in subjects]
    S_hat, M_hat, gw, est, signs = fit_stacked(
        bw, q_group, options, group_pca=group_pca, group_whitening=group_whitening,
        record_history=record_history)
    return GroupDecomposition(
        method="gica", S_hat=S_hat, M_hat=M_hat,
        blocks=[(i, None) for i in range(len(subjects))],
        block_whitening=bw, group_whitening=gw, unmixing=est, map_signs=signs,
        subject_ids=[s.subject_id for s in subjects],
        options={"q_subject": q_subject, "q_group": q_group, "group_pca": group_pca,
                 "contrast": options.contrast, "max_iter": options.max_iter,
                 "tol": options.tol, "seed": options.seed},
    )
