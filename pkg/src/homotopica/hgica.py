"""Homotopic group ICA: hemispheric split, double-stacked decomposition and
functional-homotopy measures.

The left hemisphere is ``a = 0 .. K-1`` of the first (left-right) axis;
the right hemisphere is read mirror-wise from ``a = 2K-1`` down to ``K``
so that column ``v`` of both matrices addresses a mirror voxel pair.
Voxels are vectorized with ``a`` fastest, then ``b``, then ``c``.
"""

from dataclasses import dataclass, field

import numpy as np

from .core import as_matrix, center_rows
from .errors import DegenerateLoading, OddExtent, PreconditionViolated, ShapeMismatch
from .fastica import FastICAOptions
from .group import GroupDecomposition, fit_stacked, reduce_block

LEFT, RIGHT = 0, 1
DEGENERATE_VAR = 1e-12
NEAR_DEGENERATE_RATIO = 0.1


@dataclass
class Volume4D:
    """Subject image series ``values[a, b, c, t]`` with ``A = 2K``."""

    values: np.ndarray
    mid_sagittal_index: int = None
    subject_id: str = "sub-000"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 4:
            raise ValueError(f"volume must be 4-D (A, B, C, T), got {self.values.shape}")
        A = self.values.shape[0]
        if A % 2:
            raise OddExtent(
                f"left-right extent A={A} is odd; hemispheres need an even extent A = 2K"
            )
        if self.mid_sagittal_index is None:
            self.mid_sagittal_index = A // 2
        if self.mid_sagittal_index != A // 2:
            raise OddExtent(f"mid-sagittal index must be A/2={A // 2}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("volume contains non-finite values")

    @property
    def dims(self):
        return self.values.shape


@dataclass
class HemispherePair:
    left: np.ndarray
    right: np.ndarray
    subject_id: str = "sub-000"

    def __post_init__(self):
        self.left = as_matrix(self.left, "left")
        self.right = as_matrix(self.right, "right")
        if self.left.shape != self.right.shape:
            raise ShapeMismatch(
                f"hemispheres differ in shape: {self.left.shape} vs {self.right.shape}"
            )


def flip_lr(volume):
    """Mirror a volume about its mid-sagittal plane."""
    return Volume4D(volume.values[::-1].copy(), volume.mid_sagittal_index, volume.subject_id)


def _vectorize(half):
    K, B, C, T = half.shape
    return half.reshape(K * B * C, T, order="F").T


def split_hemispheres(volume, demean=True):
    """Split a volume into left and mirror-flipped right ``T x V`` matrices."""
    if not isinstance(volume, Volume4D):
        volume = Volume4D(volume)
    K = volume.mid_sagittal_index
    vals = volume.values
    left = _vectorize(vals[:K])
    right = _vectorize(vals[::-1][:K])
    if demean:
        left, right = center_rows(left), center_rows(right)
    return HemispherePair(left.copy(), right.copy(), volume.subject_id)


def merge_hemispheres(pair, spatial_shape):
    """Inverse of :func:`split_hemispheres` (without demeaning).

    ``spatial_shape`` is the half-volume shape ``(K, B, C)``.
    """
    K, B, C = spatial_shape
    T = pair.left.shape[0]
    if pair.left.shape[1] != K * B * C:
        raise ShapeMismatch(f"{pair.left.shape[1]} columns do not fit {spatial_shape}")
    left = pair.left.T.reshape(K, B, C, T, order="F")
    right = pair.right.T.reshape(K, B, C, T, order="F")
    return Volume4D(np.concatenate([left, right[::-1]], axis=0), K, pair.subject_id)


def _as_pairs(pairs):
    out = []
    for i, p in enumerate(pairs):
        if isinstance(p, Volume4D):
            p = split_hemispheres(p)
        elif not isinstance(p, HemispherePair):
            left, right = p
            p = HemispherePair(left, right, f"sub-{i:03d}")
        out.append(p)
    if not out:
        raise ValueError("at least one subject is required")
    shapes = {p.left.shape for p in out}
    if len(shapes) != 1:
        raise ShapeMismatch(f"subjects differ in hemisphere shape: {sorted(shapes)}")
    return out


def stacking_order(n_subjects, stacking="blocked"):
    if stacking == "blocked":
        return [(i, LEFT) for i in range(n_subjects)] + [(i, RIGHT) for i in range(n_subjects)]
    if stacking == "interleaved":
        return [(i, h) for i in range(n_subjects) for h in (LEFT, RIGHT)]
    raise ValueError(f"unknown stacking {stacking!r}")


def hgica_fit(pairs, q_subject, q_group=None, options=None, *, stacking="blocked",
              group_pca=True, subject_rank_policy="truncate", group_whitening=None,
              record_history=False):
    """Homotopic group ICA on per-subject hemisphere pairs.

    Every hemisphere matrix is reduced on its own and the stack is
    ``[X_1; X_2]`` with all left blocks first, then all right blocks
    (``stacking="interleaved"`` alternates them per subject instead). The
    returned maps cover a single hemisphere (V columns).
    """
    pairs = _as_pairs(pairs)
    q_group = q_subject if q_group is None else q_group
    if q_group > 2 * len(pairs) * q_subject:
        raise ValueError("q_group cannot exceed 2 * N * q_subject")
    options = options or FastICAOptions()
    blocks = stacking_order(len(pairs), stacking)
    bw = [
        reduce_block(pairs[i].left if h == LEFT else pairs[i].right, q_subject,
                     subject_rank_policy)
        for i, h in blocks
    ]
    S_hat, M_hat, gw, est, signs = fit_stacked(
        bw, q_group, options, group_pca=group_pca, group_whitening=group_whitening,
        record_history=record_history)
    return GroupDecomposition(
        method="hgica", S_hat=S_hat, M_hat=M_hat, blocks=blocks,
        block_whitening=bw, group_whitening=gw, unmixing=est, map_signs=signs,
        subject_ids=[p.subject_id for p in pairs],
        options={"q_subject": q_subject, "q_group": q_group, "group_pca": group_pca,
                 "stacking": stacking, "contrast": options.contrast,
                 "max_iter": options.max_iter, "tol": options.tol, "seed": options.seed},
    )


def _require_hemispheric(decomp):
    if decomp.method != "hgica":
        raise PreconditionViolated("homotopy requires hemispheric mixing blocks")


def _pearson(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.var() < DEGENERATE_VAR or y.var() < DEGENERATE_VAR:
        raise DegenerateLoading("loading vector has (near) zero variance")
    xc, yc = x - x.mean(), y - y.mean()
    r = float(xc @ yc / np.sqrt((xc @ xc) * (yc @ yc)))
    return min(1.0, max(-1.0, r))


def homotopy_subject(decomp, i, k):
    """Correlation of subject ``i``'s left and right time courses for map ``k``."""
    _require_hemispheric(decomp)
    return _pearson(decomp.time_courses(i, LEFT)[:, k], decomp.time_courses(i, RIGHT)[:, k])


def group_time_courses(decomp, hemisphere):
    """Time courses of all subjects for one hemisphere, concatenated (N*T x Q)."""
    return np.vstack([decomp.time_courses(i, hemisphere) for i in range(decomp.n_subjects)])


def homotopy_group(decomp, k):
    """Correlation of the concatenated left and right group time courses of map ``k``."""
    _require_hemispheric(decomp)
    return _pearson(group_time_courses(decomp, LEFT)[:, k],
                    group_time_courses(decomp, RIGHT)[:, k])


@dataclass
class HomotopyReport:
    """Per-subject and group homotopy; NaN marks a degenerate (missing) value."""

    per_subject: np.ndarray
    group: np.ndarray
    left_norm: np.ndarray
    right_norm: np.ndarray
    subject_ids: list = field(default_factory=list)

    @property
    def missing(self):
        return np.isnan(self.per_subject)

    def near_degenerate(self):
        """Entries whose weaker side carries < 10% of the stronger side's norm."""
        hi = np.maximum(self.left_norm, self.right_norm)
        lo = np.minimum(self.left_norm, self.right_norm)
        return lo < NEAR_DEGENERATE_RATIO * np.where(hi > 0, hi, 1.0)

    def to_dict(self):
        nd = self.near_degenerate()
        comps = []
        for k in range(self.group.size):
            comps.append({
                "k": k,
                "group_H": None if np.isnan(self.group[k]) else float(self.group[k]),
                "near_degenerate": bool(nd[:, k].sum() * 2 > nd.shape[0]),
                "per_subject": [
                    {
                        "id": sid,
                        "H": None if np.isnan(self.per_subject[i, k]) else float(self.per_subject[i, k]),
                        "left_norm": float(self.left_norm[i, k]),
                        "right_norm": float(self.right_norm[i, k]),
                        "near_degenerate": bool(nd[i, k]),
                    }
                    for i, sid in enumerate(self.subject_ids)
                ],
            })
        return {"components": comps}


def homotopy_report(decomp):
    _require_hemispheric(decomp)
    N = decomp.n_subjects
    left = [decomp.time_courses(i, LEFT) for i in range(N)]
    right = [decomp.time_courses(i, RIGHT) for i in range(N)]
    return report_from_time_courses(left, right, decomp.subject_ids)


def report_from_time_courses(left, right, subject_ids=None):
    """Build a :class:`HomotopyReport` from per-subject ``T x Q`` time courses.

    ``left[i]`` and ``right[i]`` are subject ``i``'s loadings for the two
    hemispheres; the group measure correlates their concatenations.
    """
    left = [np.asarray(a, dtype=np.float64) for a in left]
    right = [np.asarray(a, dtype=np.float64) for a in right]
    if len(left) != len(right) or not left:
        raise ShapeMismatch("need one left and one right loading matrix per subject")
    N, Q = len(left), left[0].shape[1]
    subject_ids = list(subject_ids) if subject_ids is not None else [f"sub-{i:03d}" for i in range(N)]
    H = np.full((N, Q), np.nan)
    Hg = np.full(Q, np.nan)
    ln = np.zeros((N, Q))
    rn = np.zeros((N, Q))
    for i in range(N):
        if left[i].shape != right[i].shape or left[i].shape[1] != Q:
            raise ShapeMismatch(f"subject {i}: loading shapes {left[i].shape} vs {right[i].shape}")
        ln[i] = np.linalg.norm(left[i], axis=0)
        rn[i] = np.linalg.norm(right[i], axis=0)
        for k in range(Q):
            try:
                H[i, k] = _pearson(left[i][:, k], right[i][:, k])
            except DegenerateLoading:
                pass
    ML, MR = np.vstack(left), np.vstack(right)
    for k in range(Q):
        try:
            Hg[k] = _pearson(ML[:, k], MR[:, k])
        except DegenerateLoading:
            pass
    return HomotopyReport(H, Hg, ln, rn, subject_ids)
