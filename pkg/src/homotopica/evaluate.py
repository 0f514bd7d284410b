"""Component matching, the voxel mean-difference metric, Monte-Carlo
benchmarks over noise levels, and the noise-free equivalence check."""

import dataclasses
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .core import WhiteningResult, as_matrix, center_rows, pca_whiten, standardize_rows, svd_thin
from .errors import HomotopicaError, PreconditionViolated, ShapeMismatch
from .fastica import FastICAOptions, random_init
from .group import gica_fit, reduce_block
from .hgica import HemispherePair, _as_pairs, hgica_fit
from .simgen import make_case
from .verify import EquivalenceWitness, build_appendix_whiteners

logger = logging.getLogger(__name__)

THEOREM_ATOL = 1e-6
HOMOTOPY_RTOL = 1e-12


@dataclass
class MatchResult:
    """``permutation[j]`` is the estimated row matched to true source ``j``."""

    permutation: np.ndarray
    signs: np.ndarray
    correlations: np.ndarray

    def apply(self, S_hat):
        """Reorder and sign-flip ``S_hat`` to line up with the true sources."""
        return np.asarray(S_hat)[self.permutation] * self.signs[:, np.newaxis]


def correlation_matrix(A, B):
    """Pearson correlations between the rows of ``A`` and the rows of ``B``."""
    Az, Bz = standardize_rows(A), standardize_rows(B)
    return Az @ Bz.T / Az.shape[1]


def match_components(S_hat, S_true):
    """Signed assignment of estimated maps to true maps maximizing total |corr|."""
    S_hat, S_true = as_matrix(S_hat, "S_hat"), as_matrix(S_true, "S_true")
    if S_hat.shape[1] != S_true.shape[1]:
        raise ShapeMismatch(
            f"estimated maps have {S_hat.shape[1]} columns, true maps {S_true.shape[1]}"
        )
    if S_hat.shape[0] < S_true.shape[0]:
        raise ShapeMismatch("fewer estimated maps than true sources")
    C = correlation_matrix(S_hat, S_true)
    rows, cols = linear_sum_assignment(-np.abs(C))
    perm = np.empty(S_true.shape[0], dtype=int)
    perm[cols] = rows
    c = C[perm, np.arange(S_true.shape[0])]
    signs = np.where(c < 0, -1.0, 1.0)
    return MatchResult(perm, signs, np.abs(c))


def voxel_mean_difference(S_hat, S_true, match=None):
    """Mean over voxels of ``|s_hat(v) - s(v)|`` per true source, after
    standardizing both maps and resolving order and sign with ``match``."""
    S_hat, S_true = standardize_rows(S_hat), standardize_rows(S_true)
    if match is None:
        match = match_components(S_hat, S_true)
    return np.mean(np.abs(match.apply(S_hat) - S_true), axis=1)


@dataclass
class ErrorTable:
    """Monte-Carlo summary of one method at one noise level.

    ``se`` is the standard error of the mean over successful reps (NaN
    with fewer than two reps). ``truth`` records what the maps were
    compared against: ``"left"`` (left-hemisphere truth) or ``"full"``.
    """

    method: str
    noise_sd: float
    mean: np.ndarray
    se: np.ndarray
    iterations: int
    per_rep: np.ndarray
    truth: str
    failures: list = field(default_factory=list)
    not_converged: int = 0

    @property
    def se_is_wide(self):
        return self.iterations < 2 or bool(np.any(~np.isfinite(self.se)))

    def to_dict(self):
        return {
            "method": self.method,
            "noise_sd": self.noise_sd,
            "mean": self.mean.tolist(),
            "se": [None if not np.isfinite(v) else float(v) for v in self.se],
            "se_label": "Monte-Carlo standard error of the mean",
            "se_wide": self.se_is_wide,
            "iterations": self.iterations,
            "truth": self.truth,
            "failures": self.failures,
            "not_converged": self.not_converged,
        }


def rep_seed(seed, rep):
    """Derived 32-bit seed of Monte-Carlo repetition ``rep``."""
    return int(np.random.SeedSequence(int(seed), spawn_key=(3, rep)).generate_state(1)[0])


def _run_rep(args):
    spec, noise_grid, rep, q_subject, q_group, options, gica_truth, methods = args
    seed = rep_seed(spec.seed, rep)
    init = options.init if options.init is not None else random_init(q_group, seed)
    opts = dataclasses.replace(options, init=init, seed=seed)
    out = {}
    for sd in noise_grid:
        truth = make_case(dataclasses.replace(spec, noise_sd=float(sd), seed=seed))
        for method in methods:
            try:
                if method == "hgica":
                    d = hgica_fit(truth.pairs(), q_subject, q_group, opts)
                    err = voxel_mean_difference(d.S_hat, truth.S_left)
                else:
                    d = gica_fit(truth.X, q_subject, q_group, opts)
                    if gica_truth == "left":
                        V = truth.n_voxels_half
                        err = voxel_mean_difference(d.S_hat[:, :V], truth.S_left)
                    else:
                        err = voxel_mean_difference(d.S_hat, truth.S_true)
                out[method, float(sd)] = (err, d.unmixing.converged, None)
            except HomotopicaError as exc:
                out[method, float(sd)] = (None, False, f"{exc.name}: {exc}")
    return rep, seed, out


def run_benchmark(spec, noise_grid, reps, *, q_subject=None, q_group=None, options=None,
                  methods=("hgica", "gica"), gica_truth="full", workers=1):
    """Compare methods over a noise grid with ``reps`` Monte-Carlo draws.

    Every rep draws fresh sources from a derived seed; all noise levels and
    both methods of that rep share the draw (the noise pattern is scaled
    by the level) and the FastICA initial matrix. Failed fits are recorded
    in ``ErrorTable.failures`` and excluded from the averages.

    Returns ``(tables, seeds)`` where ``seeds[r]`` replays rep ``r``.
    """
    if reps < 1:
        raise ValueError("reps must be at least 1")
    q_subject = q_subject or spec.n_timepoints
    q_group = q_group or spec.n_sources
    options = options or FastICAOptions()
    jobs = [(spec, list(noise_grid), r, q_subject, q_group, options, gica_truth, methods)
            for r in range(reps)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_run_rep, jobs))
    else:
        results = [_run_rep(j) for j in jobs]
    results.sort(key=lambda r: r[0])
    seeds = [r[1] for r in results]

    tables = []
    for sd in noise_grid:
        for method in methods:
            errs, failures, nc = [], [], 0
            for rep, _, out in results:
                err, conv, msg = out[method, float(sd)]
                if err is None:
                    failures.append({"rep": rep, "error": msg})
                    continue
                errs.append(err)
                nc += not conv
            E = np.array(errs).reshape(len(errs), -1) if errs else np.empty((0, spec.n_sources))
            n = E.shape[0]
            mean = E.mean(axis=0) if n else np.full(spec.n_sources, np.nan)
            se = E.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.full(E.shape[1], np.nan)
            truth = "left" if method == "hgica" or gica_truth == "left" else "full"
            tables.append(ErrorTable(method, float(sd), mean, se, n, E, truth, failures, nc))
    return tables, seeds


def find_table(tables, method, noise_sd):
    for t in tables:
        if t.method == method and t.noise_sd == float(noise_sd):
            return t
    raise KeyError((method, noise_sd))


def homotopy_gap(pairs):
    """Largest relative left/right discrepancy over all subjects."""
    gap = 0.0
    for p in pairs:
        scale = max(1.0, float(np.max(np.abs(p.left))))
        gap = max(gap, float(np.max(np.abs(p.left - p.right))) / scale)
    return gap


@dataclass
class TheoremCheckResult:
    max_abs_gap: float
    passed: bool
    witness: EquivalenceWitness
    homotopy_gap: float
    strict: bool

    def to_dict(self):
        return {"max_abs_gap": self.max_abs_gap, "passed": self.passed,
                "homotopy_gap": self.homotopy_gap, "strict": self.strict,
                "witness": self.witness.to_dict()}


def _map_gap(dh, dg):
    Sh2 = np.hstack([dh.S_hat, dh.S_hat])
    m = match_components(dg.S_hat, Sh2)
    return float(np.max(np.abs(m.apply(dg.S_hat) - Sh2))), m


def align_whitening(gw, Z_ref):
    """Rotate a whitener's output basis onto ``Z_ref`` (orthogonal Procrustes).

    Whitening is only defined up to an orthogonal rotation of its output;
    with repeated singular values the SVD picks that rotation arbitrarily.
    The rotated operator still whitens the same data.
    """
    U, _, Vt = svd_thin(Z_ref @ gw.Z.T)
    R = U @ Vt
    return WhiteningResult(R @ gw.K, R @ gw.Z, gw.singular_values, gw.dewhiten @ R.T)


def _stack(blocks, q):
    return np.vstack([reduce_block(X, q).Z for X in blocks])


def theorem_check(pairs, q, shared_init=None, seed=0, *, options=None, strict=True,
                  atol=THEOREM_ATOL):
    """Run H-gICA and gICA on the same homotopic data and measure their gap.

    gICA sees each subject as ``[left, right]`` (2V columns). Both fits use
    the same FastICA options and initial matrix, and the output basis of
    each group PCA is rotated onto the reference ``Z = sqrt(V) Vt`` from
    the SVD of the stacked reduced left hemispheres (``[Z, Z]`` for gICA),
    so both iterations start in the same coordinates. Returns the max-abs
    gap between the gICA maps and ``[S_h, S_h]`` after matching;
    ``passed`` also requires ``W_h = 1/2 [W_g, W_g]``.

    In strict mode data whose hemispheres are not identical raise
    :class:`PreconditionViolated`; otherwise the gap is reported anyway.
    """
    pairs = _as_pairs(pairs)
    hgap = homotopy_gap(pairs)
    if strict and hgap > HOMOTOPY_RTOL:
        raise PreconditionViolated(
            f"hemispheres differ (relative gap {hgap:.3g}); the equivalence needs "
            "exactly homotopic, noise-free data"
        )
    options = options or FastICAOptions()
    init = shared_init if shared_init is not None else random_init(q, seed)
    opts = dataclasses.replace(options, init=np.asarray(init, dtype=np.float64), seed=seed)
    full = [np.hstack([p.left, p.right]) for p in pairs]

    aw = build_appendix_whiteners(_stack([p.left for p in pairs], q), rank=q)
    Y_h = _stack([p.left for p in pairs] + [p.right for p in pairs], q)
    Y_g = _stack(full, q)
    gw_h = align_whitening(pca_whiten(center_rows(Y_h), q), aw.Z)
    gw_g = align_whitening(pca_whiten(center_rows(Y_g), q), aw.Z_tilde)

    dh = hgica_fit(pairs, q, q, opts, group_whitening=gw_h, record_history=True)
    dg = gica_fit(full, q, q, opts, group_whitening=gw_g, record_history=True)
    S_gap, m = _map_gap(dh, dg)

    Wh = dh.map_signs[:, np.newaxis] * dh.group_unmixing
    Wg = m.apply(dg.map_signs[:, np.newaxis] * dg.group_unmixing)
    W_gap = float(np.max(np.abs(Wh - 0.5 * np.hstack([Wg, Wg]))))
    steps = [float(np.max(np.abs(a - b)))
             for a, b in zip(dh.unmixing.history, dg.unmixing.history)]
    K_gap = float(np.max(np.abs(gw_h.K - aw.K_h)))

    pipeline_gap, _ = _map_gap(hgica_fit(pairs, q, q, opts), gica_fit(full, q, q, opts))

    witness = EquivalenceWitness(
        K_h=gw_h.K, K_g=gw_g.K, S_gap=S_gap, W_gap=W_gap, K_gap=K_gap, step_gaps=steps,
        iterations=(dh.unmixing.iterations, dg.unmixing.iterations),
        iterations_matched=(dh.unmixing.iterations == dg.unmixing.iterations
                            and np.array_equal(dh.unmixing.init, dg.unmixing.init)),
        pipeline_S_gap=pipeline_gap,
    )
    passed = S_gap <= atol and W_gap <= atol
    return TheoremCheckResult(S_gap, bool(passed), witness, hgap, strict)
