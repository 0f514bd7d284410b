"""Symmetric fixed-point FastICA on whitened data."""

import json
import logging
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .core import as_matrix
from .errors import NotWhitened, Singular

logger = logging.getLogger(__name__)

WHITENESS_ATOL = 1e-4


def _logcosh_G(y):
    a = np.abs(y)
    return a + np.log1p(np.exp(-2.0 * a)) - np.log(2.0)


def _logcosh_g(y):
    return np.tanh(y)


def _logcosh_gp(y):
    t = np.tanh(y)
    return 1.0 - t * t


def _exp_G(y):
    return -np.exp(-0.5 * y * y)


def _exp_g(y):
    return y * np.exp(-0.5 * y * y)


def _exp_gp(y):
    y2 = y * y
    return (1.0 - y2) * np.exp(-0.5 * y2)


def _pow4_G(y):
    return y**4


def _pow4_g(y):
    return 4.0 * y**3


def _pow4_gp(y):
    return 12.0 * y * y


@dataclass(frozen=True)
class ContrastFunction:
    """A FastICA nonlinearity: ``G``, its derivative ``g`` and ``g_prime``."""

    id: str
    G: object = field(repr=False)
    g: object = field(repr=False)
    g_prime: object = field(repr=False)

    @property
    def gaussian_expectation(self):
        """E{G(nu)} for standard normal nu (64-point Gauss-Hermite)."""
        return _gaussian_expectation(self.id)


CONTRASTS = {
    "logcosh": ContrastFunction("logcosh", _logcosh_G, _logcosh_g, _logcosh_gp),
    "exp": ContrastFunction("exp", _exp_G, _exp_g, _exp_gp),
    "pow4": ContrastFunction("pow4", _pow4_G, _pow4_g, _pow4_gp),
}


def get_contrast(contrast):
    if isinstance(contrast, ContrastFunction):
        return contrast
    try:
        return CONTRASTS[contrast]
    except KeyError:
        raise ValueError(
            f"unknown contrast {contrast!r}; choose from {sorted(CONTRASTS)}"
        ) from None


@lru_cache(maxsize=None)
def _gaussian_expectation(contrast_id):
    x, w = np.polynomial.hermite.hermgauss(64)
    G = CONTRASTS[contrast_id].G
    return float(np.sum(w * G(np.sqrt(2.0) * x)) / np.sqrt(np.pi))


def negentropy_estimate(w, Z, contrast="logcosh"):
    """Negentropy approximation ``(mean G(w^T Z) - E{G(nu)})^2``."""
    G = get_contrast(contrast)
    w = np.asarray(w, dtype=np.float64).ravel()
    if abs(np.linalg.norm(w) - 1.0) > 1e-10:
        raise ValueError("w must be a unit vector")
    y = w @ as_matrix(Z)
    return float((np.mean(G.G(y)) - G.gaussian_expectation) ** 2)


def symmetric_decorrelate(W):
    """Return ``(W W^T)^{-1/2} W``, the closest matrix with orthonormal rows."""
    W = np.asarray(W, dtype=np.float64)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise ValueError(f"W must be square, got shape {W.shape}")
    s, u = np.linalg.eigh(W @ W.T)
    if s[0] <= 1e-12 * max(s[-1], np.finfo(float).tiny):
        raise Singular("cannot decorrelate a rank-deficient matrix")
    return (u / np.sqrt(s)) @ u.T @ W


def random_init(n_components, seed):
    """Seeded Gaussian matrix with orthonormalized rows."""
    rng = np.random.default_rng(seed)
    return symmetric_decorrelate(rng.standard_normal((n_components, n_components)))


@dataclass
class FastICAOptions:
    contrast: str = "logcosh"
    max_iter: int = 500
    tol: float = 1e-6
    seed: int = 0
    init: np.ndarray = None

    def to_json(self):
        return json.dumps(
            {"contrast": self.contrast, "max_iter": self.max_iter,
             "tol": self.tol, "seed": self.seed}
        )

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        return cls(**{k: d[k] for k in ("contrast", "max_iter", "tol", "seed") if k in d})


@dataclass
class UnmixingEstimate:
    """Result of :func:`fastica_fit`.

    ``W`` acts in whitened coordinates (rows orthonormal); ``history``
    holds the iterates ``W_0, W_1, ...`` when recording was requested.
    """

    W: np.ndarray
    iterations: int
    converged: bool
    objective: np.ndarray
    init: np.ndarray
    history: list = None


def check_whitened(Z, atol=WHITENESS_ATOL):
    Z = as_matrix(Z, "Z")
    C = Z @ Z.T / Z.shape[1]
    dev = np.max(np.abs(C - np.eye(Z.shape[0])))
    if dev > atol:
        raise NotWhitened(f"sample covariance deviates from identity by {dev:.3g}")
    return Z


def fastica_fit(Z, options=None, *, n_components=None, record_history=False):
    """Estimate an orthonormal unmixing matrix for whitened data ``Z``.

    Parallel fixed-point iteration: every row is updated by
    ``E{z g(w^T z)} - E{g'(w^T z)} w`` and the whole matrix is then
    symmetrically decorrelated. Iteration stops once
    ``max_k 1 - |<w_k_new, w_k_old>| < tol``; hitting ``max_iter`` sets
    ``converged=False`` rather than raising.

    Parameters
    ----------
    Z : array_like, shape (Q, V)
        Whitened data (``Z @ Z.T / V`` within 1e-4 of the identity).
    options : FastICAOptions, optional
    n_components : int, optional
        If given, must equal the number of rows of ``Z``.
    record_history : bool
        Keep every iterate in ``UnmixingEstimate.history``.
    """
    opts = options or FastICAOptions()
    Z = check_whitened(Z)
    Q, V = Z.shape
    if n_components is not None and n_components != Q:
        raise ValueError(f"Z has {Q} rows but n_components={n_components}")
    G = get_contrast(opts.contrast)

    if opts.init is None:
        W = random_init(Q, opts.seed)
    else:
        W = np.array(opts.init, dtype=np.float64)
        if W.shape != (Q, Q):
            raise ValueError(f"init must have shape {(Q, Q)}, got {W.shape}")
        W = symmetric_decorrelate(W)
    init = W.copy()
    history = [W.copy()] if record_history else None

    converged = False
    it = 0
    while it < opts.max_iter:
        Y = W @ Z
        W_new = (G.g(Y) @ Z.T) / V - G.g_prime(Y).mean(axis=1)[:, np.newaxis] * W
        W_new = symmetric_decorrelate(W_new)
        it += 1
        lim = np.max(1.0 - np.abs(np.einsum("ij,ij->i", W_new, W)))
        W = W_new
        if record_history:
            history.append(W.copy())
        if lim < opts.tol:
            converged = True
            break
    if not converged:
        logger.warning("FastICA did not converge in %d iterations", opts.max_iter)

    Y = W @ Z
    objective = (G.G(Y).mean(axis=1) - G.gaussian_expectation) ** 2
    return UnmixingEstimate(W=W, iterations=it, converged=converged,
                            objective=objective, init=init, history=history)


def fastica_step(W, Z, contrast="logcosh"):
    """One parallel update without the decorrelation, for benchmarking."""
    G = get_contrast(contrast)
    Y = W @ Z
    return (G.g(Y) @ Z.T) / Z.shape[1] - G.g_prime(Y).mean(axis=1)[:, np.newaxis] * W
