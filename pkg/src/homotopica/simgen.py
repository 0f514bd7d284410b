"""Ground-truth generators for the simulation study.

Full-width maps use *paired order*: the first V columns are the left
hemisphere and the last V columns the mirror-flipped right hemisphere,
both vectorized like :func:`homotopica.hgica.split_hemispheres`. On an
``H x W`` grid (``W = 2K``) half-map entry ``v = x + K*y`` is image pixel
``(y, x)`` on the left and ``(y, W-1-x)`` on the right. A 2-D image series
is stored as a volume with ``A = W``, ``B = H``, ``C = 1``.
"""

import dataclasses
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import BlockOverflow, InvalidSpec, OddExtent, UnreadableImage
from .formats import read_grayscale, write_pgm
from .hgica import Volume4D, split_hemispheres

CASES = ("toy", "homotopic", "lateralized", "mixed", "images")

FIXED_MIXING = (
    np.array([[-1, -5, 2], [5, -3, 2], [5, 3, -5]], dtype=np.float64),
    np.array([[-1, -1, 2], [-1, -2, -3], [-4, 0, 5]], dtype=np.float64),
    np.array([[-3, 3, -5], [5, -1, -1], [3, -2, -1]], dtype=np.float64),
)

DEFAULT_GAMMA = ((2.0, 2.0), (3.0, 1.5), (4.0, 1.0))

# Block anchors as fractions of the free room (rows, half-width columns).
BLOCK_SLOTS = ((0.15, 0.25), (0.5, 0.75), (0.85, 0.25),
               (0.15, 0.75), (0.5, 0.25), (0.85, 0.75))

# Toy layout on a 10 x 10 grid, half-space (row, col) slices.
TOY_GRID = (10, 10)
TOY_BLOCKS = {
    "symmetric": (slice(1, 4), slice(1, 3)),
    "lateral": (slice(6, 9), slice(0, 2)),
    "asym_left": (slice(6, 8), slice(3, 5)),
    "asym_right": (slice(1, 3), slice(3, 5)),
}
TOY_UNIFORM = (0.5, 1.5)


@dataclass
class ScenarioSpec:
    case: str = "homotopic"
    grid: tuple = (100, 100)
    n_subjects: int = 3
    n_timepoints: int = 3
    n_sources: int = 3
    gamma_params: tuple = DEFAULT_GAMMA
    noise_sd: float = 0.0
    seed: int = 0
    block_size: int = 13
    image_paths: list = None

    def __post_init__(self):
        self.grid = tuple(int(g) for g in self.grid)
        self.gamma_params = tuple(tuple(float(v) for v in p) for p in self.gamma_params)
        if self.image_paths is not None:
            self.image_paths = [str(p) for p in self.image_paths]

    def validate(self):
        if self.case not in CASES:
            raise InvalidSpec(f"unknown case {self.case!r}; expected one of {CASES}")
        H, W = self.grid
        if H < 1 or W < 2:
            raise InvalidSpec(f"grid {H}x{W} is too small")
        if W % 2:
            raise OddExtent(
                f"grid width {W} is odd: the left-right extent must be even (W = 2K) "
                "so the hemispheres split at the mid-sagittal plane"
            )
        if min(self.n_subjects, self.n_timepoints, self.n_sources) < 1:
            raise InvalidSpec("n_subjects, n_timepoints and n_sources must be positive")
        if self.case != "images" and self.n_sources > self.n_timepoints:
            raise InvalidSpec("n_sources must not exceed n_timepoints")
        if self.noise_sd < 0:
            raise InvalidSpec("noise_sd must be non-negative")
        if self.case in ("homotopic", "lateralized", "mixed"):
            if len(self.gamma_params) < self.n_sources:
                raise InvalidSpec("need one (shape, scale) pair per source")
        if self.case == "images" and not self.image_paths:
            raise InvalidSpec("case 'images' needs image_paths")
        return self

    def to_dict(self):
        return dataclasses.asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


@dataclass
class GroundTruth:
    """True maps, mixing matrices and observations of one scenario draw."""

    S_true: np.ndarray
    A_list: list
    X: list
    grid: tuple
    spec: ScenarioSpec = None
    metadata: dict = field(default_factory=dict)

    @property
    def n_voxels_half(self):
        return self.S_true.shape[1] // 2

    @property
    def S_left(self):
        return self.S_true[:, : self.n_voxels_half]

    @property
    def S_right(self):
        return self.S_true[:, self.n_voxels_half:]

    def volumes(self):
        return [Volume4D(paired_to_volume(X, self.grid), None, f"sub-{i:03d}")
                for i, X in enumerate(self.X)]

    def pairs(self, demean=True):
        return [split_hemispheres(v, demean=demean) for v in self.volumes()]


def _rng(seed, *key):
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=key))


def paired_to_image(vec, grid):
    """Full-width paired-order vector to an ``H x W`` image."""
    H, W = grid
    K = W // 2
    vec = np.asarray(vec)
    img = np.empty((H, W), dtype=vec.dtype)
    img[:, :K] = vec[: K * H].reshape(H, K)
    img[:, K:] = vec[K * H:].reshape(H, K)[:, ::-1]
    return img


def image_to_paired(img):
    img = np.asarray(img)
    H, W = img.shape
    K = W // 2
    return np.concatenate([img[:, :K].ravel(), img[:, ::-1][:, :K].ravel()])


def half_to_image(vec, grid):
    """Half-width vector (one hemisphere) to an ``H x K`` image."""
    H, W = grid
    return np.asarray(vec).reshape(H, W // 2)


def paired_to_volume(X, grid):
    """Paired-order ``T x 2V`` observations to a volume ``(W, H, 1, T)``."""
    imgs = np.stack([paired_to_image(row, grid) for row in np.atleast_2d(X)])
    return np.ascontiguousarray(imgs.transpose(2, 1, 0)[:, :, np.newaxis, :])


def mixing_matrices(n_subjects, n_timepoints, n_sources, seed):
    """The printed 3x3 matrices where they fit, Unif(-10, 10) draws otherwise."""
    if n_timepoints == 3 and n_sources == 3 and n_subjects <= 3:
        return [A.copy() for A in FIXED_MIXING[:n_subjects]]
    rng = _rng(seed, 2)
    return [rng.uniform(-10, 10, size=(n_timepoints, n_sources)) for _ in range(n_subjects)]


def _observe(S, A_list, noise_sd, seed):
    X = []
    for i, A in enumerate(A_list):
        noise = _rng(seed, 1, i).standard_normal((A.shape[0], S.shape[1]))
        X.append(A @ S + noise_sd * noise)
    return X


def block_slot(slot, grid, block):
    """Top-left (row, half-column) of block slot ``slot`` on ``grid``."""
    H, W = grid
    K = W // 2
    if block > H or block > K:
        raise BlockOverflow(f"{block}x{block} blocks do not fit a {H}x{K} hemisphere")
    if slot >= len(BLOCK_SLOTS):
        raise BlockOverflow(f"only {len(BLOCK_SLOTS)} block positions are defined")
    fy, fx = BLOCK_SLOTS[slot]
    return int(round(fy * (H - block))), int(round(fx * (K - block)))


def _block_mask(slot, grid, block):
    H, W = grid
    y0, x0 = block_slot(slot, grid, block)
    m = np.zeros((H, W // 2), dtype=bool)
    m[y0:y0 + block, x0:x0 + block] = True
    return m.ravel()


def make_toy(seed=0):
    """The 10 x 10 three-source example with the printed mixing matrices.

    Sources: a mirror-symmetric block pair, a left-only block, and two
    blocks at non-mirror positions in the two hemispheres. Activated
    voxels take Uniform(0.5, 1.5) values.
    """
    H, W = TOY_GRID
    K = W // 2
    V = H * K
    rng = _rng(seed, 0)

    def half(name, values):
        h = np.zeros((H, K))
        h[TOY_BLOCKS[name]] = values
        return h.ravel()

    def draw(name):
        sl = TOY_BLOCKS[name]
        return rng.uniform(*TOY_UNIFORM, size=(sl[0].stop - sl[0].start, sl[1].stop - sl[1].start))

    sym = draw("symmetric")
    S = np.zeros((3, 2 * V))
    S[0, :V] = S[0, V:] = half("symmetric", sym)
    S[1, :V] = half("lateral", draw("lateral"))
    S[2, :V] = half("asym_left", draw("asym_left"))
    S[2, V:] = half("asym_right", draw("asym_right"))
    A_list = [A.copy() for A in FIXED_MIXING]
    spec = ScenarioSpec(case="toy", grid=TOY_GRID, seed=seed, gamma_params=())
    return GroundTruth(S, A_list, _observe(S, A_list, 0.0, seed), TOY_GRID, spec)


def make_sources(spec):
    """Full-width true maps (Q x 2V) for the block cases."""
    H, W = spec.grid
    V = H * (W // 2)
    b = spec.block_size
    Q = spec.n_sources
    S = np.zeros((Q, 2 * V))
    for q in range(Q):
        rng = _rng(spec.seed, 0, q)
        shape, scale = spec.gamma_params[q]
        left = _block_mask(q, spec.grid, b)
        vals = rng.gamma(shape, scale, size=b * b)
        S[q, :V][left] = vals
        if spec.case == "homotopic" or (spec.case == "mixed" and q < Q - 1):
            S[q, V:][left] = vals
        elif spec.case == "mixed":
            right = _block_mask(Q, spec.grid, b)
            S[q, V:][right] = rng.gamma(shape, scale, size=b * b)
    return S


def make_case(spec):
    """Draw one realization of a block scenario (homotopic/lateralized/mixed).

    Source values come from per-source streams and noise from per-subject
    streams of ``spec.seed``, so two specs that differ only in case or
    noise level share every draw they have in common.
    """
    spec.validate()
    if spec.case == "toy":
        return make_toy(spec.seed)
    if spec.case == "images":
        return make_image_sources(spec.image_paths, spec.grid, n_subjects=spec.n_subjects,
                                  noise_sd=spec.noise_sd, seed=spec.seed)
    S = make_sources(spec)
    A_list = mixing_matrices(spec.n_subjects, spec.n_timepoints, spec.n_sources, spec.seed)
    X = _observe(S, A_list, spec.noise_sd, spec.seed)
    return GroundTruth(S, A_list, X, spec.grid, spec)


def resample_nearest(img, grid):
    H, W = grid
    h, w = img.shape
    rows = np.minimum((np.arange(H) + 0.5) * h / H, h - 1).astype(int)
    cols = np.minimum((np.arange(W) + 0.5) * w / W, w - 1).astype(int)
    return img[np.ix_(rows, cols)]


def mirror_correlation(img):
    """Pearson correlation between an image and its left-right mirror."""
    a = np.asarray(img, dtype=np.float64).ravel()
    b = np.asarray(img, dtype=np.float64)[:, ::-1].ravel()
    a, b = a - a.mean(), b - b.mean()
    den = np.sqrt((a @ a) * (b @ b))
    if den == 0:
        return float("nan")
    return float(a @ b / den)


def make_image_sources(paths, grid, *, n_subjects=3, n_timepoints=None, noise_sd=0.0,
                       seed=0, symmetry_threshold=0.99):
    """One standardized source row per grayscale image, mixed with Unif(-10, 10)."""
    H, W = grid
    if W % 2:
        raise OddExtent(f"grid width {W} must be even")
    rows, mcorr = [], []
    for p in paths:
        img = read_grayscale(p)
        if img.ndim != 2 or img.size == 0:
            raise UnreadableImage(f"{p}: not a 2-D grayscale image")
        img = resample_nearest(img, grid)
        mcorr.append(mirror_correlation(img))
        vec = image_to_paired(img)
        sd = vec.std()
        rows.append((vec - vec.mean()) / (sd if sd > 0 else 1.0))
    S = np.vstack(rows)
    Q = S.shape[0]
    T = n_timepoints or Q
    rng = _rng(seed, 2)
    A_list = [rng.uniform(-10, 10, size=(T, Q)) for _ in range(n_subjects)]
    spec = ScenarioSpec(case="images", grid=grid, n_subjects=n_subjects, n_timepoints=T,
                        n_sources=Q, noise_sd=noise_sd, seed=seed, gamma_params=(),
                        image_paths=list(paths))
    meta = {"mirror_correlation": mcorr,
            "symmetric": [bool(c >= symmetry_threshold) for c in mcorr]}
    return GroundTruth(S, A_list, _observe(S, A_list, noise_sd, seed), tuple(grid), spec, meta)


def _mirror_left(img):
    W = img.shape[1]
    img[:, W // 2:] = img[:, : W // 2][:, ::-1]
    return img


def flag_fixtures(shape=(60, 90)):
    """Five flag-like grayscale images: three mirror-symmetric, two not."""
    H, W = shape
    yy, xx = np.mgrid[0:H, 0:W]
    out = {}

    img = np.full((H, W), 230, dtype=np.uint8)
    img[:, : W // 4] = 70
    img[:, W - W // 4:] = 70
    cy, cx = H / 2 - 0.5, W / 2 - 0.5
    img[np.abs(yy - cy) / (H * 0.22) + np.abs(xx - cx) / (W * 0.12) <= 1] = 70
    out["leaf_tricolor"] = _mirror_left(img)

    img = np.full((H, W), 50, dtype=np.uint8)
    r = 0.32 * H
    for k in range(12):
        t = 2 * np.pi * k / 12
        y, x = cy + r * np.cos(t), cx + r * np.sin(t)
        img[(np.abs(yy - y) <= 1.5) & (np.abs(xx - x) <= 1.5)] = 220
    out["star_ring"] = _mirror_left(img)

    img = np.empty((H, W), dtype=np.uint8)
    img[: H // 3] = 245
    img[H // 3: 2 * H // 3] = 60
    img[2 * H // 3:] = 150
    out["horizontal_tricolor"] = img

    img = np.where((yy * 13 // H) % 2 == 0, 90, 235).astype(np.uint8)
    img[: 7 * H // 13, : 2 * W // 5] = 40
    out["striped_canton"] = img

    img = np.full((H, W), 100, dtype=np.uint8)
    img[(yy - H * 0.25) ** 2 + (xx - W * 0.17) ** 2 <= (H * 0.12) ** 2] = 240
    for y, x in ((0.1, 0.33), (0.2, 0.4), (0.35, 0.4), (0.45, 0.33)):
        img[(yy - H * y) ** 2 + (xx - W * x) ** 2 <= (H * 0.04) ** 2] = 240
    out["corner_stars"] = img
    return out


FIXTURE_SYMMETRY = {"leaf_tricolor": True, "star_ring": True, "horizontal_tricolor": True,
                    "striped_canton": False, "corner_stars": False}


def write_flag_fixtures(directory, shape=(60, 90)):
    """Write :func:`flag_fixtures` as PGM files; returns the paths in order."""
    from pathlib import Path

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, img in flag_fixtures(shape).items():
        p = directory / f"{name}.pgm"
        write_pgm(p, img)
        paths.append(p)
    return paths
