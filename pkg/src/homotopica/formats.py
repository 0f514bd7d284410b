"""File formats: matrix CSV, the HGV1 volume container and 8-bit PGM."""

import hashlib
import re
import struct

import numpy as np

from .errors import UnreadableImage

VOLUME_MAGIC = b"HGV1"
_VOLUME_HEADER = struct.Struct("<4s5I")


def write_matrix_csv(path, X):
    """Headerless CSV, one matrix row per line; ``repr`` precision round-trips."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in X:
            fh.write(",".join(repr(float(v)) for v in row))
            fh.write("\n")


def read_matrix_csv(path):
    with open(path, encoding="utf-8") as fh:
        rows = [line.strip() for line in fh if line.strip()]
    return np.array([[float(v) for v in r.split(",")] for r in rows], dtype=np.float64)


def write_volume(path, volume):
    """Write a :class:`~homotopica.hgica.Volume4D` as HGV1 (24-byte header).

    Header: magic, then little-endian u32 A, B, C, T, K; values follow as
    little-endian float64 in (a, b, c, t) order with ``a`` fastest.
    """
    A, B, C, T = volume.values.shape
    with open(path, "wb") as fh:
        fh.write(_VOLUME_HEADER.pack(VOLUME_MAGIC, A, B, C, T, volume.mid_sagittal_index))
        fh.write(np.asarray(volume.values, dtype="<f8").tobytes(order="F"))


def read_volume(path, subject_id=None):
    from .hgica import Volume4D

    with open(path, "rb") as fh:
        header = fh.read(_VOLUME_HEADER.size)
        if len(header) != _VOLUME_HEADER.size:
            raise ValueError(f"{path}: truncated HGV1 header")
        magic, A, B, C, T, K = _VOLUME_HEADER.unpack(header)
        if magic != VOLUME_MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}")
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != A * B * C * T:
        raise ValueError(f"{path}: expected {A * B * C * T} values, found {data.size}")
    values = data.reshape((A, B, C, T), order="F").astype(np.float64)
    return Volume4D(values, K, subject_id or str(path))


def write_pgm(path, img):
    """Binary 8-bit PGM (P5). ``img`` is a 2-D uint8-compatible array."""
    img = np.asarray(img)
    if img.ndim != 2:
        raise ValueError("PGM images must be 2-D")
    if img.min() < 0 or img.max() > 255:
        raise ValueError("PGM pixel values must lie in [0, 255]")
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(img.astype(np.uint8).tobytes())


_PGM_TOKEN = re.compile(rb"(?:\s|#[^\n]*\n)*(\S+)")


def read_pgm(path):
    """Read an 8-bit binary PGM (P5) into a uint8 array."""
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise UnreadableImage(f"{path}: {exc}") from exc
    pos = 0
    tokens = []
    for _ in range(4):
        m = _PGM_TOKEN.match(raw, pos)
        if m is None:
            raise UnreadableImage(f"{path}: malformed PGM header")
        tokens.append(m.group(1))
        pos = m.end()
    if tokens[0] != b"P5":
        raise UnreadableImage(f"{path}: not a binary PGM (magic {tokens[0]!r})")
    w, h, maxval = (int(t) for t in tokens[1:])
    if maxval > 255:
        raise UnreadableImage(f"{path}: only 8-bit PGM is supported")
    pixels = raw[pos + 1: pos + 1 + w * h]
    if len(pixels) != w * h:
        raise UnreadableImage(f"{path}: truncated pixel data")
    return np.frombuffer(pixels, dtype=np.uint8).reshape(h, w).copy()


def read_grayscale(path):
    """Read an image as a float grayscale array; PGM natively, others via Pillow."""
    if str(path).lower().endswith(".pgm"):
        return read_pgm(path).astype(np.float64)
    try:
        from PIL import Image

        with Image.open(path) as im:
            return np.asarray(im.convert("L"), dtype=np.float64)
    except Exception as exc:
        raise UnreadableImage(f"{path}: {exc}") from exc


def heatmap(values, lo_pct=2.0, hi_pct=98.0):
    """Linear gray mapping of ``values`` over its 2nd-98th percentile range."""
    values = np.asarray(values, dtype=np.float64)
    lo, hi = np.percentile(values, [lo_pct, hi_pct])
    if hi <= lo:
        return np.zeros(values.shape, dtype=np.uint8)
    scaled = (np.clip(values, lo, hi) - lo) / (hi - lo)
    return np.rint(scaled * 255.0).astype(np.uint8)


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
