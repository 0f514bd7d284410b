"""Regenerate the golden PGM fixtures: ``python3 tests/golden/make_golden.py``.

The fixtures are the flag-style source images, the H-gICA component
heatmaps of the noise-free toy instance and the H-gICA component heatmaps
of the flag-image scenario. Only rerun this after an intended change to
the rendering or the pipelines, and review the new images before committing.
"""

import shutil
import sys
import tempfile
from pathlib import Path

from homotopica.cli import main

HERE = Path(__file__).resolve().parent


def render(out_dir):
    """Write every golden fixture under ``out_dir``; returns the relative paths."""
    out_dir = Path(out_dir)
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        for args in (["simulate", "--case", "toy", "--out", tmp / "toy"],
                     ["decompose", tmp / "toy", "--method", "hgica", "--out", tmp / "toy_hgica"],
                     ["simulate", "--case", "images", "--out", tmp / "flags"],
                     ["decompose", tmp / "flags", "--method", "hgica", "--out", tmp / "flags_hgica"]):
            if main([str(a) for a in args]) != 0:
                raise RuntimeError(f"command failed: {args}")
        sources = {"flags": tmp / "flags" / "fixtures",
                   "toy_hgica": tmp / "toy_hgica",
                   "flags_hgica": tmp / "flags_hgica"}
        written = []
        for name, src in sources.items():
            (out_dir / name).mkdir(parents=True, exist_ok=True)
            for pgm in sorted(src.glob("*.pgm")):
                shutil.copyfile(pgm, out_dir / name / pgm.name)
                written.append(f"{name}/{pgm.name}")
    return written


if __name__ == "__main__":
    for path in render(HERE):
        print(path)
    sys.exit(0)
