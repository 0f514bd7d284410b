import importlib.util
from pathlib import Path

import pytest

GOLDEN = Path(__file__).parent / "golden"
_spec = importlib.util.spec_from_file_location("make_golden", GOLDEN / "make_golden.py")
make_golden = importlib.util.module_from_spec(_spec)
_spec.loader.exec_module(make_golden)

FIXTURES = sorted(str(p.relative_to(GOLDEN)) for p in GOLDEN.glob("*/*.pgm"))


@pytest.fixture(scope="module")
def rendered(tmp_path_factory):
    out = tmp_path_factory.mktemp("golden")
    return out, make_golden.render(out)


def test_fixture_inventory(rendered):
    _, written = rendered
    assert sorted(written) == FIXTURES
    assert len([f for f in FIXTURES if f.startswith("toy_hgica/")]) == 3
    assert len([f for f in FIXTURES if f.startswith("flags/")]) == 5


@pytest.mark.parametrize("name", FIXTURES)
def test_golden_bytes(rendered, name):
    out, _ = rendered
    assert (out / name).read_bytes() == (GOLDEN / name).read_bytes()
