import numpy as np
import pytest

from wallthick.grid import BinaryMask
from wallthick.synth import annulus_mask


def ring_mask(size=64, r_in=20, r_out=30, spacing=1.0):
    return annulus_mask(size, r_in, r_out, spacing=spacing)


def slab(width=5, length=12, pad=3, spacing=1.0):
    """Vertical slab with the left column labelled inner and the right column outer."""
    h, w = length + 2 * pad, width + 2 * pad
    wall = np.zeros((h, w), dtype=bool)
    wall[pad:pad + length, pad:pad + width] = True
    labels = np.zeros((h, w), dtype=np.uint8)
    labels[pad:pad + length, pad] = 1
    labels[pad:pad + length, pad + width - 1] = 2
    return BinaryMask.from_array(wall, spacing), labels


@pytest.fixture(scope="session")
def annulus():
    return ring_mask()


# ----------------------------------------------------------------------------
# acceptance summary: one line per criterion, whatever the verbosity

_CRITERIA = {}
_NODES = {}


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("criterion")
        if mark:
            num, title = mark.args
            _CRITERIA.setdefault(num, {"title": title, "ok": True, "ran": False})
            _NODES[item.nodeid] = num


def pytest_runtest_logreport(report):
    num = _NODES.get(report.nodeid)
    if num is None:
        return
    entry = _CRITERIA[num]
    if report.when == "call":
        entry["ran"] = True
    if report.failed or (report.when == "call" and report.skipped):
        entry["ok"] = False


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_CRITERIA):
        e = _CRITERIA[num]
        status = "PASS" if e["ok"] and e["ran"] else ("FAIL" if e["ran"] or not e["ok"] else "NOT RUN")
        terminalreporter.write_line(f"criterion {num:2d}: {status}  {e['title']}")
