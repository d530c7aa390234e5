import re
import xml.etree.ElementTree as ET

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wallthick.aha import SegmentReport, assemble_17, bullseye_svg, pixel_angles, ramp_color, segment_slice
from wallthick.errors import DomainError, ShapeError
from wallthick.streamline import ThicknessMap
from wallthick.synth import annulus_mask


def ring_map(values=10.0, size=64):
    m = annulus_mask(size, 18, 26, spacing=1.0)
    return ThicknessMap.from_array(np.where(m.wall, values, 0.0), 1.0)


def uniform(level, value, n):
    first = {"basal": 1, "mid": 7, "apical": 13}[level]
    return SegmentReport(level, tuple(range(first, first + n)), (float(value),) * n)


def test_uniform_ring():
    for level, n in (("basal", 6), ("mid", 6), ("apical", 4)):
        rep = segment_slice(ring_map(), level)
        assert len(rep.mean_thickness) == n
        np.testing.assert_allclose(rep.mean_thickness, 10.0, atol=0.1)


def test_half_and_half_matches_brute_force():
    m = annulus_mask(64, 18, 26, spacing=1.0)
    y, x = np.mgrid[:64, :64]
    t = np.where(m.wall, np.where(x < 31.5, 10.0, 20.0), 0.0)
    rep = segment_slice(ThicknessMap.from_array(t, 1.0), "mid", 90.0, "ccw")
    # brute force: loop over pixels, angle about the cavity centre
    sums, counts = np.zeros(6), np.zeros(6)
    for r, c in np.argwhere(m.wall):
        a = (np.degrees(np.arctan2(-(r - 31.5), c - 31.5)) - 90.0) % 360.0
        s = min(int(a // 60), 5)
        sums[s] += t[r, c]
        counts[s] += 1
    np.testing.assert_allclose(rep.mean_thickness, sums / counts, atol=1e-9)
    vals = np.round(rep.mean_thickness, 6)
    # the split runs along the 90/270 degree line, which is also a sector edge
    assert list(vals) == [10.0, 10.0, 10.0, 20.0, 20.0, 20.0]
    shifted = segment_slice(ThicknessMap.from_array(t, 1.0), "mid", 120.0, "ccw").mean_thickness
    assert sum(abs(v - 10) < 1e-9 for v in shifted) == 2 and sum(abs(v - 20) < 1e-9 for v in shifted) == 2


def test_level_and_sense_validation():
    with pytest.raises(ValueError):
        segment_slice(ring_map(), "apex")
    with pytest.raises(ValueError):
        segment_slice(ring_map(), "mid", sense="up")
    with pytest.raises(DomainError):
        segment_slice(ThicknessMap.from_array(np.zeros((8, 8))), "mid")


def test_clockwise_reverses_sector_order():
    m = annulus_mask(64, 18, 26, spacing=1.0)
    t = np.where(m.wall, np.random.default_rng(3).uniform(5, 15, m.wall.shape), 0.0)
    tm = ThicknessMap.from_array(t, 1.0)
    ccw = segment_slice(tm, "apical", 90.0, "ccw").mean_thickness
    cw = segment_slice(tm, "apical", 90.0, "cw").mean_thickness
    np.testing.assert_allclose(cw, (ccw[0], ccw[3], ccw[2], ccw[1]), atol=0.3)


def test_weighted_sector_mean_equals_wall_mean():
    m = annulus_mask(64, 14, 27, (30.2, 33.7), 1.0)
    t = np.where(m.wall, np.random.default_rng(8).uniform(3, 30, m.wall.shape), 0.0)
    rep = segment_slice(ThicknessMap.from_array(t, 1.0), "basal", 37.0)
    w = np.array(rep.pixel_counts)
    assert abs(np.dot(w, rep.mean_thickness) / w.sum() - t[m.wall].mean()) < 1e-6


@settings(max_examples=10, deadline=None)
@given(st.integers(1, 3), st.floats(0, 359), st.sampled_from(["cw", "ccw"]), st.integers(0, 2 ** 31))
def test_angle_equivariance(k, ref, sense, seed):
    m = annulus_mask(64, 14, 26, (31.5, 31.5), 1.0)
    t = np.where(m.wall, np.random.default_rng(seed).uniform(5, 15, m.wall.shape), 0.0)
    a = segment_slice(ThicknessMap.from_array(t, 1.0), "mid", ref, sense)
    b = segment_slice(ThicknessMap.from_array(np.rot90(t, k), 1.0), "mid", ref + 90 * k, sense)
    np.testing.assert_allclose(a.mean_thickness, b.mean_thickness, atol=0.1)


def test_wall_centroid_fallback():
    wall = np.zeros((9, 9))
    wall[2:7, 4] = 5.0
    rep = segment_slice(ThicknessMap.from_array(wall, 1.0), "apical")
    assert sum(rep.pixel_counts) == 5


def test_pixel_angles_convention():
    ang = pixel_angles((3, 3), (1.0, 1.0), 0.0, "ccw")
    assert ang[1, 2] == 0.0 and ang[0, 1] == 90.0 and ang[1, 0] == 180.0 and ang[2, 1] == 270.0


def test_assemble_17():
    full = assemble_17(uniform("basal", 8, 6), uniform("mid", 10, 6), uniform("apical", 12, 4), 9.0)
    assert full.segment_ids == tuple(range(1, 18))
    assert full.mean_thickness == (8.0,) * 6 + (10.0,) * 6 + (12.0,) * 4 + (9.0,)
    with pytest.raises(ShapeError):
        assemble_17(uniform("basal", 8, 6), uniform("mid", 10, 6), None, 9.0)
    with pytest.raises(ShapeError):
        assemble_17(uniform("basal", 8, 6), uniform("mid", 10, 6), uniform("mid", 12, 6), 9.0)


def full_report(values):
    return SegmentReport("full", tuple(range(1, 18)), tuple(float(v) for v in values))


def test_svg_structure():
    vals = np.linspace(2, 18, 17)
    doc = bullseye_svg(full_report(vals), (0, 20))
    root = ET.fromstring(doc.encode())
    ns = "{http://www.w3.org/2000/svg}"
    shapes = [e for e in root.iter() if e.tag in (ns + "path", ns + "circle")]
    texts = [e for e in root.iter() if e.tag == ns + "text"]
    assert len(shapes) == 17 and all(e.get("fill") for e in shapes)
    assert len(texts) == 17
    assert sorted(float(t.text) for t in texts) == [round(v, 1) for v in sorted(vals)]
    assert doc == bullseye_svg(full_report(vals), (0, 20))


def test_svg_colors():
    doc = bullseye_svg(full_report([7.0] * 17), (0, 20))
    fills = re.findall(r'fill="(rgb\([^"]*\))"', doc)
    assert len(fills) == 17 and len(set(fills)) == 1
    assert ramp_color(0, 0, 20) == "rgb(0,0,255)" and ramp_color(20, 0, 20) == "rgb(255,0,0)"
    assert ramp_color(-5, 0, 20) == "rgb(0,0,255)" and ramp_color(99, 0, 20) == "rgb(255,0,0)"
    with pytest.raises(ValueError):
        bullseye_svg(full_report([7.0] * 17), (5, 5))
    with pytest.raises(ShapeError):
        bullseye_svg(SegmentReport("mid", tuple(range(7, 13)), (1.0,) * 6), (0, 1))


def test_segment_csv():
    text = uniform("apical", 3, 4).to_csv()
    assert text.splitlines()[0] == "segment_id,mean_thickness_mm"
    assert text.splitlines()[1] == "13,3.000000"
