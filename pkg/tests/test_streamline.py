import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.ndimage import map_coordinates

from wallthick.errors import BoundarySpec, InterpolationImpossible, NoInnerBoundary
from wallthick.grid import GridGeometry, RegionLabels, WALL, extract_boundaries, label_regions, pinned_boundaries
from wallthick.laplace import SolverConfig, solve_laplace, tangent_field
from wallthick.streamline import (INTERPOLATED, LEFT_WALL, MAX_STEPS, REACHED_OUTER, SPLATTED, UNDEFINED_FIELD, ZERO,
                                  Streamline, ThicknessMap, fill_missing, measure, measure_detailed,
                                  measure_with_boundaries, path_length, seed_points, splat, trace, trace_from_inner)
from wallthick.synth import annulus_mask

from conftest import ring_mask, slab


def ring_setup(mask=None, cfg=SolverConfig()):
    mask = ring_mask() if mask is None else mask
    reg = label_regions(mask)
    bc = extract_boundaries(reg)
    pf = solve_laplace(reg, bc, cfg)
    return reg, bc, pf, tangent_field(pf, reg, cfg)


def slab_setup(**kw):
    mask, labels = slab(**kw)
    reg = label_regions(mask)
    pf = solve_laplace(reg, pinned_boundaries(mask, labels))
    return reg, pf, tangent_field(pf, reg)


def test_straight_trace_across_slab():
    _, pf, tf = slab_setup()
    s = trace(tf, pf, (2.5, 9.0))  # left edge of the 5-px wall
    assert s.terminated_by == REACHED_OUTER
    assert abs(s.arc_length - 5.0) <= 0.1
    np.testing.assert_allclose(s.points[:, 1], 9.0)


def test_annulus_streamlines_from_inner_pixels():
    reg, bc, pf, tf = ring_setup()
    starts = bc.inner[:, ::-1].astype(float)
    lines = trace_from_inner(tf, pf, starts, SolverConfig())
    lengths = np.array([s.arc_length for s in lines])
    assert all(s.terminated_by == REACHED_OUTER for s in lines)
    assert lengths.min() >= 9.5 and lengths.max() <= 10.5


def test_max_steps_guard():
    _, bc, pf, tf = ring_setup()
    s = trace(tf, pf, bc.inner[0, ::-1].astype(float), SolverConfig(max_steps=3, d_s=0.1))
    assert s.terminated_by == MAX_STEPS
    assert len(s.points) <= 4


def test_undefined_start():
    _, pf, tf = slab_setup()
    s = trace(tf, pf, (0.0, 0.0))
    assert s.terminated_by == UNDEFINED_FIELD and s.arc_length == 0.0


def test_streamline_invariants():
    reg, bc, pf, tf = ring_setup(ring_mask(spacing=1.36))
    cfg = SolverConfig()
    lines = trace_from_inner(tf, pf, seed_points(reg.labels, bc), cfg)
    for s in lines[::7]:
        steps = np.hypot(*np.diff(s.points, axis=0).T)
        # points are kept in pixel units; one step is at most d_s pixels
        assert steps.max() <= cfg.d_s + 1e-9
        assert s.arc_length == path_length(s.points, 1.36)


def test_potential_never_increases_along_a_trace():
    reg, bc, pf, tf = ring_setup(annulus_mask(64, 14.2, 27.9, (30.3, 33.1), 1.0))
    u = pf.ghost_padded()
    for r, c in bc.inner[::5]:
        s = trace(tf, pf, (float(c), float(r)))
        along = map_coordinates(u, [s.points[:, 1] + 1, s.points[:, 0] + 1], order=1)
        assert np.all(np.diff(along) <= 1e-6)


def test_splat_single_and_shared():
    geom = GridGeometry(8, 3, 1.0)
    labels = np.full((3, 8), WALL, np.uint8)
    reg = RegionLabels(geom, labels, 0)
    line = Streamline(np.array([[1.0, 1.0], [5.0, 1.0]]), 5.0, REACHED_OUTER)
    tm = splat([line], reg)
    # only the visited cells (the two end points) are painted
    assert tm.thickness[1, 1] == 5.0 and tm.thickness[1, 5] == 5.0
    dense = Streamline(np.column_stack([np.arange(1, 5.01, 0.5), np.ones(9)]), 5.0, REACHED_OUTER)
    tm = splat([dense], reg)
    assert np.flatnonzero(tm.assigned[1] == SPLATTED).tolist() == [1, 2, 3, 4, 5]
    assert np.all(tm.thickness[1, 1:6] == 5.0)

    a = Streamline(np.array([[0.0, 0.0], [3.0, 1.0]]), 4.0, LEFT_WALL)
    b = Streamline(np.array([[3.0, 1.0], [7.0, 2.0]]), 6.0, REACHED_OUTER)
    c = Streamline(np.array([[3.0, 1.0]]), 100.0, MAX_STEPS)  # incomplete lines are ignored
    tm = splat([a, b, c], reg)
    assert tm.thickness[1, 3] == 5.0
    assert tm.thickness[0, 0] == 4.0 and tm.thickness[2, 7] == 6.0


def test_splat_coverage_on_annulus():
    reg, bc, pf, tf = ring_setup()
    tm = splat(trace_from_inner(tf, pf, seed_points(reg.labels, bc), SolverConfig()), reg)
    assert tm.coverage() == 1.0  # flags before filling are splatted only
    assert np.count_nonzero(tm.assigned) / np.count_nonzero(reg.wall) >= 0.9


def _partial(values, wall):
    flags = np.where(values > 0, SPLATTED, ZERO).astype(np.uint8)
    h, w = wall.shape
    return ThicknessMap(GridGeometry(w, h, 1.0), values, flags)


def test_fill_identity_when_complete():
    reg, bc, pf, _ = ring_setup()
    full = _partial(np.where(reg.wall, 7.0, 0.0), reg.wall)
    out = fill_missing(full, pf)
    assert np.array_equal(out.thickness, full.thickness)
    assert np.array_equal(out.assigned, full.assigned)


def test_fill_from_equal_neighbours_is_exact():
    reg, bc, pf, _ = ring_setup()
    vals = np.where(reg.wall, 10.0, 0.0)
    vals[bc.outer[3, 0], bc.outer[3, 1]] = 0.0
    out = fill_missing(_partial(vals, reg.wall), pf)
    assert out.thickness[bc.outer[3, 0], bc.outer[3, 1]] == 10.0
    assert out.assigned[bc.outer[3, 0], bc.outer[3, 1]] == INTERPOLATED


def brute_idw(vals, known, pf, p, k, lam):
    pts = np.argwhere(known)
    d2 = ((pts - p) ** 2).sum(axis=1)
    order = np.lexsort((np.arange(len(pts)), d2))[:k]
    q = pts[order]
    w = 1.0 / (d2[order] * (1 + lam * np.abs(pf.unit[tuple(p)] - pf.unit[q[:, 0], q[:, 1]])))
    return np.sum(w * vals[q[:, 0], q[:, 1]]) / np.sum(w)


def test_fill_matches_brute_force_and_stays_in_range():
    reg, bc, pf, _ = ring_setup()
    rng = np.random.default_rng(5)
    vals = np.where(reg.wall, rng.uniform(8.0, 12.0, reg.wall.shape), 0.0)
    y, x = np.mgrid[:64, :64]
    band = reg.wall & (np.abs(np.arctan2(y - 31.5, x - 31.5)) < 0.4)
    vals[band] = 0.0
    cfg = SolverConfig()
    out = fill_missing(_partial(vals, reg.wall), pf, cfg)
    filled = out.thickness[band]
    assert filled.min() >= 8.0 and filled.max() <= 12.0
    known = reg.wall & ~band
    for p in np.argwhere(band)[::9]:
        want = brute_idw(vals, known, pf, p, cfg.fill_k, cfg.fill_lambda)
        assert out.thickness[tuple(p)] == pytest.approx(want, rel=1e-12)


def test_fill_needs_a_splatted_pixel():
    reg, bc, pf, _ = ring_setup()
    with pytest.raises(InterpolationImpossible):
        fill_missing(_partial(np.zeros(reg.wall.shape), reg.wall), pf)


def test_measure_annulus():
    tm = measure(ring_mask())
    wall = ring_mask().wall
    vals = tm.thickness[wall]
    assert abs(vals.mean() - 10.0) <= 0.2
    assert np.all(np.abs(vals - 10.0) <= 0.5)
    assert np.all(tm.thickness[~wall] == 0) and np.all(tm.assigned[wall] != ZERO)


def test_measure_scales_with_spacing():
    mask = ring_mask(spacing=1.36)
    vals = measure(mask).thickness[mask.wall]
    assert abs(vals.mean() - 13.6) <= 0.7 and np.all(np.abs(vals - 13.6) <= 0.7)


def test_solid_disk_is_rejected():
    with pytest.raises(NoInnerBoundary):
        measure(annulus_mask(40, 0, 12, spacing=1.0))


def test_slab_with_manual_boundaries():
    mask, labels = slab()
    tm = measure_with_boundaries(mask, labels)
    assert np.all(np.abs(tm.thickness[mask.wall] - 5.0) <= 2 * 0.1)
    assert np.all(tm.thickness[~mask.wall] == 0)


def test_manual_boundaries_need_both_sets():
    mask, labels = slab()
    with pytest.raises(BoundarySpec):
        measure_with_boundaries(mask, np.where(labels == 1, 0, labels))
    with pytest.raises(BoundarySpec):
        measure_with_boundaries(mask, np.where(labels == 2, 0, labels))
    bad = labels.copy()
    bad[0, 0] = 1  # off the wall
    with pytest.raises(BoundarySpec):
        measure_with_boundaries(mask, bad)


def test_measure_is_deterministic_and_psi_max_invariant():
    mask = annulus_mask(56, 11.3, 22.8, (27.1, 26.4), 1.0)
    a = measure(mask)
    assert a.thickness.tobytes() == measure(mask).thickness.tobytes()
    b = measure(mask, SolverConfig(psi_inner=100.0))
    assert np.max(np.abs(a.thickness - b.thickness)) <= 1e-6


@settings(max_examples=6, deadline=None)
@given(st.floats(6, 12), st.floats(3, 10), st.floats(-2, 2), st.floats(-2, 2), st.integers(1, 3))
def test_measure_rotation_equivariance(r_in, width, dx, dy, k):
    mask = annulus_mask(48, r_in, r_in + width, (23.5 + dx, 23.5 + dy), 1.0)
    a = measure(mask)
    b = measure(mask.rot90(k))
    assert np.max(np.abs(np.rot90(a.thickness, k) - b.thickness)) <= 1e-6


def test_symmetric_input_gives_symmetric_output():
    tm = measure(ring_mask())
    for k in (1, 2, 3):
        assert np.array_equal(np.rot90(tm.thickness, k), tm.thickness)


def test_measure_detailed_reports_stages():
    res = measure_detailed(ring_mask())
    assert set(res.timings) == {"label", "laplace", "tangent", "trace", "splat", "fill"}
    assert res.field.converged and len(res.streamlines) > 0
