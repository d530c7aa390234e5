"""Streamline integration, thickness splatting and gap filling.

Streamlines run from the inner border toward the outer border by forward
Euler steps of length ``d_s`` against the tangent field (which points up the
potential).  Their arc length, converted to mm, is painted onto every wall
pixel they cross; pixels no streamline reaches are interpolated from nearby
painted pixels, weighted by distance and potential similarity.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import InterpolationImpossible
from .grid import (
    CAVITY,
    EXTERIOR,
    WALL,
    BinaryMask,
    BoundaryConditions,
    GridGeometry,
    RegionLabels,
    extract_boundaries,
    label_regions,
    pinned_boundaries,
)
from .laplace import (
    PotentialField,
    SolverConfig,
    TangentField,
    canonical_rotation,
    solve_laplace,
    symmetrize,
    symmetry_group,
    tangent_field,
)

REACHED_OUTER = "reached_outer"
LEFT_WALL = "left_wall"
MAX_STEPS = "max_steps"
UNDEFINED_FIELD = "undefined_field"
_TERMINATIONS = (REACHED_OUTER, LEFT_WALL, MAX_STEPS, UNDEFINED_FIELD)

# assignment flags, identical to the grey levels of the --dump-flags image
ZERO = 0
INTERPOLATED = 128
SPLATTED = 255

# potential margin (normalized units) at which a streamline counts as arrived
PSI_ARRIVAL = 1e-6
# edge seeds sit just inside their pixel; an exact half would round into the neighbour on two sides
EDGE_INSET = 0.49


@dataclass(frozen=True, eq=False)
class Streamline:
    points: np.ndarray  # (M+1, 2) sub-pixel (x, y)
    arc_length: float  # mm
    terminated_by: str
    spacing: float = 1.0

    @property
    def completed(self) -> bool:
        return self.terminated_by in (REACHED_OUTER, LEFT_WALL)


def path_length(points: np.ndarray, spacing: float = 1.0) -> float:
    """Sum of segment lengths in mm."""
    points = np.asarray(points, dtype=float)
    if len(points) < 2:
        return 0.0
    d = np.diff(points, axis=0)
    return float(np.sum(np.sqrt(d[:, 0] ** 2 + d[:, 1] ** 2)) * spacing)


@dataclass(frozen=True, eq=False)
class ThicknessMap:
    geometry: GridGeometry
    thickness: np.ndarray  # mm
    assigned: np.ndarray  # uint8 flags ZERO / INTERPOLATED / SPLATTED

    @classmethod
    def from_array(cls, arr, spacing: float = 1.36) -> "ThicknessMap":
        arr = np.asarray(arr, dtype=float)
        h, w = arr.shape
        flags = np.where(arr > 0, SPLATTED, ZERO).astype(np.uint8)
        return cls(GridGeometry(w, h, spacing), arr, flags)

    @property
    def wall(self) -> np.ndarray:
        return self.assigned != ZERO

    def rot90(self, k: int = 1) -> "ThicknessMap":
        return ThicknessMap(self.geometry.rotated(k),
                            np.ascontiguousarray(np.rot90(self.thickness, k)),
                            np.ascontiguousarray(np.rot90(self.assigned, k)))

    def coverage(self) -> float:
        """Fraction of assigned pixels that were reached by a streamline."""
        n = np.count_nonzero(self.wall)
        return float(np.count_nonzero(self.assigned == SPLATTED)) / n if n else 0.0


# ----------------------------------------------------------------------------
# integration

class _Sampler:
    """Padded lookup tables shared by every streamline of one field."""

    def __init__(self, tf: TangentField, pf: PotentialField):
        h, w = pf.labels.shape
        self.h, self.w = h, w
        self.vx = np.pad(tf.vx, 1)
        self.vy = np.pad(tf.vy, 1)
        self.defined = np.pad(tf.defined, 1)
        self.labels = np.pad(pf.labels, 1, constant_values=EXTERIOR)
        self.wall = self.labels == WALL
        self.outer = np.pad(pf.outer, 1)
        self.ghost = pf.mode == "ghost"
        self.u = pf.ghost_padded()
        self.gmag = np.pad(tf.magnitude, 1)

    def cell(self, pos):
        """Padded (row, col) of the pixel containing each point; off-image maps to the pad ring."""
        c = np.clip(np.floor(pos[:, 0] + 0.5), -1, self.w).astype(np.intp) + 1
        r = np.clip(np.floor(pos[:, 1] + 0.5), -1, self.h).astype(np.intp) + 1
        return r, c

    def _corners(self, pos):
        x = np.minimum(np.maximum(pos[:, 0], -1.0), self.w)
        y = np.minimum(np.maximum(pos[:, 1], -1.0), self.h)
        x0 = np.floor(x)
        y0 = np.floor(y)
        fx = x - x0
        fy = y - y0
        c0 = x0.astype(np.intp) + 1
        r0 = y0.astype(np.intp) + 1
        c1 = np.minimum(c0 + 1, self.w + 1)
        r1 = np.minimum(r0 + 1, self.h + 1)
        return ((r0, c0, (1 - fx) * (1 - fy)), (r0, c1, fx * (1 - fy)),
                (r1, c0, (1 - fx) * fy), (r1, c1, fx * fy))

    def vector(self, pos):
        """Bilinear blend of the defined neighbouring unit vectors, renormalized."""
        vx = np.zeros(len(pos))
        vy = np.zeros(len(pos))
        for r, c, wgt in self._corners(pos):
            wgt = np.where(self.defined[r, c], wgt, 0.0)
            vx += wgt * self.vx[r, c]
            vy += wgt * self.vy[r, c]
        norm = np.sqrt(vx * vx + vy * vy)
        ok = norm > 1e-12
        norm = np.where(ok, norm, 1.0)
        return vx / norm, vy / norm, ok

    def potential(self, pos):
        """Bilinear normalized potential; pinned fields have no ghosts, so only wall pixels count."""
        if self.ghost:
            return self._scalar(self.u, pos)
        return self._wall_blend(self.u, pos)

    def slope(self, pos):
        """Gradient magnitude of the normalized potential, blended over wall pixels only."""
        return self._wall_blend(self.gmag, pos)

    def _wall_blend(self, arr, pos):
        num = np.zeros(len(pos))
        den = np.zeros(len(pos))
        for r, c, wgt in self._corners(pos):
            wgt = np.where(self.wall[r, c], wgt, 0.0)
            num += wgt * arr[r, c]
            den += wgt
        return np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)

    def _scalar(self, arr, pos):
        out = np.zeros(len(pos))
        for r, c, wgt in self._corners(pos):
            out += wgt * arr[r, c]
        return out


def _exit_fraction(p, q):
    """Fraction of the step p->q spent inside the pixel cell that contains p."""
    t = np.ones(len(p))
    for axis in (0, 1):
        a, b = p[:, axis], q[:, axis]
        center = np.floor(a + 0.5)
        d = b - a
        with np.errstate(divide="ignore", invalid="ignore"):
            hi = np.where(d > 0, (center + 0.5 - a) / d, np.inf)
            lo = np.where(d < 0, (center - 0.5 - a) / d, np.inf)
        t = np.minimum(t, np.minimum(hi, lo))
    return np.clip(t, 0.0, 1.0)


def _integrate(sampler: _Sampler, starts: np.ndarray, cfg: SolverConfig, direction: float):
    """Euler-integrate all ``starts`` at once; direction -1 walks down the potential.

    Returns per-start point arrays and termination labels.  Every streamline
    is computed with element-wise operations only, so batching does not
    change any result.
    """
    n = len(starts)
    pos = np.array(starts, dtype=float).reshape(n, 2)
    history_idx = [np.arange(n)]
    history_pos = [pos.copy()]
    term = np.full(n, "", dtype=object)
    active = np.arange(n)
    ds = cfg.d_s
    psi_check = sampler.ghost
    threshold = PSI_ARRIVAL if direction < 0 else 1.0 - PSI_ARRIVAL

    for _ in range(int(cfg.max_steps)):
        if len(active) == 0:
            break
        p = pos[active]
        vx, vy, ok = sampler.vector(p)
        if not ok.all():
            term[active[~ok]] = UNDEFINED_FIELD
            active, p, vx, vy = active[ok], p[ok], vx[ok], vy[ok]
            if len(active) == 0:
                break
        q = np.column_stack([p[:, 0] + direction * vx * ds, p[:, 1] + direction * vy * ds])

        r, c = sampler.cell(q)
        exited = ~sampler.wall[r, c]
        arrived = np.zeros(len(active), dtype=bool)
        t = np.ones(len(active))
        if psi_check:
            uq = sampler.potential(q)
            arrived = (uq <= threshold) if direction < 0 else (uq >= threshold)
            arrived &= ~exited
            if arrived.any():
                up = sampler.potential(p[arrived])
                denom = up - uq[arrived]
                with np.errstate(divide="ignore", invalid="ignore"):
                    ta = np.where(denom != 0, (up - threshold) / denom, 1.0)
                t[arrived] = np.clip(ta, 0.0, 1.0)
        if exited.any():
            t[exited] = _exit_fraction(p[exited], q[exited])
        stop = exited | arrived
        q[stop] = p[stop] + t[stop, None] * (q[stop] - p[stop])

        if stop.any():
            idx = active[stop]
            if direction < 0:
                if sampler.ghost:
                    into_ext = sampler.labels[r[stop], c[stop]] == EXTERIOR
                else:
                    pr, pc = sampler.cell(p[stop])
                    into_ext = sampler.outer[pr, pc]
                reached = into_ext | arrived[stop]
            else:
                reached = np.ones(len(idx), dtype=bool)
            term[idx] = np.where(reached, REACHED_OUTER, LEFT_WALL)

        pos[active] = q
        history_idx.append(active)
        history_pos.append(q)
        active = active[~stop]

    term[active] = MAX_STEPS

    all_idx = np.concatenate(history_idx)
    all_pos = np.concatenate(history_pos)
    order = np.argsort(all_idx, kind="stable")
    all_idx, all_pos = all_idx[order], all_pos[order]
    bounds = np.searchsorted(all_idx, np.arange(n + 1))
    paths = [all_pos[bounds[i]:bounds[i + 1]] for i in range(n)]
    return paths, list(term)


def trace(tf: TangentField, psi: PotentialField, start, cfg: SolverConfig = SolverConfig()) -> Streamline:
    """Follow one streamline from ``start`` (x, y) down the potential."""
    sampler = _Sampler(tf, psi)
    return _trace_batch(sampler, np.asarray([start], dtype=float), cfg, psi.geometry.spacing)[0]


def _trace_batch(sampler, starts, cfg, spacing):
    paths, terms = _integrate(sampler, starts, cfg, -1.0)
    out = []
    for pts, why in zip(paths, terms):
        if why == UNDEFINED_FIELD and len(pts) == 1:
            out.append(Streamline(pts, 0.0, why, spacing))
        else:
            out.append(Streamline(pts, path_length(pts, spacing), why, spacing))
    return out


def trace_from_inner(tf: TangentField, psi: PotentialField, seeds: np.ndarray, cfg: SolverConfig) -> list[Streamline]:
    """Streamlines through ``seeds`` (x, y), spanning inner to outer border.

    Each seed is integrated both ways until it leaves the wall.  The two end
    legs are then replaced by straight extrapolations from ``border_probe``
    pixels inside the wall: the potential there, divided by its local slope,
    gives the distance to where the boundary potential is reached, and half
    a lattice layer (``0.5 / (|nx| + |ny|)`` along the local direction)
    converts that to the pixel edge.  This keeps the measured length from
    inheriting the staircase of the digital boundary.
    """
    sampler = _Sampler(tf, psi)
    spacing = psi.geometry.spacing
    seeds = np.asarray(seeds, dtype=float).reshape(-1, 2)
    back, back_terms = _integrate(sampler, seeds, cfg, +1.0)
    forward = _trace_batch(sampler, seeds, cfg, spacing)
    paths = []
    for b, bt, f in zip(back, back_terms, forward):
        if f.terminated_by == UNDEFINED_FIELD and len(f.points) == 1:
            paths.append(None)
        elif bt in (REACHED_OUTER, LEFT_WALL):
            paths.append(np.concatenate([b[::-1], f.points[1:]]))
        else:
            paths.append(f.points)
    refine = [i for i, (f, bt) in enumerate(zip(forward, back_terms))
              if f.completed and bt in (REACHED_OUTER, LEFT_WALL)]
    for i, pts in zip(refine, _refine_ends(sampler, [paths[i] for i in refine], cfg)):
        paths[i] = pts
    return [f if pts is None else Streamline(pts, path_length(pts, spacing), f.terminated_by, spacing)
            for pts, f in zip(paths, forward)]


def _refine_ends(sampler: _Sampler, paths: list, cfg: SolverConfig) -> list:
    if not paths:
        return []
    cums, probe_idx = [], []
    for pts in paths:
        seg = np.sqrt(np.sum(np.diff(pts, axis=0) ** 2, axis=1))
        s = np.concatenate([[0.0], np.cumsum(seg)])
        total = s[-1]
        depth = min(cfg.border_probe, total / 2)
        ia = int(min(np.searchsorted(s, depth), len(pts) - 1))
        ib = int(max(np.searchsorted(s, total - depth, side="right") - 1, ia))
        cums.append(total)
        probe_idx.append((ia, ib))
    probe = np.array([[pts[ia], pts[ib]] for pts, (ia, ib) in zip(paths, probe_idx)]).reshape(-1, 2)
    u = sampler.potential(probe).reshape(-1, 2)
    g = sampler.slope(probe).reshape(-1, 2)
    vx, vy, ok = sampler.vector(probe)
    vx, vy, ok = vx.reshape(-1, 2), vy.reshape(-1, 2), ok.reshape(-1, 2)
    # half-layer offset: ghost values sit one layer outside the wall, pins one layer inside
    sign = -1.0 if sampler.ghost else 1.0
    with np.errstate(divide="ignore", invalid="ignore"):
        half = 0.5 / (np.abs(vx) + np.abs(vy))
        reach = np.column_stack([(1.0 - u[:, 0]) / g[:, 0], u[:, 1] / g[:, 1]]) + sign * half
    # a flat potential near the border makes the extrapolated distance meaningless; keep the raw end there
    good = ok & (g > 1e-12) & (reach > 0) & (reach <= 2 * cfg.border_probe + 1.0)
    ds = cfg.d_s
    out = []
    for n, pts in enumerate(paths):
        ia, ib = probe_idx[n]
        if not good[n].any() or cums[n] <= 0 or len(pts) < 3:
            out.append(pts)
            continue
        # travel runs down the potential, i.e. against the tangent
        if good[n, 0]:
            head = _leg(pts[ia], np.array([vx[n, 0], vy[n, 0]]), reach[n, 0], ds)[::-1]
        else:
            head = pts[:ia]
        if good[n, 1]:
            tail = _leg(pts[ib], -np.array([vx[n, 1], vy[n, 1]]), reach[n, 1], ds)
        else:
            tail = pts[ib + 1:]
        out.append(np.concatenate([head, pts[ia:ib + 1], tail]))
    return out


def _leg(origin, direction, length, ds):
    """Points from ``origin`` (exclusive) to ``origin + length*direction`` spaced at most ``ds``."""
    n = max(1, int(np.ceil(length / ds - 1e-9)))
    t = (np.arange(1, n + 1) / n) * length
    return origin[None, :] + t[:, None] * direction[None, :]


# ----------------------------------------------------------------------------
# splatting and filling

def splat(streamlines: list[Streamline], regions: RegionLabels) -> ThicknessMap:
    """Paint each completed streamline's length onto the wall pixels it visits (mean on overlap)."""
    h, w = regions.labels.shape
    wall = regions.labels == WALL
    total = np.zeros(h * w)
    count = np.zeros(h * w)
    for s in streamlines:
        if not s.completed:
            continue
        cols = np.floor(s.points[:, 0] + 0.5).astype(np.intp)
        rows = np.floor(s.points[:, 1] + 0.5).astype(np.intp)
        ok = (rows >= 0) & (rows < h) & (cols >= 0) & (cols < w)
        cells = np.unique(rows[ok] * w + cols[ok])
        cells = cells[wall.reshape(-1)[cells]]
        total[cells] += s.arc_length
        count[cells] += 1
    hit = count > 0
    thickness = np.zeros(h * w)
    thickness[hit] = total[hit] / count[hit]
    flags = np.where(hit, SPLATTED, ZERO).astype(np.uint8)
    return ThicknessMap(regions.geometry, thickness.reshape(h, w), flags.reshape(h, w))


def fill_missing(partial: ThicknessMap, psi: PotentialField, cfg: SolverConfig = SolverConfig()) -> ThicknessMap:
    """Assign every unreached wall pixel a distance- and potential-weighted mean of its k nearest reached pixels."""
    wall = psi.wall
    known = wall & (partial.assigned != ZERO)
    if not known.any():
        raise InterpolationImpossible("no wall pixel was reached by a streamline")
    thickness = np.where(wall, partial.thickness, 0.0)
    assigned = np.where(wall, partial.assigned, ZERO).astype(np.uint8)
    missing = wall & ~known
    if missing.any():
        kpts = np.argwhere(known)
        mpts = np.argwhere(missing)
        kval = thickness[known]
        ku = psi.unit[known]
        mu = psi.unit[missing]
        k = min(int(cfg.fill_k), len(kpts))
        tree = cKDTree(kpts)
        dist, _ = tree.query(mpts, k=k)
        dist = np.asarray(dist).reshape(len(mpts), k)
        radius = dist[:, -1] + 1e-6
        balls = tree.query_ball_point(mpts, radius)
        lam = cfg.fill_lambda
        values = np.empty(len(mpts))
        for i, cand in enumerate(balls):
            cand = np.asarray(cand, dtype=np.intp)
            d2 = ((kpts[cand] - mpts[i]) ** 2).sum(axis=1)
            # nearest first, ties broken by row-major position
            pick = cand[np.lexsort((cand, d2))[:k]]
            d2 = ((kpts[pick] - mpts[i]) ** 2).sum(axis=1)
            wgt = 1.0 / (d2 * (1.0 + lam * np.abs(mu[i] - ku[pick])))
            values[i] = np.sum(wgt * kval[pick]) / np.sum(wgt)
        thickness[missing] = values
        assigned[missing] = INTERPOLATED
    return ThicknessMap(partial.geometry, thickness, assigned)


# ----------------------------------------------------------------------------
# full pipeline

@dataclass
class MeasureResult:
    thickness: ThicknessMap
    field: PotentialField
    streamlines: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)


def seed_points(labels: np.ndarray, bc: BoundaryConditions) -> np.ndarray:
    """Streamline seeds (x, y): each inner-boundary pixel center, then the midpoints of
    its edges facing off-wall pixels (the cavity, in automatic mode).

    Edge seeds roughly double the streamline density along the border so
    the diverging field still paints most of the wall.
    """
    h, w = labels.shape
    facing = (labels == CAVITY) if bc.mode == "ghost" else (labels != WALL)
    out = []
    for r, c in bc.inner:
        out.append((c, r))
        for dr, dc in ((-1, 0), (0, -1), (0, 1), (1, 0)):
            rr, cc = r + dr, c + dc
            off_image = not (0 <= rr < h and 0 <= cc < w)
            if (off_image and bc.mode == "pinned") or (not off_image and facing[rr, cc]):
                out.append((c + EDGE_INSET * dc, r + EDGE_INSET * dr))
    return np.asarray(out, dtype=float).reshape(-1, 2)


def _rot_points(pts: np.ndarray, shape: tuple[int, int], k: int) -> np.ndarray:
    """Map (x, y) points through ``np.rot90(image, k)`` for an image of ``shape``."""
    h, w = shape
    out = np.array(pts, dtype=float)
    for _ in range(k % 4):
        x, y = out[:, 0].copy(), out[:, 1].copy()
        out[:, 0], out[:, 1] = y, (w - 1) - x
        h, w = w, h
    return out


def _run(mask: BinaryMask, bc_builder, cfg: SolverConfig, extra_grids=()) -> MeasureResult:
    # everything runs in a canonical orientation so results rotate exactly with the input
    k = canonical_rotation(mask.wall.view(np.uint8), *extra_grids)
    cmask = mask.rot90(k)
    timings = {}
    t0 = time.perf_counter()
    regions = label_regions(cmask)
    bc: BoundaryConditions = bc_builder(cmask, regions, k)
    timings["label"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    pf = solve_laplace(regions, bc, cfg)
    timings["laplace"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    tf = tangent_field(pf, regions, cfg)
    timings["tangent"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    seeds = seed_points(regions.labels, bc)
    lines = trace_from_inner(tf, pf, seeds, cfg)
    timings["trace"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    partial = splat(lines, regions)
    timings["splat"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    tmap = fill_missing(partial, pf, cfg)
    group = symmetry_group(cmask.wall, *(np.rot90(g, k) for g in extra_grids))
    if len(group) > 1:
        # tracing and tie-breaks follow array order; average the orbit so symmetric inputs stay symmetric
        flags = np.max(np.stack([np.rot90(tmap.assigned, j) for j in group]), axis=0)
        tmap = ThicknessMap(tmap.geometry, symmetrize(tmap.thickness, group), flags)
    timings["fill"] = time.perf_counter() - t0

    back = (-k) % 4
    field_out = PotentialField(
        geometry=mask.geometry,
        unit=np.ascontiguousarray(np.rot90(pf.unit, back)),
        labels=np.ascontiguousarray(np.rot90(pf.labels, back)),
        inner=np.rot90(pf.inner, back),
        outer=np.rot90(pf.outer, back),
        psi_inner=pf.psi_inner, psi_outer=pf.psi_outer, mode=pf.mode,
        iterations_used=pf.iterations_used, final_delta=pf.final_delta, converged=pf.converged,
    )
    shape = cmask.wall.shape
    lines = [Streamline(_rot_points(s.points, shape, back), s.arc_length, s.terminated_by, s.spacing)
             for s in lines]
    return MeasureResult(tmap.rot90(back), field_out, lines, timings)


def measure_detailed(mask: BinaryMask, cfg: SolverConfig = SolverConfig(), boundary_labels=None) -> MeasureResult:
    """Run the pipeline and keep the intermediate field, streamlines and stage timings."""
    if boundary_labels is None:
        return _run(mask, lambda m, regions, k: extract_boundaries(regions, cfg.psi_inner), cfg)
    boundary_labels = np.asarray(boundary_labels, dtype=np.uint8)
    return _run(mask,
                lambda m, regions, k: pinned_boundaries(m, np.rot90(boundary_labels, k), cfg.psi_inner),
                cfg, (boundary_labels,))


def measure(mask: BinaryMask, cfg: SolverConfig = SolverConfig()) -> ThicknessMap:
    """Dense thickness of a mask whose wall encloses at least one cavity."""
    return measure_detailed(mask, cfg).thickness


def measure_with_boundaries(mask: BinaryMask, boundary_labels, cfg: SolverConfig = SolverConfig()) -> ThicknessMap:
    """Thickness between user-labelled boundaries: ``boundary_labels`` is 0 none, 1 inner, 2 outer."""
    return measure_detailed(mask, cfg, boundary_labels).thickness
