"""Synthetic annular shapes and ground-truth corpora.

Random annuli are deformed by a smooth elastic displacement field and a
piecewise-affine lattice warp.  Shapes that keep a single enclosed cavity
are measured; the rest are redrawn.  All randomness is keyed by (master
seed, item index, stage), so a corpus is reproducible byte for byte
regardless of generation order.
"""
from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from . import rng
from .errors import RecipeInfeasible, TransformDegenerate, WallThickError
from .grid import DEFAULT_SPACING, BinaryMask, GridGeometry, label_regions
from .imageio import write_pfm, write_pgm
from .laplace import SolverConfig
from .streamline import measure

MAX_ATTEMPTS = 16
MANIFEST_HEADER = ["id", "mask", "thickness", "max_thickness_mm", "seed"]


@dataclass(frozen=True)
class ShapeRecipe:
    image_size: int = 192
    spacing: float = DEFAULT_SPACING
    r_inner_range: tuple[float, float] = (6.0, 40.0)
    r_outer_minus_inner_range: tuple[float, float] = (2.0, 40.0)
    center_jitter: float = 8.0
    # elastic strength and lattice jitter are upper bounds; each item draws uniformly below them
    elastic_alpha: float = 150.0
    elastic_sigma: float = 8.0
    pwa_grid: int = 4
    pwa_jitter: float = 6.0
    elastic: bool = True
    piecewise_affine: bool = True

    def __post_init__(self):
        object.__setattr__(self, "r_inner_range", tuple(float(v) for v in self.r_inner_range))
        object.__setattr__(self, "r_outer_minus_inner_range",
                           tuple(float(v) for v in self.r_outer_minus_inner_range))
        for name in ("r_inner_range", "r_outer_minus_inner_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name} is empty: {lo} > {hi}")
        if self.r_inner_range[0] < 1:
            raise ValueError("r_inner_range minimum must be >= 1")
        if self.r_outer_minus_inner_range[0] <= 0:
            raise ValueError("wall width must be positive")
        if self.image_size < 3 or self.spacing <= 0:
            raise ValueError("image_size must be >= 3 and spacing positive")
        if self.center_jitter < 0 or self.elastic_alpha < 0 or self.pwa_jitter < 0:
            raise ValueError("jitter and alpha must be non-negative")
        if self.elastic_sigma <= 0 or self.pwa_grid < 1:
            raise ValueError("elastic_sigma must be positive and pwa_grid >= 1")

    @property
    def max_outer_radius(self) -> float:
        return self.r_inner_range[1] + self.r_outer_minus_inner_range[1]

    def check_feasible(self):
        limit = self.image_size / 2 - 1
        if self.max_outer_radius + self.center_jitter > limit:
            raise RecipeInfeasible(
                f"outer radius {self.max_outer_radius} + jitter {self.center_jitter} "
                f"does not fit a {self.image_size}px image (limit {limit})")

    @classmethod
    def from_dict(cls, data: dict) -> "ShapeRecipe":
        return cls(**data)

    def to_dict(self) -> dict:
        return asdict(self)


def annulus_mask(size: int, r_inner: float, r_outer: float, center=None, spacing: float = DEFAULT_SPACING) -> BinaryMask:
    """Pixels whose center lies at distance d with r_inner <= d < r_outer."""
    if center is None:
        center = ((size - 1) / 2, (size - 1) / 2)
    cx, cy = center
    y, x = np.mgrid[:size, :size]
    d2 = (x - cx) ** 2 + (y - cy) ** 2
    return BinaryMask.from_array((d2 >= r_inner ** 2) & (d2 < r_outer ** 2), spacing)


def gen_annulus(recipe: ShapeRecipe, seed: int) -> BinaryMask:
    recipe.check_feasible()
    g = rng.stream(seed, rng.ANNULUS)
    mid = (recipe.image_size - 1) / 2
    j = recipe.center_jitter
    cx, cy = mid + g.uniform(-j, j), mid + g.uniform(-j, j)
    r_in = g.uniform(*recipe.r_inner_range)
    width = g.uniform(*recipe.r_outer_minus_inner_range)
    return annulus_mask(recipe.image_size, r_in, r_in + width, (cx, cy), recipe.spacing)


def _sample_nearest(wall: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    h, w = wall.shape
    r = np.floor(rows + 0.5).astype(np.intp)
    c = np.floor(cols + 0.5).astype(np.intp)
    ok = (r >= 0) & (r < h) & (c >= 0) & (c < w)
    out = np.zeros(rows.shape, dtype=bool)
    out[ok] = wall[r[ok], c[ok]]
    return out


def elastic_transform(mask: BinaryMask, alpha: float, sigma: float, seed: int) -> BinaryMask:
    """Backward warp by Gaussian-smoothed uniform noise scaled by ``alpha``."""
    if alpha < 0 or sigma <= 0:
        raise ValueError("need alpha >= 0 and sigma > 0")
    if alpha == 0:
        return BinaryMask(mask.geometry, mask.wall.copy())
    g = rng.stream(seed, rng.ELASTIC)
    shape = mask.wall.shape
    dx = gaussian_filter(g.uniform(-1, 1, shape), sigma, truncate=3.0) * alpha
    dy = gaussian_filter(g.uniform(-1, 1, shape), sigma, truncate=3.0) * alpha
    y, x = np.mgrid[:shape[0], :shape[1]].astype(float)
    return BinaryMask(mask.geometry, _sample_nearest(mask.wall, y + dy, x + dx))


def _triangles(n: int):
    for i in range(n):
        for j in range(n):
            a, b, c, d = (i, j), (i, j + 1), (i + 1, j), (i + 1, j + 1)
            yield (a, b, d)
            yield (a, d, c)


def _signed_area(p):
    return 0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]))


def piecewise_affine(mask: BinaryMask, grid_n: int, jitter: float, seed: int) -> BinaryMask:
    """Warp by a jittered (grid_n+1)^2 control lattice, two triangles per cell.

    Draws that fold or collapse a destination triangle are redrawn from the
    next sub-seed, up to 16 times.
    """
    if grid_n < 1 or jitter < 0:
        raise ValueError("need grid_n >= 1 and jitter >= 0")
    h, w = mask.wall.shape
    ys = np.linspace(0, h - 1, grid_n + 1)
    xs = np.linspace(0, w - 1, grid_n + 1)
    src = np.stack(np.meshgrid(xs, ys), axis=-1)  # [i, j] -> (x, y)
    tris = list(_triangles(grid_n))

    for attempt in range(MAX_ATTEMPTS):
        g = rng.stream(seed, rng.PIECEWISE_AFFINE, attempt)
        dst = src + g.uniform(-jitter, jitter, src.shape) if jitter > 0 else src.copy()
        ok = True
        for t in tris:
            a_src = _signed_area([src[v] for v in t])
            a_dst = _signed_area([dst[v] for v in t])
            if a_dst * np.sign(a_src) <= 1e-9:
                ok = False
                break
        if ok:
            break
    else:
        raise TransformDegenerate(f"no non-degenerate lattice after {MAX_ATTEMPTS} draws (jitter={jitter})")

    out = np.zeros((h, w), dtype=bool)
    done = np.zeros((h, w), dtype=bool)
    for t in tris:
        D = np.array([dst[v] for v in t])
        S = np.array([src[v] for v in t])
        x0, y0 = np.maximum(np.floor(D.min(axis=0)).astype(int), 0)
        x1, y1 = np.minimum(np.ceil(D.max(axis=0)).astype(int), [w - 1, h - 1])
        if x1 < x0 or y1 < y0:
            continue
        py, px = np.mgrid[y0:y1 + 1, x0:x1 + 1].astype(float)
        T = np.array([[D[1, 0] - D[0, 0], D[2, 0] - D[0, 0]],
                      [D[1, 1] - D[0, 1], D[2, 1] - D[0, 1]]])
        l12 = np.linalg.solve(T, np.stack([px.ravel() - D[0, 0], py.ravel() - D[0, 1]]))
        l1, l2 = l12
        l0 = 1.0 - l1 - l2
        inside = (l0 >= -1e-9) & (l1 >= -1e-9) & (l2 >= -1e-9)
        sx = l0 * S[0, 0] + l1 * S[1, 0] + l2 * S[2, 0]
        sy = l0 * S[0, 1] + l1 * S[1, 1] + l2 * S[2, 1]
        rr = py.ravel().astype(np.intp)
        cc = px.ravel().astype(np.intp)
        take = inside & ~done[rr, cc]
        out[rr[take], cc[take]] = _sample_nearest(mask.wall, sy[take], sx[take])
        done[rr[take], cc[take]] = True
    return BinaryMask(mask.geometry, out)


# ----------------------------------------------------------------------------
# Gen-Data shapes

SPECIAL_DEFAULTS = {
    "square_annulus": {"image_size": 96, "side": 60, "width": 10, "spacing": DEFAULT_SPACING, "center_jitter": 0},
    "thick_cylinder": {"image_size": 96, "r_outer": 40, "width": 30, "spacing": DEFAULT_SPACING, "center_jitter": 0},
    "two_segments": {"image_size": 96, "width": 10, "length": 60, "gap": 30, "spacing": DEFAULT_SPACING},
}


def gen_special(kind: str, params: dict | None = None, seed: int = 0):
    """One of the Gen-Data stress shapes; returns ``(mask, boundary_labels or None)``.

    ``boundary_labels`` (0 none, 1 inner, 2 outer) is only produced for
    ``two_segments``, whose open arcs enclose no cavity.
    """
    if kind not in SPECIAL_DEFAULTS:
        raise ValueError(f"unknown special shape {kind!r}")
    p = dict(SPECIAL_DEFAULTS[kind])
    unknown = set(params or {}) - set(p)
    if unknown:
        raise ValueError(f"unknown parameters for {kind}: {sorted(unknown)}")
    p.update(params or {})
    n = int(p["image_size"])
    mid = (n - 1) / 2
    jit = float(p.get("center_jitter", 0))
    g = rng.stream(seed, rng.SPECIAL)
    cx, cy = mid + g.uniform(-jit, jit), mid + g.uniform(-jit, jit)

    if kind == "square_annulus":
        side, width = int(p["side"]), int(p["width"])
        if width < 1 or 2 * width >= side or side + 2 * jit + 2 > n:
            raise RecipeInfeasible(f"square ring side={side} width={width} does not fit {n}px")
        y0 = int(round(cy - side / 2 + 0.5))
        x0 = int(round(cx - side / 2 + 0.5))
        wall = np.zeros((n, n), dtype=bool)
        wall[y0:y0 + side, x0:x0 + side] = True
        wall[y0 + width:y0 + side - width, x0 + width:x0 + side - width] = False
        return BinaryMask.from_array(wall, p["spacing"]), None

    if kind == "thick_cylinder":
        r_out, width = float(p["r_outer"]), float(p["width"])
        if width < 0.6 * r_out or width >= r_out or r_out + jit > n / 2 - 1:
            raise RecipeInfeasible(f"thick cylinder r_outer={r_out} width={width} infeasible")
        return annulus_mask(n, r_out - width, r_out, (cx, cy), p["spacing"]), None

    width, length, gap = int(p["width"]), int(p["length"]), int(p["gap"])
    span = 2 * width + gap
    if width < 2 or length < 1 or gap < 1 or span + 2 > n or length + 2 > n:
        raise RecipeInfeasible(f"two segments width={width} length={length} gap={gap} do not fit {n}px")
    x0 = (n - span) // 2
    y0 = (n - length) // 2
    wall = np.zeros((n, n), dtype=bool)
    labels = np.zeros((n, n), dtype=np.uint8)
    left = slice(x0, x0 + width)
    right = slice(x0 + width + gap, x0 + span)
    rows = slice(y0, y0 + length)
    wall[rows, left] = True
    wall[rows, right] = True
    # faces toward the gap are inner, far faces outer
    labels[rows, x0 + width - 1] = 1
    labels[rows, x0 + width + gap] = 1
    labels[rows, x0] = 2
    labels[rows, x0 + span - 1] = 2
    return BinaryMask.from_array(wall, p["spacing"]), labels


# ----------------------------------------------------------------------------
# corpus generation

@dataclass(frozen=True)
class ManifestEntry:
    id: str
    mask_path: str
    thickness_path: str
    max_thickness_mm: float
    seed_used: int


@dataclass
class DatasetManifest:
    entries: list[ManifestEntry]
    recipe: ShapeRecipe = field(default_factory=ShapeRecipe)
    master_seed: int = 0
    attempts: int = 0

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(MANIFEST_HEADER)
            for e in self.entries:
                wr.writerow([e.id, e.mask_path, e.thickness_path, f"{e.max_thickness_mm:.6f}", e.seed_used])


def read_manifest(path) -> list[ManifestEntry]:
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd, None)
        if header != MANIFEST_HEADER:
            raise ValueError(f"{path}: expected header {','.join(MANIFEST_HEADER)}")
        return [ManifestEntry(r[0], r[1], r[2], float(r[3]), int(r[4])) for r in rd if r]


def is_single_cavity(mask: BinaryMask) -> bool:
    wall = mask.wall
    if wall[0].any() or wall[-1].any() or wall[:, 0].any() or wall[:, -1].any():
        return False
    return label_regions(mask).cavity_count == 1


def synth_item(recipe: ShapeRecipe, item_seed: int, attempt: int) -> BinaryMask:
    """Deformed annulus for one (item, attempt); topology is not checked here."""
    s = rng.derive_seed(item_seed, rng.RETRY, attempt)
    mask = gen_annulus(recipe, s)
    g = rng.stream(s, rng.SPECIAL)
    alpha = g.uniform(0, recipe.elastic_alpha)
    jitter = g.uniform(0, recipe.pwa_jitter)
    if recipe.elastic:
        mask = elastic_transform(mask, alpha, recipe.elastic_sigma, rng.derive_seed(s, rng.ELASTIC))
    if recipe.piecewise_affine:
        mask = piecewise_affine(mask, recipe.pwa_grid, jitter, rng.derive_seed(s, rng.PIECEWISE_AFFINE))
    return mask


def _make_item(args):
    index, recipe, master_seed, cfg, out_dir = args
    item_seed = rng.derive_seed(master_seed, index)
    for attempt in range(MAX_ATTEMPTS):
        try:
            mask = synth_item(recipe, item_seed, attempt)
        except TransformDegenerate:
            continue
        if not is_single_cavity(mask):
            continue
        try:
            tmap = measure(mask, cfg)
        except WallThickError:
            continue
        ident = f"{index:06d}"
        mask_rel = f"masks/{ident}.pgm"
        thick_rel = f"thickness/{ident}.pfm"
        thickness32 = tmap.thickness.astype(np.float32)
        _write(Path(out_dir) / mask_rel, write_pgm(mask.to_pgm_array()))
        _write(Path(out_dir) / thick_rel, write_pfm(thickness32))
        entry = ManifestEntry(ident, mask_rel, thick_rel, float(thickness32.max()),
                              rng.derive_seed(item_seed, rng.RETRY, attempt))
        return entry, attempt + 1
    raise RecipeInfeasible(f"item {index}: no valid shape after {MAX_ATTEMPTS} attempts")


def _write(path: Path, data: bytes):
    try:
        path.write_bytes(data)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc


def gen_dataset(count: int, recipe: ShapeRecipe, out_dir, master_seed: int = 0,
                cfg: SolverConfig = SolverConfig(), jobs: int = 1) -> DatasetManifest:
    """Generate ``count`` (mask, thickness) pairs under ``out_dir`` plus ``manifest.csv``."""
    if count < 0:
        raise ValueError("count must be >= 0")
    recipe.check_feasible()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if count:
        (out / "masks").mkdir(exist_ok=True)
        (out / "thickness").mkdir(exist_ok=True)
    tasks = [(i, recipe, master_seed, cfg, str(out)) for i in range(count)]
    if jobs > 1 and count > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_make_item, tasks, chunksize=max(1, count // (jobs * 8))))
    else:
        results = [_make_item(t) for t in tasks]
    attempts = sum(a for _, a in results)
    if attempts and (attempts - count) / attempts > 0.5:
        raise RecipeInfeasible(f"rejection rate {(attempts - count) / attempts:.0%} exceeds 50%")
    manifest = DatasetManifest([e for e, _ in results], recipe, master_seed, attempts)
    manifest.write_csv(out / "manifest.csv")
    return manifest


def load_recipe(path) -> ShapeRecipe:
    with open(path) as fh:
        return ShapeRecipe.from_dict(json.load(fh))


def default_jobs() -> int:
    return max(1, os.cpu_count() or 1)
