"""Mask ingestion, region labeling and boundary extraction.

Pixel indices are ``(row, col)`` throughout; sub-pixel points elsewhere in
the package use ``(x, y) = (col, row)`` with pixel centers on integers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import BoundarySpec, NoInnerBoundary
from .imageio import read_pgm

DEFAULT_SPACING = 1.36

EXTERIOR = 0
CAVITY = 1
WALL = 2

_FOUR = ndimage.generate_binary_structure(2, 1)


@dataclass(frozen=True)
class GridGeometry:
    width: int
    height: int
    spacing: float = DEFAULT_SPACING

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError(f"grid must be at least 1x1, got {self.width}x{self.height}")
        if not (math.isfinite(self.spacing) and self.spacing > 0):
            raise ValueError(f"spacing must be positive and finite, got {self.spacing}")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    def rotated(self, k: int = 1) -> "GridGeometry":
        if k % 2:
            return GridGeometry(self.height, self.width, self.spacing)
        return self


@dataclass(frozen=True, eq=False)
class BinaryMask:
    geometry: GridGeometry
    wall: np.ndarray  # bool, shape (height, width)

    def __post_init__(self):
        wall = np.asarray(self.wall, dtype=bool)
        if wall.shape != self.geometry.shape:
            raise ValueError(f"label grid {wall.shape} does not match geometry {self.geometry.shape}")
        object.__setattr__(self, "wall", wall)

    @classmethod
    def from_array(cls, arr, spacing: float = DEFAULT_SPACING) -> "BinaryMask":
        arr = np.asarray(arr)
        h, w = arr.shape
        return cls(GridGeometry(w, h, spacing), arr != 0)

    @property
    def spacing(self) -> float:
        return self.geometry.spacing

    def rot90(self, k: int = 1) -> "BinaryMask":
        return BinaryMask(self.geometry.rotated(k), np.rot90(self.wall, k))

    def to_pgm_array(self) -> np.ndarray:
        return np.where(self.wall, 255, 0).astype(np.uint8)


@dataclass(frozen=True, eq=False)
class RegionLabels:
    geometry: GridGeometry
    labels: np.ndarray  # uint8 in {EXTERIOR, CAVITY, WALL}
    cavity_count: int

    @property
    def wall(self) -> np.ndarray:
        return self.labels == WALL

    @property
    def cavity(self) -> np.ndarray:
        return self.labels == CAVITY

    @property
    def exterior(self) -> np.ndarray:
        return self.labels == EXTERIOR


@dataclass(frozen=True, eq=False)
class BoundaryConditions:
    """Dirichlet data for the potential solve.

    In ``ghost`` mode (automatic) ``inner``/``outer`` are the wall pixels that
    face the cavity/exterior, and the fixed potentials live on the
    non-wall neighbours.  In ``pinned`` mode (user-drawn boundaries) the
    listed wall pixels themselves are held at the boundary potentials and
    non-wall neighbours are treated as insulating.
    """

    inner: np.ndarray  # (n, 2) int rows/cols, row-major order
    outer: np.ndarray
    psi_inner: float = 1.0
    psi_outer: float = 0.0
    mode: str = "ghost"

    def __post_init__(self):
        if not self.psi_inner > self.psi_outer:
            raise ValueError("psi_inner must exceed psi_outer")
        if self.mode not in ("ghost", "pinned"):
            raise ValueError(f"unknown boundary mode {self.mode!r}")

    def masks(self, shape: tuple[int, int]) -> tuple[np.ndarray, np.ndarray]:
        inner = np.zeros(shape, dtype=bool)
        outer = np.zeros(shape, dtype=bool)
        if len(self.inner):
            inner[self.inner[:, 0], self.inner[:, 1]] = True
        if len(self.outer):
            outer[self.outer[:, 0], self.outer[:, 1]] = True
        return inner, outer


def load_mask(data: bytes, spacing: float = DEFAULT_SPACING) -> BinaryMask:
    """Parse PGM bytes; any nonzero pixel is wall."""
    return BinaryMask.from_array(read_pgm(data), spacing)


def label_regions(mask: BinaryMask) -> RegionLabels:
    background = ~mask.wall
    comp, n = ndimage.label(background, structure=_FOUR)
    border_ids = np.unique(np.concatenate([comp[0], comp[-1], comp[:, 0], comp[:, -1]]))
    border_ids = border_ids[border_ids > 0]
    is_exterior = np.zeros(n + 1, dtype=bool)
    is_exterior[border_ids] = True

    labels = np.full(mask.wall.shape, CAVITY, dtype=np.uint8)
    labels[mask.wall] = WALL
    labels[background & is_exterior[comp]] = EXTERIOR
    return RegionLabels(mask.geometry, labels, int(n - len(border_ids)))


def _touches(region: np.ndarray) -> np.ndarray:
    """Pixels with at least one 4-neighbour in ``region`` (no wraparound)."""
    out = np.zeros_like(region)
    out[1:, :] |= region[:-1, :]
    out[:-1, :] |= region[1:, :]
    out[:, 1:] |= region[:, :-1]
    out[:, :-1] |= region[:, 1:]
    return out


def extract_boundaries(regions: RegionLabels, psi_inner: float = 1.0) -> BoundaryConditions:
    if regions.cavity_count == 0:
        raise NoInnerBoundary("mask has no enclosed cavity; supply manual inner/outer boundaries")
    wall = regions.wall
    inner = wall & _touches(regions.cavity)
    # pixels beyond the image edge count as exterior
    edge = np.zeros_like(wall)
    edge[0, :] = edge[-1, :] = edge[:, 0] = edge[:, -1] = True
    outer = wall & (_touches(regions.exterior) | edge)
    return BoundaryConditions(np.argwhere(inner), np.argwhere(outer), psi_inner, 0.0, "ghost")


def pinned_boundaries(mask: BinaryMask, boundary_labels: np.ndarray, psi_inner: float = 1.0) -> BoundaryConditions:
    """Build pinned boundary conditions from a per-pixel {0 none, 1 inner, 2 outer} grid."""
    boundary_labels = np.asarray(boundary_labels)
    if boundary_labels.shape != mask.wall.shape:
        raise BoundarySpec(f"boundary grid {boundary_labels.shape} does not match mask {mask.wall.shape}")
    inner = boundary_labels == 1
    outer = boundary_labels == 2
    if not inner.any():
        raise BoundarySpec("inner boundary set is empty")
    if not outer.any():
        raise BoundarySpec("outer boundary set is empty")
    if (inner & ~mask.wall).any() or (outer & ~mask.wall).any():
        raise BoundarySpec("boundary pixels must lie on the wall")
    return BoundaryConditions(np.argwhere(inner), np.argwhere(outer), psi_inner, 0.0, "pinned")


def normalize_grid(mask: BinaryMask, target_spacing: float = DEFAULT_SPACING, target_size: int = 192) -> BinaryMask:
    """Nearest-neighbour resample to ``target_spacing`` then center crop/pad to a square."""
    if not target_spacing > 0:
        raise ValueError("target_spacing must be positive")
    if target_size < 1:
        raise ValueError("target_size must be >= 1")
    factor = mask.spacing / target_spacing
    wall = mask.wall
    if factor != 1.0:
        h, w = wall.shape
        nh, nw = max(1, round(h * factor)), max(1, round(w * factor))
        rows = np.minimum(((np.arange(nh) + 0.5) / factor).astype(int), h - 1)
        cols = np.minimum(((np.arange(nw) + 0.5) / factor).astype(int), w - 1)
        wall = wall[np.ix_(rows, cols)]

    wall = _fit_axis(wall, target_size, 0)
    wall = _fit_axis(wall, target_size, 1)
    return BinaryMask(GridGeometry(target_size, target_size, target_spacing), wall)


def _fit_axis(a: np.ndarray, size: int, axis: int) -> np.ndarray:
    n = a.shape[axis]
    if n > size:
        start = (n - size) // 2
        return np.take(a, np.arange(start, start + size), axis=axis)
    if n < size:
        before = (size - n) // 2
        pad = [(0, 0), (0, 0)]
        pad[axis] = (before, size - n - before)
        return np.pad(a, pad)
    return a
