"""17-segment regional aggregation and bullseye rendering.

Angles are measured in the image plane about the cavity centroid, with 0
degrees pointing right (+col) and 90 degrees pointing up (-row), so a
counterclockwise sense matches the picture as displayed.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ShapeError
from .grid import BinaryMask, label_regions
from .streamline import ThicknessMap

LEVELS = ("basal", "mid", "apical", "apex")
SECTORS = {"basal": 6, "mid": 6, "apical": 4, "apex": 1}
FIRST_ID = {"basal": 1, "mid": 7, "apical": 13, "apex": 17}
SENSES = {"ccw": "counterclockwise", "counterclockwise": "counterclockwise",
          "cw": "clockwise", "clockwise": "clockwise"}


@dataclass(frozen=True)
class SegmentReport:
    level: str  # one of LEVELS, or "full" for an assembled 17-segment report
    segment_ids: tuple[int, ...]
    mean_thickness: tuple[float, ...]
    reference_angle: float = 90.0
    rotation_sense: str = "counterclockwise"
    pixel_counts: tuple[int, ...] = ()

    def __post_init__(self):
        if len(self.segment_ids) != len(self.mean_thickness):
            raise ShapeError("segment ids and means differ in length")
        if self.rotation_sense not in ("clockwise", "counterclockwise"):
            raise ValueError(f"unknown rotation sense {self.rotation_sense!r}")

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["segment_id", "mean_thickness_mm"])
        for i, v in zip(self.segment_ids, self.mean_thickness):
            wr.writerow([i, f"{v:.6f}"])
        return buf.getvalue()


def _center(wall: np.ndarray) -> tuple[float, float]:
    regions = label_regions(BinaryMask.from_array(wall))
    pts = np.argwhere(regions.cavity)
    if len(pts) == 0:
        pts = np.argwhere(wall)
    cy, cx = pts.mean(axis=0)
    return float(cx), float(cy)


def pixel_angles(shape, center, reference_angle: float = 90.0, sense: str = "ccw") -> np.ndarray:
    """Angle of every pixel relative to ``reference_angle`` in ``sense``, in [0, 360)."""
    cx, cy = center
    rows, cols = np.indices(shape, dtype=float)
    theta = np.degrees(np.arctan2(-(rows - cy), cols - cx))
    rel = theta - reference_angle if SENSES[sense] == "counterclockwise" else reference_angle - theta
    # rounding keeps pixels on a sector edge from flickering between neighbours
    return np.mod(np.round(rel, 9), 360.0)


def segment_slice(tmap: ThicknessMap, level: str, reference_angle: float = 90.0, sense: str = "ccw") -> SegmentReport:
    """Mean thickness per sector of one short-axis slice.

    Sector 0 starts at ``reference_angle`` and the rest follow in ``sense``.
    Sectors with no wall pixels report 0.
    """
    if level not in ("basal", "mid", "apical"):
        raise ValueError(f"level must be basal, mid or apical, got {level!r}")
    if sense not in SENSES:
        raise ValueError(f"sense must be cw or ccw, got {sense!r}")
    wall = tmap.wall
    if not wall.any():
        raise DomainError("thickness map has no wall pixels")
    n = SECTORS[level]
    rel = pixel_angles(wall.shape, _center(wall), reference_angle, sense)
    sector = np.minimum((rel[wall] / (360.0 / n)).astype(int), n - 1)
    values = tmap.thickness[wall].astype(float)
    counts = np.bincount(sector, minlength=n)
    sums = np.bincount(sector, weights=values, minlength=n)
    means = np.divide(sums, counts, out=np.zeros(n), where=counts > 0)
    first = FIRST_ID[level]
    return SegmentReport(level, tuple(range(first, first + n)), tuple(float(v) for v in means),
                         float(reference_angle), SENSES[sense], tuple(int(c) for c in counts))


def assemble_17(basal: SegmentReport, mid: SegmentReport, apical: SegmentReport, apex_value: float) -> SegmentReport:
    parts = {"basal": basal, "mid": mid, "apical": apical}
    for level, rep in parts.items():
        if rep is None:
            raise ShapeError(f"missing {level} report")
        if rep.level != level or len(rep.mean_thickness) != SECTORS[level]:
            raise ShapeError(f"{level} report must carry {SECTORS[level]} {level} segments, "
                             f"got {len(rep.mean_thickness)} ({rep.level})")
    if not (math.isfinite(apex_value) and apex_value >= 0):
        raise ValueError("apex value must be a non-negative number")
    means = basal.mean_thickness + mid.mean_thickness + apical.mean_thickness + (float(apex_value),)
    return SegmentReport("full", tuple(range(1, 18)), means, basal.reference_angle, basal.rotation_sense)


# ----------------------------------------------------------------------------
# bullseye

_SIZE = 400
_RINGS = {"apex": (0.0, 45.0), "apical": (45.0, 95.0), "mid": (95.0, 145.0), "basal": (145.0, 195.0)}


def ramp_color(value: float, lo: float, hi: float) -> str:
    """Blue-to-red 256-step ramp, clamped to [lo, hi]."""
    t = min(max((value - lo) / (hi - lo), 0.0), 1.0)
    i = int(round(t * 255))
    return f"rgb({i},0,{255 - i})"


def _xy(r: float, deg: float) -> tuple[float, float]:
    c = _SIZE / 2
    a = math.radians(deg)
    return c + r * math.cos(a), c - r * math.sin(a)


def _f(v: float) -> str:
    s = f"{v:.3f}".rstrip("0").rstrip(".")
    return "0" if s == "-0" else s


def _sector_path(r0: float, r1: float, a0: float, a1: float) -> str:
    # a0 -> a1 counterclockwise on screen; SVG sweep-flag 0 is counterclockwise with y down
    x0, y0 = _xy(r1, a0)
    x1, y1 = _xy(r1, a1)
    x2, y2 = _xy(r0, a1)
    x3, y3 = _xy(r0, a0)
    large = 1 if (a1 - a0) > 180 else 0
    return (f"M{_f(x0)},{_f(y0)} A{_f(r1)},{_f(r1)} 0 {large} 0 {_f(x1)},{_f(y1)} "
            f"L{_f(x2)},{_f(y2)} A{_f(r0)},{_f(r0)} 0 {large} 1 {_f(x3)},{_f(y3)} Z")


def bullseye_svg(report: SegmentReport, color_range: tuple[float, float]) -> str:
    """Render a full 17-segment report as an SVG 1.1 bullseye plot."""
    lo, hi = float(color_range[0]), float(color_range[1])
    if not lo < hi:
        raise ValueError(f"color range needs lo < hi, got ({lo}, {hi})")
    if len(report.mean_thickness) != 17:
        raise ShapeError(f"bullseye needs 17 segments, got {len(report.mean_thickness)}")
    ccw = report.rotation_sense == "counterclockwise"
    shapes, labels = [], []
    c = _SIZE / 2
    for level in ("basal", "mid", "apical"):
        n = SECTORS[level]
        r0, r1 = _RINGS[level]
        step = 360.0 / n
        for k in range(n):
            sid = FIRST_ID[level] + k
            value = report.mean_thickness[sid - 1]
            start = report.reference_angle + (k * step if ccw else -(k + 1) * step)
            d = _sector_path(r0, r1, start, start + step)
            shapes.append(f'<path id="seg{sid}" d="{d}" fill="{ramp_color(value, lo, hi)}" '
                          f'stroke="white" stroke-width="1.5"/>')
            tx, ty = _xy((r0 + r1) / 2, start + step / 2)
            labels.append(f'<text x="{_f(tx)}" y="{_f(ty)}">{value:.1f}</text>')
    apex = report.mean_thickness[16]
    shapes.append(f'<circle id="seg17" cx="{_f(c)}" cy="{_f(c)}" r="{_f(_RINGS["apex"][1])}" '
                  f'fill="{ramp_color(apex, lo, hi)}" stroke="white" stroke-width="1.5"/>')
    labels.append(f'<text x="{_f(c)}" y="{_f(c)}">{apex:.1f}</text>')
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{_SIZE}" height="{_SIZE}" '
        f'viewBox="0 0 {_SIZE} {_SIZE}">',
        '<g id="segments">', *shapes, '</g>',
        '<g id="labels" font-family="sans-serif" font-size="13" text-anchor="middle" '
        'dominant-baseline="central" fill="white">', *labels, '</g>',
        '</svg>',
    ]
    return "\n".join(lines) + "\n"
