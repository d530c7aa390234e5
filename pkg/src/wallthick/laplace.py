"""Potential solve on the wall region and the unit tangent field.

The solver works on the normalized potential ``u = (psi - psi_outer) /
(psi_inner - psi_outer)`` so every downstream quantity is independent of
the chosen ``psi_inner``; :attr:`PotentialField.psi` rescales on demand.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace

import numpy as np

from .errors import DomainError
from .grid import CAVITY, EXTERIOR, WALL, BoundaryConditions, GridGeometry, RegionLabels


@dataclass(frozen=True)
class SolverConfig:
    # convergence threshold on the per-sweep change, relative to psi_inner - psi_outer
    tolerance: float = 1e-5
    max_iterations: int = 20000
    omega: float = 1.9
    d_s: float = 0.1
    max_steps: int = 100000
    grad_epsilon: float = 1e-8
    fill_k: int = 8
    fill_lambda: float = 10.0
    # depth (px) inside the wall from which streamline ends are extrapolated to the borders
    border_probe: float = 1.5
    seed: int = 0
    psi_inner: float = 1.0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "seed":
                if int(v) != v or v < 0:
                    raise ValueError(f"seed must be a non-negative integer, got {v}")
                continue
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ValueError(f"{f.name} must be positive and finite, got {v!r}")
        if not 0.0 < self.omega < 2.0:
            raise ValueError(f"omega must lie in (0, 2), got {self.omega}")
        for name in ("max_iterations", "max_steps", "fill_k"):
            if int(getattr(self, name)) != getattr(self, name):
                raise ValueError(f"{name} must be an integer")

    @classmethod
    def from_dict(cls, data: dict) -> "SolverConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def with_(self, **changes) -> "SolverConfig":
        return replace(self, **{k: v for k, v in changes.items() if v is not None})


@dataclass(frozen=True, eq=False)
class PotentialField:
    geometry: GridGeometry
    unit: np.ndarray  # normalized potential on wall pixels, 0 elsewhere
    labels: np.ndarray  # region classes (EXTERIOR/CAVITY/WALL)
    inner: np.ndarray  # bool masks of the boundary pixel sets
    outer: np.ndarray
    psi_inner: float
    psi_outer: float
    mode: str
    iterations_used: int
    final_delta: float
    converged: bool

    @property
    def wall(self) -> np.ndarray:
        return self.labels == WALL

    @property
    def psi(self) -> np.ndarray:
        """Potential in user units; off-wall pixels carry their ghost value."""
        lo, hi = self.psi_outer, self.psi_inner
        out = lo + (hi - lo) * self.unit
        if self.mode == "ghost":
            out[self.labels == CAVITY] = hi
            out[self.labels == EXTERIOR] = lo
        else:
            out[~self.wall] = lo
        return out

    def ghost_padded(self) -> np.ndarray:
        """Normalized potential padded by one pixel, off-wall cells filled with ghost values."""
        u = np.pad(self.unit, 1)
        if self.mode == "ghost":
            lab = np.pad(self.labels, 1, constant_values=EXTERIOR)
            u[lab == CAVITY] = 1.0
            u[lab == EXTERIOR] = 0.0
        return u


@dataclass(frozen=True, eq=False)
class TangentField:
    geometry: GridGeometry
    vx: np.ndarray
    vy: np.ndarray
    defined: np.ndarray
    magnitude: np.ndarray  # |grad u| before normalization, per pixel

    def rot90(self, k: int = 1) -> "TangentField":
        # array rot90 turns the picture counterclockwise; vectors in (x right, y down) follow
        vx, vy = self.vx, self.vy
        for _ in range(k % 4):
            vx, vy = np.rot90(vy), -np.rot90(vx)
        return TangentField(self.geometry.rotated(k), vx, vy, np.rot90(self.defined, k),
                            np.rot90(self.magnitude, k))


def canonical_rotation(*grids: np.ndarray) -> int:
    """Rotation count k such that rot90(grids, k) is the canonical orientation.

    Picking the lexicographically smallest of the four orientations makes
    any order-dependent floating-point work exactly rotation-equivariant.
    """
    def key(k):
        rot = [np.ascontiguousarray(np.rot90(g, k)) for g in grids]
        return (rot[0].shape, b"".join(r.tobytes() for r in rot))

    return min(range(4), key=key)


def symmetry_group(*grids: np.ndarray) -> list[int]:
    """Quarter turns that map every grid onto itself (always contains 0)."""
    out = [0]
    for k in (1, 2, 3):
        if all(np.rot90(g, k).shape == g.shape and np.array_equal(np.rot90(g, k), g) for g in grids):
            out.append(k)
    return out


def symmetrize(arr: np.ndarray, group: list[int]) -> np.ndarray:
    """Mean of ``arr`` over the rotations in ``group``, exactly invariant under them.

    Summing each pixel's orbit in sorted order makes the result independent
    of which rotation the orbit was visited from.
    """
    if len(group) == 1:
        return arr
    stack = np.sort(np.stack([np.rot90(arr, k) for k in group]), axis=0)
    total = stack[0].copy()
    for layer in stack[1:]:
        total += layer
    return total / len(group)


def solve_laplace(regions: RegionLabels, bc: BoundaryConditions, cfg: SolverConfig = SolverConfig()) -> PotentialField:
    """Red-black SOR on the 5-point stencil until the per-sweep change drops below tolerance."""
    labels = regions.labels
    if not (labels == WALL).any():
        raise DomainError("wall region is empty")
    inner, outer = bc.masks(labels.shape)
    k = canonical_rotation(labels, inner.view(np.uint8), outer.view(np.uint8))
    grids = (np.rot90(labels, k), np.rot90(inner, k), np.rot90(outer, k))
    unit, iters, delta = _solve(*grids, bc.mode, cfg)
    # a symmetric input must give a symmetric field, which the sweep order alone does not
    unit = symmetrize(unit, symmetry_group(*grids))
    unit = np.ascontiguousarray(np.rot90(unit, -k))
    span = bc.psi_inner - bc.psi_outer
    return PotentialField(
        geometry=regions.geometry,
        unit=unit,
        labels=labels,
        inner=inner,
        outer=outer,
        psi_inner=bc.psi_inner,
        psi_outer=bc.psi_outer,
        mode=bc.mode,
        iterations_used=iters,
        final_delta=delta * span,
        converged=delta <= cfg.tolerance,
    )


def _solve(labels, inner, outer, mode, cfg):
    h, w = labels.shape
    wall = labels == WALL
    rows = np.flatnonzero(wall.any(axis=1))
    cols = np.flatnonzero(wall.any(axis=0))
    r0, r1, c0, c1 = rows[0], rows[-1] + 1, cols[0], cols[-1] + 1

    # working array: wall bounding box plus a one-pixel ghost ring
    lab = np.pad(labels, 1, constant_values=EXTERIOR)[r0:r1 + 2, c0:c1 + 2]
    pin_in = np.pad(inner, 1)[r0:r1 + 2, c0:c1 + 2]
    pin_out = np.pad(outer, 1)[r0:r1 + 2, c0:c1 + 2]
    wall_p = lab == WALL
    P = np.zeros(lab.shape)
    P[wall_p] = 0.5
    W = lab.shape[1]
    flat = P.reshape(-1)

    if mode == "ghost":
        P[lab == CAVITY] = 1.0
        free = wall_p
        count = None
    else:
        P[pin_in] = 1.0
        P[pin_out] = 0.0
        nb = np.zeros(lab.shape, dtype=np.int8)
        nb[1:-1, 1:-1] = (wall_p[:-2, 1:-1].astype(np.int8) + wall_p[2:, 1:-1] + wall_p[1:-1, :-2] + wall_p[1:-1, 2:])
        free = wall_p & ~pin_in & ~pin_out & (nb > 0)
        count = nb

    ii, jj = np.nonzero(free)
    parity = (ii + jj) % 2
    colors = []
    for c in (0, 1):
        sel = parity == c
        idx = ii[sel] * W + jj[sel]
        if count is None:
            colors.append((idx, None))
        else:
            colors.append((idx, count.reshape(-1)[idx].astype(float)))

    omega = cfg.omega
    keep = 1.0 - omega
    quarter = omega / 4.0
    delta = math.inf
    iters = 0
    if len(ii) == 0:
        delta = 0.0
    while iters < cfg.max_iterations and delta > cfg.tolerance:
        delta = 0.0
        for idx, cnt in colors:
            if len(idx) == 0:
                continue
            old = flat[idx]
            s = (flat[idx - W] + flat[idx + W]) + (flat[idx - 1] + flat[idx + 1])
            if cnt is None:
                new = keep * old + quarter * s
            else:
                new = keep * old + omega * (s / cnt)
            flat[idx] = new
            delta = max(delta, float(np.max(np.abs(new - old))))
        iters += 1

    unit = np.zeros((h, w))
    unit[r0:r1, c0:c1] = np.where(wall_p[1:-1, 1:-1], P[1:-1, 1:-1], 0.0)
    return unit, iters, delta


def residual(field: PotentialField, regions: RegionLabels | None = None) -> float:
    """Max |4 psi - sum of neighbours| over wall pixels whose four neighbours are all wall."""
    labels = field.labels if regions is None else regions.labels
    wall = labels == WALL
    interior = np.zeros_like(wall)
    interior[1:-1, 1:-1] = wall[1:-1, 1:-1] & wall[:-2, 1:-1] & wall[2:, 1:-1] & wall[1:-1, :-2] & wall[1:-1, 2:]
    if not interior.any():
        return 0.0
    psi = field.psi
    r = np.zeros_like(psi)
    r[1:-1, 1:-1] = 4 * psi[1:-1, 1:-1] - ((psi[:-2, 1:-1] + psi[2:, 1:-1]) + (psi[1:-1, :-2] + psi[1:-1, 2:]))
    return float(np.max(np.abs(r[interior])))


def tangent_field(field: PotentialField, regions: RegionLabels | None = None, cfg: SolverConfig = SolverConfig()) -> TangentField:
    """Unit vectors along the potential gradient (pointing toward the inner boundary).

    Central differences, reading ghost values for off-wall neighbours in ghost
    mode.  A neighbour falls back to a one-sided difference when it lies
    outside the image or, in pinned mode, off the wall.
    """
    labels = field.labels if regions is None else regions.labels
    h, w = labels.shape
    u = field.ghost_padded()
    inside = np.zeros((h + 2, w + 2), dtype=bool)
    if field.mode == "ghost":
        inside[1:-1, 1:-1] = True
    else:
        inside[1:-1, 1:-1] = labels == WALL
    c = u[1:-1, 1:-1]

    def axis_diff(lo_v, lo_ok, hi_v, hi_ok):
        both = lo_ok & hi_ok
        return np.where(both, (hi_v - lo_v) / 2.0,
                        np.where(hi_ok, hi_v - c, np.where(lo_ok, c - lo_v, 0.0)))

    gx = axis_diff(u[1:-1, :-2], inside[1:-1, :-2], u[1:-1, 2:], inside[1:-1, 2:])
    gy = axis_diff(u[:-2, 1:-1], inside[:-2, 1:-1], u[2:, 1:-1], inside[2:, 1:-1])
    mag = np.sqrt(gx * gx + gy * gy)
    defined = (labels == WALL) & (mag >= cfg.grad_epsilon)
    safe = np.where(defined, mag, 1.0)
    vx = np.where(defined, gx / safe, 0.0)
    vy = np.where(defined, gy / safe, 0.0)
    return TangentField(field.geometry, vx, vy, defined, np.where(labels == WALL, mag, 0.0))
