"""Pillars above an L0 face, their cut-points, increments, and the spine/base split."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Optional, Sequence

import numpy as np

from . import _kernels as K
from .interface import Interface, extract_interface, two_phase_config
from .ising import SpinConfig
from .lattice import Coord, Region, bounding_faces

ROOT: Coord = (1, 1, 1)
R0_DEFAULT = 100.0
RHO0_DEFAULT = 20.0


def _cells_faces(cells: frozenset) -> set:
    """Bounding faces of a cell set (faces between a member and a non-member)."""
    out = set()
    for c in cells:
        for f in bounding_faces(c):
            out.symmetric_difference_update((f,))
    return out


def _layers(cells: Iterable[Coord]) -> dict[int, list[Coord]]:
    out: dict[int, list[Coord]] = {}
    for c in cells:
        out.setdefault(c[2], []).append(c)
    return out


def _top_cell(cells: Iterable[Coord]) -> Coord:
    """Highest cell, lexicographically smallest among ties."""
    zmax = max(c[2] for c in cells)
    return min(c for c in cells if c[2] == zmax)


def _translate_cells(cells: Iterable[Coord], d: Coord) -> frozenset:
    return frozenset((c[0] + d[0], c[1] + d[1], c[2] + d[2]) for c in cells)


def _star_connected(cells: frozenset) -> bool:
    if not cells:
        return True
    seen = {next(iter(cells))}
    stack = list(seen)
    while stack:
        c = stack.pop()
        for dx in (-2, 0, 2):
            for dy in (-2, 0, 2):
                for dz in (-2, 0, 2):
                    d = (c[0] + dx, c[1] + dy, c[2] + dz)
                    if d in cells and d not in seen:
                        seen.add(d)
                        stack.append(d)
    return len(seen) == len(cells)


# -- increments --------------------------------------------------------------

@dataclass(frozen=True)
class Increment:
    """Rooted increment: bottom cut cell at (1/2,1/2,1/2), single top cell, no cut-height between."""

    cells: frozenset

    @cached_property
    def top(self) -> Coord:
        return _top_cell(self.cells)

    @cached_property
    def faces(self) -> frozenset:
        f = _cells_faces(self.cells)
        f.discard((1, 1, 0))
        f.discard((self.top[0], self.top[1], self.top[2] + 1))
        return frozenset(f)

    @property
    def excess(self) -> int:
        return len(self.faces) - 8

    @property
    def height(self) -> int:
        return (self.top[2] - ROOT[2]) // 2

    @property
    def is_trivial(self) -> bool:
        return self.cells == TRIVIAL.cells

    def observables(self) -> tuple[int, int, int, int, int, int]:
        """(f1, f2, f3, fV, fA, m): tip displacement, volume, area, excess area."""
        d = [(self.top[a] - ROOT[a]) // 2 for a in range(3)]
        nf = len(self.faces)
        return (d[0], d[1], d[2], len(self.cells) - 1, nf - 4, nf - 8)

    def validate(self):
        lay = _layers(self.cells)
        zs = sorted(lay)
        if lay.get(1) != [ROOT]:
            raise ValueError("increment must have the single bottom cell at the root")
        if len(zs) < 2 or len(lay[zs[-1]]) != 1:
            raise ValueError("increment must have a single top cell above the root")
        if zs != list(range(1, zs[-1] + 1, 2)):
            raise ValueError("increment layers must be contiguous")
        if any(len(lay[z]) == 1 for z in zs[1:-1]):
            raise ValueError("increment has an interior cut-height")
        if not _star_connected(self.cells):
            raise ValueError("increment is not *-connected")


@dataclass(frozen=True)
class Remainder:
    """Rooted remainder: single bottom cell at the root, anything above without cut-heights."""

    cells: frozenset

    @cached_property
    def top(self) -> Coord:
        return _top_cell(self.cells)

    @cached_property
    def faces(self) -> frozenset:
        f = _cells_faces(self.cells)
        f.discard((1, 1, 0))
        return frozenset(f)

    @property
    def excess(self) -> int:
        return len(self.faces) - 5

    @property
    def height(self) -> int:
        return (max(c[2] for c in self.cells) - ROOT[2]) // 2

    @property
    def is_trivial(self) -> bool:
        return self.cells == TRIVIAL_REM.cells

    def validate(self):
        lay = _layers(self.cells)
        zs = sorted(lay)
        if lay.get(1) != [ROOT]:
            raise ValueError("remainder must have the single bottom cell at the root")
        if zs != list(range(1, zs[-1] + 1, 2)):
            raise ValueError("remainder layers must be contiguous")
        if any(len(lay[z]) == 1 for z in zs[1:]):
            raise ValueError("remainder has a cut-height above its root")
        if not _star_connected(self.cells):
            raise ValueError("remainder is not *-connected")


TRIVIAL = Increment(frozenset({(1, 1, 1), (1, 1, 3)}))
TRIVIAL_REM = Remainder(frozenset({(1, 1, 1)}))


def cut_heights(cells: Iterable[Coord]) -> list[Coord]:
    lay = _layers(cells)
    return [lay[z][0] for z in sorted(lay) if len(lay[z]) == 1]


def decompose_cells(cells: frozenset, start: Optional[Coord] = None):
    """Cut-points, rooted increments and rooted remainder of a pillar (or spine) cell set.

    With `start`, only cells at or above that cut cell are used.
    """
    if start is not None:
        cells = frozenset(c for c in cells if c[2] >= start[2])
    cuts = cut_heights(cells)
    incs = []
    for a, b in zip(cuts, cuts[1:]):
        part = [c for c in cells if a[2] <= c[2] <= b[2]]
        incs.append(Increment(_translate_cells(part, (ROOT[0] - a[0], ROOT[1] - a[1], ROOT[2] - a[2]))))
    last = cuts[-1]
    part = [c for c in cells if c[2] >= last[2]]
    rem = Remainder(_translate_cells(part, (ROOT[0] - last[0], ROOT[1] - last[1], ROOT[2] - last[2])))
    return cuts, incs, rem


def recompose_spine(v: Coord, incs: Sequence[Increment], rem: Remainder) -> frozenset:
    """Stack rooted increments and the remainder starting from the cut cell v."""
    out = set()
    cur = v
    for X in incs:
        d = (cur[0] - ROOT[0], cur[1] - ROOT[1], cur[2] - ROOT[2])
        out |= _translate_cells(X.cells, d)
        cur = (X.top[0] + d[0], X.top[1] + d[1], X.top[2] + d[2])
    d = (cur[0] - ROOT[0], cur[1] - ROOT[1], cur[2] - ROOT[2])
    out |= _translate_cells(rem.cells, d)
    return frozenset(out)


def spine_cut_cells(v: Coord, incs: Sequence[Increment]) -> list[Coord]:
    out = [v]
    for X in incs:
        cur = out[-1]
        out.append((cur[0] + X.top[0] - ROOT[0], cur[1] + X.top[1] - ROOT[1], cur[2] + X.top[2] - ROOT[2]))
    return out


# -- pillars -----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Pillar:
    x: Coord
    cells: frozenset
    region: Region
    below_plus: bool = True  # spin of x - (0,0,1/2) in sigma(I)

    @cached_property
    def faces(self) -> frozenset:
        return frozenset(f for f in _cells_faces(self.cells) if f[2] > 0)

    @property
    def empty(self) -> bool:
        return not self.cells

    @property
    def height(self) -> int:
        """Top face height; 0 or -1 (meaning negative) for an empty pillar."""
        if self.cells:
            return (max(c[2] for c in self.cells) + 1) // 2
        return 0 if self.below_plus else -1

    @property
    def negative(self) -> bool:
        return self.empty and not self.below_plus

    @property
    def clipped(self) -> bool:
        return any(self.region.touches_boundary(c) for c in self.cells)

    @cached_property
    def decomposition(self):
        return decompose_cells(self.cells)

    def cut_points(self) -> list[Coord]:
        return self.decomposition[0] if self.cells else []

    def increments(self) -> tuple[list[Increment], Remainder, int]:
        cuts, incs, rem = self.decomposition
        return incs, rem, len(cuts) - 1

    @property
    def n_increments(self) -> int:
        return len(self.cut_points()) - 1 if self.cells else 0


def _pillar_from_sigma(S: np.ndarray, region: Region, x: Coord) -> Pillar:
    pi, pj, _ = region.cell_index((x[0], x[1], 1))
    k0 = region.k0
    mask = K.plus_cluster(S, pi + 1, pj + 1, k0 + 1, S.shape[2])
    o = region.origin
    idx = np.argwhere(mask)
    cells = frozenset((2 * (i - 1) + o[0], 2 * (j - 1) + o[1], 2 * (k - 1) + o[2]) for i, j, k in idx.tolist())
    return Pillar(x, cells, region, bool(S[pi + 1, pj + 1, k0] > 0))


def extract_pillar(I: Interface, x: Coord) -> Pillar:
    """Pillar above x computed on the bubble-free configuration of I."""
    r = I.region
    S = K.two_phase(I.mask(), r.shape, r.k0)
    return _pillar_from_sigma(S, r, x)


def pillar_of_config(cfg: SpinConfig, x: Coord) -> Pillar:
    return extract_pillar(extract_interface(cfg), x)


def cut_points(P: Pillar) -> list[Coord]:
    if P.empty:
        raise ValueError("empty pillar has no cut-points")
    return P.cut_points()


def increments(P: Pillar) -> tuple[list[Increment], Remainder, int]:
    if P.empty:
        raise ValueError("empty pillar has no increments")
    return P.increments()


def event_a_h(cfg: SpinConfig, x: Coord, h: int) -> bool:
    """x + (0,0,1/2) is *-connected to height h - 1/2 by plus cells of the raw configuration."""
    if h <= 0:
        return True
    r = cfg.region
    if h > r.z1:
        return False
    pi, pj, _ = r.cell_index((x[0], x[1], 1))
    ok, _ = K.event_a_h(cfg.padded(), pi + 1, pj + 1, r.k0, h)
    return bool(ok)


# -- spine and base ----------------------------------------------------------

@dataclass(frozen=True)
class SpineParams:
    R0: float = R0_DEFAULT
    r0: float = RHO0_DEFAULT


def face_path(a: Coord, b: Coord) -> list[Coord]:
    """Axis-ordered staircase of L0 faces from a to b (x first, then y)."""
    out = []
    sx = 2 if b[0] >= a[0] else -2
    for X in range(a[0], b[0] + sx, sx):
        out.append((X, a[1], 0))
    sy = 2 if b[1] >= a[1] else -2
    for Y in range(a[1] + sy, b[1] + sy, sy):
        out.append((b[0], Y, 0))
    return out


def _dist_to_path(u: tuple, path: list[Coord]) -> float:
    return min(math.hypot(u[0] - p[0], u[1] - p[1]) for p in path) / 2


def _cylinder_clipped(path: list[Coord], radius: float, region: Region) -> bool:
    for p in path:
        d = min(p[0] - 2 * region.x0, 2 * region.x1 - p[0], p[1] - 2 * region.y0, 2 * region.y1 - p[1]) / 2
        if d < radius:
            return True
    return False


@dataclass(frozen=True)
class SourcePoint:
    tau: Optional[int]  # 1-based index into the cut-points
    v: Optional[Coord]
    clipped: bool
    neighbour_height: float  # highest competing wall face in the cylinder at tau


def _competing_walls(I: Interface, P: Pillar) -> list[tuple[frozenset, float]]:
    """(projection, max height of faces outside the pillar) for every wall of I."""
    pf = P.faces
    out = []
    for w in I.walls:
        rest = [f[2] for f in w.faces if f not in pf]
        if rest:
            out.append((w.projection, max(rest) / 2))
    return out


def source_point(I: Interface, x: Coord, T: int, params: SpineParams = SpineParams(),
                 pillar: Optional[Pillar] = None) -> SourcePoint:
    """First cut-point above every non-pillar wall face projecting into the cylinder about the path to x."""
    P = extract_pillar(I, x) if pillar is None else pillar
    cuts = P.cut_points()
    if not cuts:
        raise ValueError("pillar has no cut-points")
    walls = _competing_walls(I, P)
    radius = params.R0 * T
    clipped = False
    for i, v in enumerate(cuts, start=1):
        path = face_path((v[0], v[1], 0), x)
        clipped |= _cylinder_clipped(path, radius, I.region)
        hmax = -math.inf
        for proj, h in walls:
            if h > hmax and any(_dist_to_path(u, path) <= radius for u in proj):
                hmax = h
        if v[2] / 2 > hmax:
            return SourcePoint(i, v, clipped or P.clipped, hmax)
    return SourcePoint(None, None, True, math.inf)


@dataclass(frozen=True, eq=False)
class SpineDecomposition:
    x: Coord
    T: int
    pillar: Pillar
    tau: int
    v: Coord
    increments: tuple  # from the source cut-point to the top of the pillar
    remainder: Remainder
    n_increments: int  # increments in the whole pillar
    clipped: bool

    @cached_property
    def spine_cells(self) -> frozenset:
        return frozenset(c for c in self.pillar.cells if c[2] >= self.v[2])

    @cached_property
    def base_cells(self) -> frozenset:
        return frozenset(c for c in self.pillar.cells if c[2] <= self.v[2])

    @cached_property
    def base_faces(self) -> frozenset:
        return frozenset(f for f in self.pillar.faces if f[2] <= self.v[2])

    @property
    def spine_excess(self) -> int:
        return self.remainder.excess + sum(X.excess for X in self.increments)

    @property
    def spine_height(self) -> int:
        return (2 * self.pillar.height - 1 - self.v[2]) // 2

    def base_diameter(self) -> float:
        """Largest distance between L0 faces lying under base cells."""
        pts = {(c[0], c[1]) for c in self.base_cells}
        if len(pts) < 2:
            return 0.0
        arr = np.array(sorted(pts), dtype=float) / 2
        d = arr[:, None, :] - arr[None, :, :]
        return float(np.sqrt((d ** 2).sum(-1)).max())


def base_spine_split(I: Interface, x: Coord, T: int, params: SpineParams = SpineParams(),
                     pillar: Optional[Pillar] = None) -> SpineDecomposition:
    P = extract_pillar(I, x) if pillar is None else pillar
    sp = source_point(I, x, T, params, P)
    if sp.tau is None:
        raise ValueError("no source point inside the region")
    cuts, incs, rem = P.decomposition
    return SpineDecomposition(x, T, P, sp.tau, sp.v, tuple(incs[sp.tau - 1:]), rem,
                              len(cuts) - 1, sp.clipped)


def is_tame(dec: SpineDecomposition, T: int, r0: float = RHO0_DEFAULT) -> bool:
    return dec.spine_excess <= r0 * T and dec.spine_height <= r0 * T


def truncation_cells(I: Interface, dec: SpineDecomposition) -> SpinConfig:
    """sigma(I) with the spine removed except its source cell."""
    cfg = two_phase_config(I)
    drop = {c: -1 for c in dec.spine_cells if c != dec.v}
    return cfg.with_spins(drop)


# -- export ------------------------------------------------------------------

def decomposition_to_json(dec: SpineDecomposition) -> str:
    doc = {
        "x": list(dec.x), "T": dec.T, "tau_spine": dec.tau, "source": list(dec.v),
        "height": dec.pillar.height, "n_increments": dec.n_increments,
        "clipped": dec.clipped,
        "increments": [{"cells": sorted(list(c) for c in X.cells),
                        "observables": list(X.observables())} for X in dec.increments],
        "remainder": {"cells": sorted(list(c) for c in dec.remainder.cells),
                      "excess": dec.remainder.excess},
    }
    return json.dumps(doc, sort_keys=True)


PILLAR_CSV_HEADER = ["x", "hgt", "n_increments", "tau_spine", "base_diameter", "sum_excess"]


def pillar_csv_row(dec: SpineDecomposition) -> list:
    return [f"{dec.x[0]}:{dec.x[1]}", dec.pillar.height, dec.n_increments, dec.tau,
            f"{dec.base_diameter():.6f}", dec.spine_excess]


def pillar_rows_to_csv(rows: Iterable[list]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(PILLAR_CSV_HEADER)
    w.writerows(rows)
    return buf.getvalue()
