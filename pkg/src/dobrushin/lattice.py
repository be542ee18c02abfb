"""Cells, faces and edges of Z^3 in doubled integer coordinates.

Every element is keyed by twice its midpoint, so a cell is a triple of odd
integers, a face has exactly one even component, an edge two, a vertex three.
The plane L0 is the set of elements with doubled height 0.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from typing import Iterator, Tuple

import numpy as np

Coord = Tuple[int, int, int]


def n_even(p: Coord) -> int:
    return sum(1 for c in p if c % 2 == 0)


def is_cell(p: Coord) -> bool:
    return n_even(p) == 0


def is_face(p: Coord) -> bool:
    return n_even(p) == 1


def is_edge(p: Coord) -> bool:
    return n_even(p) == 2


def kind(p: Coord) -> str:
    return ("cell", "face", "edge", "vertex")[n_even(p)]


def face_axis(f: Coord) -> int:
    """Axis normal to the face, i.e. the index of its even component."""
    for a in range(3):
        if f[a] % 2 == 0:
            return a
    raise ValueError(f"{f} is not a face")


def is_horizontal(f: Coord) -> bool:
    return f[2] % 2 == 0 and f[0] % 2 == 1 and f[1] % 2 == 1


_NBR6 = [(2, 0, 0), (-2, 0, 0), (0, 2, 0), (0, -2, 0), (0, 0, 2), (0, 0, -2)]
_NBR26 = [d for d in product((-2, 0, 2), repeat=3) if d != (0, 0, 0)]


def neighbors(c: Coord, star: bool = False) -> list[Coord]:
    """Adjacent cells (6) or *-adjacent cells (26, sharing a vertex)."""
    offs = _NBR26 if star else _NBR6
    return [(c[0] + d[0], c[1] + d[1], c[2] + d[2]) for d in offs]


def project(p: Coord) -> Coord:
    """Vertical projection onto L0: horizontal faces go to faces, vertical faces to edges."""
    return (p[0], p[1], 0)


def bounding_faces(c: Coord) -> list[Coord]:
    out = []
    for a in range(3):
        for s in (-1, 1):
            f = list(c)
            f[a] += s
            out.append(tuple(f))
    return out


def face_cells(f: Coord) -> tuple[Coord, Coord]:
    """The two cells separated by a face, lower one first."""
    a = face_axis(f)
    lo, hi = list(f), list(f)
    lo[a] -= 1
    hi[a] += 1
    return tuple(lo), tuple(hi)


def face_edges(f: Coord) -> list[Coord]:
    a = face_axis(f)
    out = []
    for b in range(3):
        if b == a:
            continue
        for s in (-1, 1):
            e = list(f)
            e[b] += s
            out.append(tuple(e))
    return out


def face_vertices(f: Coord) -> list[Coord]:
    a = face_axis(f)
    b, c = [i for i in range(3) if i != a]
    out = []
    for sb, sc in product((-1, 1), repeat=2):
        v = list(f)
        v[b] += sb
        v[c] += sc
        out.append(tuple(v))
    return out


def _star_face_offsets(a: int) -> list[Coord]:
    # faces sharing a vertex with a face normal to axis a; see parity rule in
    # star_adjacent_faces
    offs = []
    for d in product(range(-2, 3), repeat=3):
        if d == (0, 0, 0):
            continue
        ok = True
        evens = 0
        for ax in range(3):
            f_even = ax == a
            g_even = (d[ax] % 2 == 0) == f_even
            evens += g_even
            if f_even and g_even:
                ok &= d[ax] == 0
            elif f_even != g_even:
                ok &= abs(d[ax]) == 1
            else:
                ok &= d[ax] in (-2, 0, 2)
        if ok and evens == 1:
            offs.append(d)
    return offs


STAR_FACE_OFFSETS = tuple(tuple(_star_face_offsets(a)) for a in range(3))


def star_adjacent_faces(f: Coord) -> list[Coord]:
    """All faces sharing at least one vertex with f (32 of them).

    Per axis: both even means equal, mixed parity means differ by 1, both odd
    means differ by 0 or 2.
    """
    return [(f[0] + d[0], f[1] + d[1], f[2] + d[2]) for d in STAR_FACE_OFFSETS[face_axis(f)]]


def shift(p: Coord, dz: int) -> Coord:
    """Translate vertically by dz lattice units."""
    return (p[0], p[1], p[2] + 2 * dz)


def translate(p: Coord, d: Coord) -> Coord:
    """Translate by a doubled-coordinate offset."""
    return (p[0] + d[0], p[1] + d[1], p[2] + d[2])


def midpoint_distance(u: Coord, v: Coord) -> float:
    return 0.5 * float(np.sqrt(sum((a - b) ** 2 for a, b in zip(u, v))))


@dataclass(frozen=True)
class Region:
    """Box of cells with integer vertex bounds [x0,x1]x[y0,y1]x[z0,z1].

    ``Region.box(n, m, h)`` is the centred box with 2n x 2m x 2h cells. The
    vertical range must straddle height 0.
    """

    x0: int
    x1: int
    y0: int
    y1: int
    z0: int
    z1: int

    def __post_init__(self):
        if not (self.x0 < self.x1 and self.y0 < self.y1 and self.z0 < 0 < self.z1):
            raise ValueError(f"bad region bounds {self}")

    @classmethod
    def box(cls, n: int, m: int, h: int) -> "Region":
        return cls(-n, n, -m, m, -h, h)

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.x1 - self.x0, self.y1 - self.y0, self.z1 - self.z0)

    @property
    def n_cells(self) -> int:
        a, b, c = self.shape
        return a * b * c

    @property
    def nmh(self) -> tuple[int, int, int]:
        if self.x0 != -self.x1 or self.y0 != -self.y1 or self.z0 != -self.z1:
            raise ValueError("region is not centred")
        return (self.x1, self.y1, self.z1)

    @property
    def origin(self) -> Coord:
        """Doubled-coordinate offset: cell index (i,j,k) has coords 2*(i,j,k) + origin."""
        return (2 * self.x0 + 1, 2 * self.y0 + 1, 2 * self.z0 + 1)

    @property
    def k0(self) -> int:
        """Index of the lowest cell layer above L0."""
        return -self.z0

    def cell_index(self, c: Coord) -> tuple[int, int, int]:
        o = self.origin
        return ((c[0] - o[0]) // 2, (c[1] - o[1]) // 2, (c[2] - o[2]) // 2)

    def cell_coord(self, i: int, j: int, k: int) -> Coord:
        o = self.origin
        return (2 * i + o[0], 2 * j + o[1], 2 * k + o[2])

    def contains_cell(self, c: Coord) -> bool:
        return (2 * self.x0 < c[0] < 2 * self.x1 and 2 * self.y0 < c[1] < 2 * self.y1
                and 2 * self.z0 < c[2] < 2 * self.z1)

    def contains_face(self, f: Coord) -> bool:
        """Membership in F(Lambda): all bounding vertices inside the closed box."""
        return (2 * self.x0 <= f[0] <= 2 * self.x1 and 2 * self.y0 <= f[1] <= 2 * self.y1
                and 2 * self.z0 <= f[2] <= 2 * self.z1)

    def contains_l0(self, u: Coord) -> bool:
        return 2 * self.x0 <= u[0] <= 2 * self.x1 and 2 * self.y0 <= u[1] <= 2 * self.y1

    def on_boundary(self, f: Coord) -> bool:
        return (f[0] in (2 * self.x0, 2 * self.x1) or f[1] in (2 * self.y0, 2 * self.y1)
                or f[2] in (2 * self.z0, 2 * self.z1))

    def touches_boundary(self, c: Coord) -> bool:
        """Cell lies in the outermost layer of the box."""
        return (c[0] - 1 == 2 * self.x0 or c[0] + 1 == 2 * self.x1
                or c[1] - 1 == 2 * self.y0 or c[1] + 1 == 2 * self.y1
                or c[2] - 1 == 2 * self.z0 or c[2] + 1 == 2 * self.z1)

    def cells(self) -> Iterator[Coord]:
        """Cells in lexicographic doubled-coordinate order."""
        a, b, c = self.shape
        for i in range(a):
            for j in range(b):
                for k in range(c):
                    yield self.cell_coord(i, j, k)

    def l0_faces(self) -> list[Coord]:
        return [(x, y, 0) for x in range(2 * self.x0 + 1, 2 * self.x1, 2)
                for y in range(2 * self.y0 + 1, 2 * self.y1, 2)]

    def flat_faces(self) -> frozenset:
        return frozenset(self.l0_faces())

    def center_face(self) -> Coord:
        """The L0 face at the centre, or just above-right of it for even widths."""
        cx = self.x0 + self.x1
        cy = self.y0 + self.y1
        return (cx + 1 - cx % 2, cy + 1 - cy % 2, 0)

    def to_dict(self) -> dict:
        return {"x0": self.x0, "x1": self.x1, "y0": self.y0, "y1": self.y1,
                "z0": self.z0, "z1": self.z1}
