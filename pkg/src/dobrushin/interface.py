"""Interfaces, walls and ceilings, and the standard wall representation."""
from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Optional

import numpy as np
from scipy import ndimage

from . import _kernels as K
from .ising import SpinConfig
from .lattice import Coord, Region, is_horizontal, star_adjacent_faces

Elem2 = tuple  # (X, Y) doubled coordinates of an L0 face or edge


class InadmissibleError(ValueError):
    pass


# -- extraction --------------------------------------------------------------

def _grid_offset(region: Region) -> Coord:
    return (2 * region.x0 - 2, 2 * region.y0 - 2, 2 * region.z0 - 2)


def _mask_to_faces(M: np.ndarray, region: Region) -> frozenset:
    o = _grid_offset(region)
    idx = np.argwhere(M)
    idx += np.array(o)
    return frozenset(map(tuple, idx.tolist()))


def _faces_to_mask(faces: Iterable[Coord], region: Region) -> np.ndarray:
    nx, ny, nz = region.shape
    M = np.zeros((2 * nx + 5, 2 * ny + 5, 2 * nz + 5), dtype=np.uint8)
    o = _grid_offset(region)
    for f in faces:
        M[f[0] - o[0], f[1] - o[1], f[2] - o[2]] = 1
    return M


@dataclass(frozen=True, eq=False)
class Interface:
    region: Region
    faces: frozenset

    def __eq__(self, other):
        return isinstance(other, Interface) and self.region == other.region and self.faces == other.faces

    def __hash__(self):
        return hash((self.region, self.faces))

    def __len__(self):
        return len(self.faces)

    @property
    def size(self) -> int:
        return len(self.faces)

    @classmethod
    def flat(cls, region: Region) -> "Interface":
        return cls(region, region.flat_faces())

    def mask(self) -> np.ndarray:
        return _faces_to_mask(self.faces, self.region)

    @cached_property
    def classification(self) -> tuple[list["Wall"], list["Ceiling"]]:
        return classify(self)

    @property
    def walls(self) -> list["Wall"]:
        return self.classification[0]

    @property
    def ceilings(self) -> list["Ceiling"]:
        return self.classification[1]

    def max_height(self) -> float:
        return max(f[2] for f in self.faces) / 2


def extract_interface(cfg: SpinConfig) -> Interface:
    """Separating faces *-connected to the plane L0 outside the box, restricted to the box."""
    M = K.interface_grid(cfg.padded(), cfg.region.k0)
    return Interface(cfg.region, _mask_to_faces(M, cfg.region))


def separating_faces(cfg: SpinConfig) -> frozenset:
    """All faces of the box between disagreeing cells (including the boundary extension)."""
    P = cfg.padded()
    G = K.separating_grid(P)
    gx, gy, gz = G.shape
    G[:2] = 0
    G[gx - 2:] = 0
    G[:, :2] = 0
    G[:, gy - 2:] = 0
    G[:, :, :2] = 0
    G[:, :, gz - 2:] = 0
    return _mask_to_faces(G, cfg.region)


def two_phase_config(I: Interface, beta: float = 1.0) -> SpinConfig:
    """The bubble-free configuration whose interface is I."""
    r = I.region
    S = K.two_phase(I.mask(), r.shape, r.k0)
    return SpinConfig(r, S[1:-1, 1:-1, 1:-1].copy(), beta)


def is_valid_interface(I: Interface) -> bool:
    return extract_interface(two_phase_config(I)) == I


# -- 2D shadows --------------------------------------------------------------

class Shadow:
    """Components of the complement of a projected set in L0.

    Works on the doubled 2D grid (faces odd/odd, edges odd/even, vertices
    blocked), so connectivity is face-to-edge as for subsets of the plane.
    Labels: -1 in the set, 0 exterior, k >= 1 the k-th finite component.
    """

    PAD = 3

    def __init__(self, elems: Iterable[Elem2]):
        elems = list(elems)
        xs = [e[0] for e in elems]
        ys = [e[1] for e in elems]
        self.lo = (min(xs) - self.PAD, min(ys) - self.PAD)
        shape = (max(xs) + self.PAD - self.lo[0] + 1, max(ys) + self.PAD - self.lo[1] + 1)
        free = np.ones(shape, dtype=bool)
        gx = np.arange(shape[0]) + self.lo[0]
        gy = np.arange(shape[1]) + self.lo[1]
        free[np.ix_(gx % 2 == 0, gy % 2 == 0)] = False
        for e in elems:
            free[e[0] - self.lo[0], e[1] - self.lo[1]] = False
        lab, n = ndimage.label(free)
        border = set(np.unique(np.concatenate([lab[0], lab[-1], lab[:, 0], lab[:, -1]]))) - {0}
        remap = np.zeros(n + 1, dtype=np.int64)
        k = 0
        for old in range(1, n + 1):
            if old in border:
                remap[old] = 0
            else:
                k += 1
                remap[old] = k
        out = remap[lab]
        out[~free] = -1
        out[np.ix_(gx % 2 == 0, gy % 2 == 0)] = -2  # vertices, unused
        self.labels = out
        self.n_components = k
        self.elems = frozenset(elems)

    def label(self, u: Elem2) -> int:
        i, j = u[0] - self.lo[0], u[1] - self.lo[1]
        if 0 <= i < self.labels.shape[0] and 0 <= j < self.labels.shape[1]:
            return int(self.labels[i, j])
        return 0

    def is_interior(self, u: Elem2) -> bool:
        """In the set or in a finite component of its complement."""
        return self.label(u) != 0

    @cached_property
    def component_faces(self) -> dict[int, list[Elem2]]:
        out = defaultdict(list)
        ii, jj = np.nonzero(self.labels > 0)
        for i, j in zip(ii.tolist(), jj.tolist()):
            X, Y = i + self.lo[0], j + self.lo[1]
            if X % 2 and Y % 2:
                out[int(self.labels[i, j])].append((X, Y))
        return dict(out)


# -- walls and ceilings ------------------------------------------------------

def _star_components(faces: set) -> list[frozenset]:
    left = set(faces)
    out = []
    while left:
        seed = left.pop()
        comp = [seed]
        stack = [seed]
        while stack:
            f = stack.pop()
            for g in star_adjacent_faces(f):
                if g in left:
                    left.remove(g)
                    comp.append(g)
                    stack.append(g)
        out.append(frozenset(comp))
    return out


def _shadow_elems(faces: Iterable[Coord]) -> frozenset:
    return frozenset((f[0], f[1]) for f in faces)


def _index_face(shadow: Shadow, proj_faces: frozenset, proj_edges: frozenset) -> Coord:
    """Minimal L0 face sharing an edge with the projection, inside or on it."""
    cands = set(proj_faces)
    for (X, Y) in proj_edges:
        if X % 2 == 0:
            nb = [(X - 1, Y), (X + 1, Y)]
        else:
            nb = [(X, Y - 1), (X, Y + 1)]
        for u in nb:
            if shadow.label(u) != 0:
                cands.add(u)
    for (X, Y) in proj_faces:
        for u in ((X - 2, Y), (X + 2, Y), (X, Y - 2), (X, Y + 2)):
            if shadow.label(u) > 0:
                cands.add(u)
    if not cands:
        # open wall cut by the box side: fall back to any face along the projection
        for (X, Y) in proj_edges:
            cands.update([(X - 1, Y), (X + 1, Y)] if X % 2 == 0 else [(X, Y - 1), (X, Y + 1)])
    u = min(cands)
    return (u[0], u[1], 0)


class _WallShape:
    """Projection data shared by walls and standard walls."""

    faces: frozenset

    @cached_property
    def projection(self) -> frozenset:
        return _shadow_elems(self.faces)

    @cached_property
    def proj_faces(self) -> frozenset:
        return frozenset(u for u in self.projection if u[0] % 2 and u[1] % 2)

    @cached_property
    def proj_edges(self) -> frozenset:
        return self.projection - self.proj_faces

    @cached_property
    def shadow(self) -> Shadow:
        return Shadow(self.projection)

    @cached_property
    def index(self) -> Coord:
        return _index_face(self.shadow, self.proj_faces, self.proj_edges)

    @property
    def excess(self) -> int:
        return len(self.faces) - len(self.proj_faces)

    @cached_property
    def multiplicity(self) -> dict:
        """N(u): number of faces projecting onto each projection element."""
        out = defaultdict(int)
        for f in self.faces:
            out[(f[0], f[1])] += 1
        return dict(out)

    def is_interior(self, u: Coord) -> bool:
        return self.shadow.is_interior((u[0], u[1]))

    @property
    def height(self) -> float:
        """Top face height relative to the wall's own floor."""
        return max(f[2] for f in self.faces) / 2


@dataclass(frozen=True, eq=False)
class Wall(_WallShape):
    faces: frozenset
    floor_height: int = 0
    clipped: bool = False

    def standardize(self) -> "StandardWall":
        dz = -2 * self.floor_height
        return StandardWall(frozenset((f[0], f[1], f[2] + dz) for f in self.faces), self.clipped)


@dataclass(frozen=True)
class Ceiling:
    faces: frozenset

    @property
    def height(self) -> int:
        return next(iter(self.faces))[2] // 2


@dataclass(frozen=True, eq=False)
class StandardWall(_WallShape):
    faces: frozenset
    clipped: bool = False

    def __eq__(self, other):
        return isinstance(other, StandardWall) and self.faces == other.faces

    def __hash__(self):
        return hash(self.faces)

    @cached_property
    def ceiling_heights(self) -> dict[int, int]:
        """Height of the ceiling over each finite component in the one-wall interface."""
        return _component_heights(self)

    def shifted(self, dz: int) -> frozenset:
        return frozenset((f[0], f[1], f[2] + 2 * dz) for f in self.faces)


def _component_heights(w: _WallShape) -> dict[int, int]:
    """Propagate column spin profiles from outside the wall across its vertical faces."""
    sh = w.shadow
    zs = [f[2] for f in w.faces]
    zlo, zhi = min(zs) - 3, max(zs) + 3
    cell_z = np.arange(zlo + (1 - zlo % 2), zhi, 2)  # odd doubled heights
    ground = np.where(cell_z < 0, 1, -1).astype(np.int8)
    vert = defaultdict(set)
    for f in w.faces:
        if not is_horizontal(f):
            vert[(f[0], f[1])].add(f[2])
    lo, shape = sh.lo, sh.labels.shape
    prof: dict = {}
    stack = []
    for i in range(shape[0]):
        for j in range(shape[1]):
            X, Y = i + lo[0], j + lo[1]
            if X % 2 and Y % 2 and sh.labels[i, j] == 0:
                prof[(X, Y)] = ground
                stack.append((X, Y))
    while stack:
        X, Y = stack.pop()
        p = prof[(X, Y)]
        for dx, dy in ((2, 0), (-2, 0), (0, 2), (0, -2)):
            v = (X + dx, Y + dy)
            i, j = v[0] - lo[0], v[1] - lo[1]
            if not (0 <= i < shape[0] and 0 <= j < shape[1]):
                continue
            e = (X + dx // 2, Y + dy // 2)
            flips = vert.get(e)
            q = p if not flips else np.where(np.isin(cell_z, list(flips)), -p, p).astype(np.int8)
            if v in prof:
                if not np.array_equal(prof[v], q):
                    raise InadmissibleError("wall is not standard: inconsistent column profiles")
                continue
            prof[v] = q
            stack.append(v)
    out = {}
    for k, faces in sh.component_faces.items():
        p = prof[faces[0]]
        ch = np.nonzero(p[:-1] != p[1:])[0]
        if len(ch) != 1 or p[0] != 1:
            raise InadmissibleError("wall is not standard: interior column is not a single ceiling")
        out[k] = int(cell_z[ch[0]] + 1) // 2
    return out


def classify(I: Interface) -> tuple[list[Wall], list[Ceiling]]:
    """Split I into walls and ceilings (maximal *-connected classes)."""
    per_col = defaultdict(int)
    for f in I.faces:
        if is_horizontal(f):
            per_col[(f[0], f[1])] += 1
    ceil = {f for f in I.faces if is_horizontal(f) and per_col[(f[0], f[1])] == 1}
    wallf = set(I.faces) - ceil
    ceilings = [Ceiling(c) for c in _star_components(ceil)]
    ceil_height = {}
    for c in ceilings:
        h = c.height
        for f in c.faces:
            ceil_height[f] = h
    walls = []
    for comp in sorted(_star_components(wallf), key=min):
        s, clipped = _floor_height(comp, ceil_height, I.region)
        walls.append(Wall(comp, s, clipped))
    walls.sort(key=lambda w: (w.index, min(w.faces)))
    ceilings.sort(key=lambda c: min(c.faces))
    return walls, ceilings


def _touches_side(faces: Iterable[Coord], region: Region) -> bool:
    for f in faces:
        if (f[0] - 2 <= 2 * region.x0 or f[0] + 2 >= 2 * region.x1
                or f[1] - 2 <= 2 * region.y0 or f[1] + 2 >= 2 * region.y1
                or f[2] in (2 * region.z0, 2 * region.z1)):
            return True
    return False


def _floor_height(faces: frozenset, ceil_height: dict, region: Region) -> tuple[int, bool]:
    sh = Shadow(_shadow_elems(faces))
    heights = set()
    for f in faces:
        for g in star_adjacent_faces(f):
            h = ceil_height.get(g)
            if h is not None and sh.label((g[0], g[1])) == 0:
                heights.add(h)
    clipped = _touches_side(faces, region)
    if len(heights) == 1:
        return heights.pop(), clipped
    if not heights and clipped:
        return 0, True  # the plane outside the box is the floor
    raise InadmissibleError(f"wall has floor candidates at heights {sorted(heights)}")


def floor_of(W: Wall, I: Interface) -> Optional[Ceiling]:
    """The ceiling of I adjacent to W projecting into the infinite component; None if clipped away."""
    sh = W.shadow
    near = {g for f in W.faces for g in star_adjacent_faces(f)}
    for c in I.ceilings:
        if any(g in near and sh.label((g[0], g[1])) == 0 for g in c.faces):
            return c
    return None


def standardize(W: Wall, I: Optional[Interface] = None) -> StandardWall:
    return W.standardize()


# -- standard wall representation -------------------------------------------

@dataclass(frozen=True, eq=False)
class StandardWallCollection:
    region: Region
    walls: tuple

    def __post_init__(self):
        object.__setattr__(self, "walls", tuple(sorted(self.walls, key=lambda w: (w.index, min(w.faces)))))

    def __eq__(self, other):
        return (isinstance(other, StandardWallCollection) and self.region == other.region
                and frozenset(self.walls) == frozenset(other.walls))

    def __len__(self):
        return len(self.walls)

    def __iter__(self):
        return iter(self.walls)

    @property
    def by_index(self) -> dict:
        return {w.index: w for w in self.walls}

    def excess(self) -> int:
        return sum(w.excess for w in self.walls)

    def without(self, walls: Iterable[StandardWall]) -> "StandardWallCollection":
        drop = set(walls)
        return StandardWallCollection(self.region, tuple(w for w in self.walls if w not in drop))

    def with_walls(self, walls: Iterable[StandardWall]) -> "StandardWallCollection":
        return StandardWallCollection(self.region, self.walls + tuple(walls))


def standard_wall_representation(I: Interface) -> StandardWallCollection:
    return StandardWallCollection(I.region, tuple(w.standardize() for w in I.walls))


def check_admissible(walls: Iterable[_WallShape]):
    walls = list(walls)
    owner = {}
    for a, w in enumerate(walls):
        for u in w.projection:
            b = owner.get(u)
            if b is not None:
                raise InadmissibleError(
                    f"projections of walls {walls[b].index} and {w.index} are not disjoint at {u}")
            owner[u] = a


def nesting_depths(walls: list) -> list[int]:
    """Number of other walls each wall is nested in."""
    depth = [0] * len(walls)
    for a, w in enumerate(walls):
        probe = next(iter(w.projection))
        for b, v in enumerate(walls):
            if a != b and v.shadow.is_interior(probe):
                depth[a] += 1
    return depth


def _insert(current: set, w: StandardWall) -> set:
    sh = w.shadow
    heights = w.ceiling_heights
    out = set()
    for f in current:
        lab = sh.label((f[0], f[1]))
        if lab == -1:
            if is_horizontal(f):
                continue
            out.add(f)
        elif lab > 0 and heights.get(lab, 0):
            out.add((f[0], f[1], f[2] + 2 * heights[lab]))
        else:
            out.add(f)
    out |= w.faces
    return out


def reconstruct(coll: StandardWallCollection, region: Optional[Region] = None) -> Interface:
    """Interface with the given standard walls, inserting walls from innermost outward."""
    region = coll.region if region is None else region
    walls = list(coll.walls)
    check_admissible(walls)
    depth = nesting_depths(walls)
    order = sorted(range(len(walls)), key=lambda a: (-depth[a], walls[a].index))
    faces = set(region.l0_faces())
    for a in order:
        faces = _insert(faces, walls[a])
    bad = [f for f in faces if not region.contains_face(f)]
    if bad:
        raise InadmissibleError(f"reconstructed interface leaves the region at {min(bad)}")
    return Interface(region, frozenset(faces))


# -- groups of walls ---------------------------------------------------------

@dataclass(frozen=True)
class GroupOfWalls:
    walls: tuple
    index: Coord

    @property
    def excess(self) -> int:
        return sum(w.excess for w in self.walls)

    @property
    def clipped(self) -> bool:
        return any(w.clipped for w in self.walls)


def walls_close(w1: _WallShape, w2: _WallShape) -> bool:
    """Some u1, u2 in the projections with |u1 - u2| <= sqrt(N(u1)) + sqrt(N(u2))."""
    n1, n2 = w1.multiplicity, w2.multiplicity
    r = math.sqrt(max(n1.values())) + math.sqrt(max(n2.values()))
    xs1 = [u[0] for u in n1]
    ys1 = [u[1] for u in n1]
    xs2 = [u[0] for u in n2]
    ys2 = [u[1] for u in n2]
    gap = max(min(xs2) - max(xs1), min(xs1) - max(xs2), min(ys2) - max(ys1), min(ys1) - max(ys2), 0) / 2
    if gap > r:
        return False
    for u1, a in n1.items():
        for u2, b in n2.items():
            d2 = ((u1[0] - u2[0]) ** 2 + (u1[1] - u2[1]) ** 2) / 4
            if d2 <= (math.sqrt(a) + math.sqrt(b)) ** 2 + 1e-12:
                return True
    return False


def groups_of_walls(coll: Iterable[_WallShape]) -> list[GroupOfWalls]:
    walls = list(coll)
    parent = list(range(len(walls)))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a in range(len(walls)):
        for b in range(a + 1, len(walls)):
            if find(a) != find(b) and walls_close(walls[a], walls[b]):
                parent[find(a)] = find(b)
    comps = defaultdict(list)
    for a in range(len(walls)):
        comps[find(a)].append(walls[a])
    groups = [GroupOfWalls(tuple(sorted(ws, key=lambda w: w.index)), min(w.index for w in ws))
              for ws in comps.values()]
    return sorted(groups, key=lambda g: g.index)


def group_of(groups: list[GroupOfWalls], wall: _WallShape) -> GroupOfWalls:
    for g in groups:
        if any(w.faces == wall.faces or w.index == wall.index for w in g.walls):
            return g
    raise KeyError(wall.index)


def nested_walls(x: Coord, I: Interface) -> list[Wall]:
    """Walls that x is interior to, innermost first."""
    ws = [w for w in I.walls if w.is_interior(x)]
    depth = nesting_depths(ws)
    return [w for _, w in sorted(zip(depth, ws), key=lambda t: (-t[0], t[1].index))]


# -- excess area -------------------------------------------------------------

def excess_area(I: Interface, ref: Optional[Interface] = None) -> int:
    ref_size = len(I.region.l0_faces()) if ref is None else len(ref)
    return len(I) - ref_size


def wall_excess(W: _WallShape) -> int:
    return W.excess


# -- export ------------------------------------------------------------------

def interface_to_json(I: Interface) -> str:
    walls, ceilings = I.classification
    label = {}
    for a, w in enumerate(walls):
        for f in w.faces:
            label[f] = f"wall:{a}"
    for a, c in enumerate(ceilings):
        for f in c.faces:
            label[f] = f"ceiling:{a}"
    doc = {
        "region": I.region.to_dict(),
        "faces": [[list(f), label[f]] for f in sorted(I.faces)],
        "walls": [{"index": list(w.index), "floor": w.floor_height, "excess": w.excess,
                   "clipped": w.clipped, "size": len(w.faces)} for w in walls],
    }
    return json.dumps(doc, sort_keys=True)


def collection_to_json(coll: StandardWallCollection) -> str:
    doc = {"region": coll.region.to_dict(),
           "walls": [{"index": list(w.index), "faces": sorted(list(f) for f in w.faces)}
                     for w in coll.walls]}
    return json.dumps(doc, sort_keys=True)


def collection_from_json(text: str) -> StandardWallCollection:
    doc = json.loads(text)
    region = Region(**doc["region"])
    walls = tuple(StandardWall(frozenset(tuple(f) for f in w["faces"])) for w in doc["walls"])
    return StandardWallCollection(region, walls)
