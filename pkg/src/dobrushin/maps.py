"""Interface-rewriting maps on pillars, with guarantees re-derived from their outputs."""
from __future__ import annotations

import hashlib
import itertools
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .interface import (
    InadmissibleError,
    Interface,
    StandardWall,
    StandardWallCollection,
    check_admissible,
    extract_interface,
    group_of,
    groups_of_walls,
    is_valid_interface,
    nested_walls,
    reconstruct,
    standard_wall_representation,
    two_phase_config,
)
from .ising import SpinConfig
from .lattice import Coord, bounding_faces
from .pillar import (
    ROOT,
    TRIVIAL,
    TRIVIAL_REM,
    Increment,
    Remainder,
    SpineDecomposition,
    SpineParams,
    _dist_to_path,
    base_spine_split,
    extract_pillar,
    face_path,
    recompose_spine,
    truncation_cells,
)


class MapError(ValueError):
    """The map cannot be applied to this input."""


@dataclass(frozen=True)
class MapParams:
    c_bar: float = 0.25
    K: float = 1.0
    L: int = 1
    T: int = 4
    s: int = 0
    R0: float = 100.0
    r0: float = 20.0

    def __post_init__(self):
        if not self.c_bar > 0:
            raise ValueError("c_bar must be positive")
        if self.L < 1:
            raise ValueError("L must be at least 1")
        if self.T < 1 or self.s < 0:
            raise ValueError("T must be positive and s non-negative")

    @property
    def spine(self) -> SpineParams:
        return SpineParams(self.R0, self.r0)

    @property
    def log_threshold(self) -> float:
        return self.K * math.log(self.T)


def interface_id(I: Interface) -> str:
    h = hashlib.sha256(repr(sorted(I.faces)).encode())
    return h.hexdigest()[:16]


@dataclass(frozen=True)
class MapReport:
    map: str
    input_ids: tuple
    output_ids: tuple
    identity: bool
    delta: int  # excess area m(input; output), summed over members
    valid: bool
    checks: dict = field(default_factory=dict)
    info: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.valid and all(self.checks.values())

    def to_json(self) -> str:
        doc = {"map": self.map, "input": list(self.input_ids), "output": list(self.output_ids),
               "identity": self.identity, "delta": self.delta, "valid": self.valid,
               "checks": self.checks, "info": self.info}
        return json.dumps(doc, sort_keys=True)


# -- pillar-level state ------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SpineState:
    interface: Interface
    x: Coord
    dec: SpineDecomposition
    base_increments: tuple  # X_1 .. X_{tau-1}
    truncation: SpinConfig

    @property
    def tau(self) -> int:
        return self.dec.tau

    @property
    def n_increments(self) -> int:
        return self.dec.n_increments

    @property
    def increments(self) -> tuple:
        """Full sequence X_1 .. X_T."""
        return self.base_increments + self.dec.increments


def spine_state(I: Interface, x: Coord, T: int, params: MapParams = MapParams()) -> SpineState:
    P = extract_pillar(I, x)
    if P.empty:
        raise MapError("empty pillar")
    dec = base_spine_split(I, x, T, params.spine, P)
    incs = P.increments()[0]
    return SpineState(I, x, dec, tuple(incs[:dec.tau - 1]), truncation_cells(I, dec))


def rebuild(state: SpineState, incs: Sequence[Increment], rem: Remainder) -> Interface:
    """Truncation of the state with a new spine sourced at the same cut cell."""
    cells = recompose_spine(state.dec.v, incs, rem)
    region = state.interface.region
    out = [c for c in cells if not region.contains_cell(c)]
    if out:
        raise MapError(f"spine leaves the region at {min(out)}")
    return extract_interface(state.truncation.with_spins({c: 1 for c in cells}))


def output_valid(J: Interface) -> bool:
    """J is a legal interface whose standard wall representation is admissible and reconstructs J."""
    if not is_valid_interface(J):
        return False
    try:
        coll = standard_wall_representation(J)
        check_admissible(coll.walls)
        return reconstruct(coll) == J
    except InadmissibleError:
        return False


def _spine_sequence(J: Interface, x: Coord, T: int, params: MapParams):
    st = spine_state(J, x, T, params)
    return st, st.dec.increments, st.dec.remainder


# -- increment replacement ---------------------------------------------------

def trivialize_sequence(incs: Sequence[Increment], rem: Remainder, i: int, c_bar: float):
    """Replace the i-th spine increment and later heavy ones by trivial stretches.

    Returns (new increments, new remainder, marked positions); position len(incs) is the remainder.
    """
    if not 0 <= i < len(incs):
        raise IndexError(f"increment position {i} outside spine of {len(incs)} increments")
    X0 = incs[i]
    if X0.is_trivial:
        return tuple(incs), rem, []
    m0 = X0.excess
    marked = [i] + [j for j in range(i + 1, len(incs))
                    if incs[j].excess >= m0 * math.exp(0.5 * c_bar * (j - i))]
    rem_marked = rem.excess >= m0 * math.exp(0.5 * c_bar * (len(incs) - i))
    out = []
    for j, X in enumerate(incs):
        out.extend([TRIVIAL] * X.height if j in marked else [X])
    new_rem = rem
    if rem_marked:
        out.extend([TRIVIAL] * rem.height)
        new_rem = TRIVIAL_REM
        marked.append(len(incs))
    return tuple(out), new_rem, marked


def trivialize(I: Interface, i: int, params: MapParams = MapParams(), x: Optional[Coord] = None) -> Interface:
    x = I.region.center_face() if x is None else x
    return _trivialize(spine_state(I, x, params.T, params), i, params)[0]


def _trivialize(st: SpineState, i: int, params: MapParams):
    incs, rem, marked = trivialize_sequence(st.dec.increments, st.dec.remainder, i, params.c_bar)
    if not marked:
        return st.interface, marked
    return rebuild(st, incs, rem), marked


def verify_trivialize(I: Interface, i: int, params: MapParams = MapParams(), x: Optional[Coord] = None) -> MapReport:
    x = I.region.center_face() if x is None else x
    st = spine_state(I, x, params.T, params)
    J, marked = _trivialize(st, i, params)
    ident = not marked
    seq = list(st.dec.increments) + [st.dec.remainder]
    marked_m = sum(seq[j].excess for j in marked)
    delta = len(I) - len(J)
    valid = True if ident else output_valid(J)
    P0 = st.dec.pillar
    P1 = extract_pillar(J, x)
    checks = {
        "height_preserved": P1.height == P0.height,
        "increments_not_decreased": P1.n_increments >= P0.n_increments,
        "excess_bound": 3 * delta >= marked_m,
        "prefix_unchanged": P1.increments()[0][:st.tau - 1 + i] == P0.increments()[0][:st.tau - 1 + i],
    }
    info = {"tau_spine": st.tau, "marked": marked, "marked_excess": marked_m,
            "n_increments": [P0.n_increments, P1.n_increments], "height": P0.height}
    return MapReport("trivialize", (interface_id(I),), (interface_id(J),), ident, delta, valid, checks, info)


# -- base reduction ----------------------------------------------------------

def _in_cylinder(proj, path, radius) -> bool:
    return any(_dist_to_path(u, path) <= radius for u in proj)


def _slab_single_heights(I: Interface) -> list[int]:
    """Doubled heights of cell layers above L0 holding exactly one plus cell of sigma(I)."""
    cfg = two_phase_config(I)
    k0 = I.region.k0
    counts = (cfg.spins[:, :, k0:] > 0).sum(axis=(0, 1))
    o = I.region.origin[2]
    return [2 * (k0 + k) + o for k, n in enumerate(counts.tolist()) if n == 1]


def column_wall(x: Coord, height: int) -> StandardWall:
    faces = set()
    for l in range(height):
        c = (x[0], x[1], 2 * l + 1)
        faces |= {f for f in bounding_faces(c) if f[2] % 2 == 1}
    return StandardWall(frozenset(faces))


def _straighten_base(st: SpineState, params: MapParams):
    dec = st.dec
    I = st.interface
    x = st.x
    region = I.region
    v = dec.v
    hv = v[2] / 2
    diam = dec.base_diameter()
    thr = params.log_threshold
    info = {"tau_spine": dec.tau, "source_height": hv, "base_diameter": diam}
    if hv <= thr and diam <= thr:
        return I, info
    I_tr = extract_interface(st.truncation)
    coll = standard_wall_representation(I_tr)
    groups = groups_of_walls(coll)
    radius = params.R0 * params.T
    path = face_path((v[0], v[1], 0), x)

    # nested sequences of the source point and of x with its neighbours
    around_x = [(x[0] + dx, x[1] + dy, 0) for dx in (-2, 0, 2) for dy in (-2, 0, 2)]
    nested = set()
    for f in [(v[0], v[1], 0)] + around_x:
        if region.contains_l0(f):
            nested |= {w.standardize() for w in nested_walls(f, I_tr)}
    marked = set()
    for w in nested:
        marked |= set(group_of(groups, w).walls)

    # an extra group attaining the highest single-cell slab of the nested walls
    sub = reconstruct(StandardWallCollection(region, tuple(nested)))
    singles = [z for z in _slab_single_heights(sub) if z < v[2]]
    info["h_dagger"] = max(singles) / 2 if singles else None
    info["y_dagger"] = None
    if singles:
        zd = max(singles)
        cands = []
        for w in I_tr.walls:
            sw = w.standardize()
            if sw in nested or not any(f[2] == zd and f[2] % 2 for f in w.faces):
                continue
            if _in_cylinder([w.index], path, radius):
                cands.append(w)
        if cands:
            y = min(cands, key=lambda w: w.index)
            info["y_dagger"] = list(y.index)
            marked |= set(group_of(groups, y.standardize()).walls)

    kept = coll.without(marked)
    I1 = reconstruct(kept)
    top = [max(f[2] for f in w.faces) / 2 for w in I1.walls if _in_cylinder([w.index], path, radius)]
    h_bold = int(max(top, default=0)) + 1
    h_star = max(h_bold, int(hv + 0.5))
    info.update({"h_star": h_star, "removed_walls": len(marked),
                 "removed_excess": sum(w.excess for w in marked)})
    J0 = reconstruct(kept.with_walls([column_wall(x, h_star)]))
    d = (x[0] - v[0], x[1] - v[1], 2 * h_star - 1 - v[2])
    cells = [(c[0] + d[0], c[1] + d[1], c[2] + d[2]) for c in dec.spine_cells]
    out = [c for c in cells if not region.contains_cell(c)]
    if out:
        raise MapError(f"shifted spine leaves the region at {min(out)}")
    J = extract_interface(two_phase_config(J0).with_spins({c: 1 for c in cells}))
    return J, info


def straighten_base(I: Interface, params: MapParams = MapParams(), x: Optional[Coord] = None) -> Interface:
    x = I.region.center_face() if x is None else x
    return _straighten_base(spine_state(I, x, params.T, params), params)[0]


def verify_straighten_base(I: Interface, params: MapParams = MapParams(), x: Optional[Coord] = None) -> MapReport:
    x = I.region.center_face() if x is None else x
    st = spine_state(I, x, params.T, params)
    J, info = _straighten_base(st, params)
    ident = J == I
    delta = len(I) - len(J)
    checks = {}
    valid = True
    if not ident:
        valid = output_valid(J)
        P0, P1 = st.dec.pillar, extract_pillar(J, x)
        hs = info["h_star"]
        bound = 2 * max(hs - 1, info["base_diameter"])
        incs1 = P1.increments()[0] if not P1.empty else []
        checks = {
            "height_preserved": P1.height == P0.height,
            "excess_bound": delta >= bound - 1e-9,
            "leading_trivial": all(X.is_trivial for X in incs1[:hs - 1]),
            "enough_increments": P1.n_increments >= params.T,
        }
        info["excess_bound"] = bound
        info["n_increments"] = [P0.n_increments, P1.n_increments]
    return MapReport("straighten_base", (interface_id(I),), (interface_id(J),), ident, delta, valid, checks, info)


# -- two-to-two swaps --------------------------------------------------------

def _trivial_run(seq, centre: int, L: int) -> bool:
    """seq is 1-based via seq[i-1]; all of centre-L..centre+L trivial."""
    lo, hi = centre - L, centre + L
    if lo < 1 or hi > len(seq):
        return False
    return all(seq[t - 1].is_trivial for t in range(lo, hi + 1))


def mix_sequences(a, b, j: int, k: int, L: int, lo: int = 1):
    """Swap suffixes above the first common trivial run centred in [j, k].

    a, b are (increments, remainder) with 1-based increment indices. Runs must
    start at or above index `lo`. Returns (a', b', centre or None).
    """
    (xa, ra), (xb, rb) = a, b
    for t in range(max(j, lo + L), k + 1):
        if _trivial_run(xa, t, L) and _trivial_run(xb, t, L):
            na = (tuple(xa[:t]) + tuple(xb[t:]), rb)
            nb = (tuple(xb[:t]) + tuple(xa[t:]), ra)
            return na, nb, t
    return (tuple(xa), ra), (tuple(xb), rb), None


def stat_sequences(a, b, j: int, jp: int, L: int, s: int, D: int):
    """Swap the windows (j - tm, j + tp] and (jp - tm, jp + tp] around common trivial runs."""
    (xa, ra), (xb, rb) = a, b
    tm = next((t for t in range(L, D - L + 1)
               if _trivial_run(xa, j - t, L) and _trivial_run(xb, jp - t, L)), None)
    tp = next((t for t in range(L + s, D - L + 1)
               if _trivial_run(xa, j + t, L) and _trivial_run(xb, jp + t, L)), None)
    if tm is None or tp is None:
        return (tuple(xa), ra), (tuple(xb), rb), None
    wa = tuple(xa[j - tm:j + tp])
    wb = tuple(xb[jp - tm:jp + tp])
    na = (tuple(xa[:j - tm]) + wb + tuple(xa[j + tp:]), ra)
    nb = (tuple(xb[:jp - tm]) + wa + tuple(xb[jp + tp:]), rb)
    return na, nb, (tm, tp)


def _rebuild_full(st: SpineState, full_incs, rem) -> Interface:
    return rebuild(st, tuple(full_incs[st.tau - 1:]), rem)


def swap_tails(pair, j: int, k: int, params: MapParams = MapParams(), x: Optional[Coord] = None):
    out, _ = _swap_tails(pair, j, k, params, x)
    return out


def _swap_tails(pair, j, k, params, x):
    I1, I2 = pair
    x = I1.region.center_face() if x is None else x
    s1 = spine_state(I1, x, params.T, params)
    s2 = spine_state(I2, x, params.T, params)
    lo = max(s1.tau, s2.tau)
    a, b, t = mix_sequences((s1.increments, s1.dec.remainder), (s2.increments, s2.dec.remainder),
                            j, k, params.L, lo)
    if t is None:
        return (I1, I2), None
    return (_rebuild_full(s1, *a), _rebuild_full(s2, *b)), t


def stat_window_bound(n1: int, n2: int, tau1: int, tau2: int, j: int, jp: int, s: int) -> int:
    return min(j - tau1, jp - tau2, n1 - (j + s), n2 - (jp + s))


def swap_windows(pair, j: int, jp: int, params: MapParams = MapParams(), x: Optional[Coord] = None):
    out, _ = _swap_windows(pair, j, jp, params, x)
    return out


def _swap_windows(pair, j, jp, params, x):
    I1, I2 = pair
    x = I1.region.center_face() if x is None else x
    s1 = spine_state(I1, x, params.T, params)
    s2 = spine_state(I2, x, params.T, params)
    D = stat_window_bound(s1.n_increments, s2.n_increments, s1.tau, s2.tau, j, jp, params.s)
    a, b, w = stat_sequences((s1.increments, s1.dec.remainder), (s2.increments, s2.dec.remainder),
                             j, jp, params.L, params.s, D)
    if w is None:
        return (I1, I2), None
    return (_rebuild_full(s1, *a), _rebuild_full(s2, *b)), w


def _verify_pair(name, fn, pair, p, q, params, x) -> MapReport:
    out, w = fn(pair, p, q, params, x)
    ident = w is None
    back, _ = fn(out, p, q, params, x)
    valid = ident or all(output_valid(J) for J in out)
    x = pair[0].region.center_face() if x is None else x
    n_in = [extract_pillar(I, x).n_increments for I in pair]
    n_out = [extract_pillar(J, x).n_increments for J in out]
    checks = {"involution": back[0] == pair[0] and back[1] == pair[1]}
    if name == "swap_windows":
        checks["counts_preserved"] = n_in == n_out
    else:
        checks["counts_exchanged"] = ident or n_in[::-1] == n_out
    delta = sum(len(I) for I in pair) - sum(len(J) for J in out)
    info = {"window": w if w is None or isinstance(w, int) else list(w), "n_increments": n_in}
    return MapReport(name, tuple(interface_id(I) for I in pair), tuple(interface_id(J) for J in out),
                     ident, delta, valid, checks, info)


def verify_swap_tails(pair, j, k, params: MapParams = MapParams(), x=None) -> MapReport:
    return _verify_pair("swap_tails", _swap_tails, pair, j, k, params, x)


def verify_swap_windows(pair, j, jp, params: MapParams = MapParams(), x=None) -> MapReport:
    return _verify_pair("swap_windows", _swap_windows, pair, j, jp, params, x)


# -- enumeration of small increments and pre-image scans -----------------------

def enumerate_increments(max_excess: int, max_cells: int = 4) -> list[Increment]:
    """All rooted increments with excess area <= max_excess and at most max_cells cells."""
    found = set()
    frontier = {frozenset({ROOT})}
    for _ in range(max_cells - 1):
        nxt = set()
        for cs in frontier:
            for c in cs:
                for dx, dy, dz in itertools.product((-2, 0, 2), repeat=3):
                    d = (c[0] + dx, c[1] + dy, c[2] + dz)
                    if d[2] < 1 or d in cs or (d[2] == 1 and d != ROOT):
                        continue
                    nxt.add(cs | {d})
        frontier = nxt
        for cs in frontier:
            X = Increment(cs)
            try:
                X.validate()
            except ValueError:
                continue
            if X.excess <= max_excess:
                found.add(X)
    return sorted(found, key=lambda X: (X.excess, sorted(X.cells)))


@dataclass(frozen=True)
class ScanResult:
    histogram: dict  # excess-area delta -> number of pre-images
    scanned: int
    partial: bool

    def log_slope(self) -> float:
        ks = sorted(k for k, n in self.histogram.items() if n > 0)
        if len(ks) < 2:
            return 0.0
        y = np.log([self.histogram[k] for k in ks])
        return float(np.polyfit(ks, y, 1)[0])


def multiplicity_scan(target: Sequence[Increment], i: int, max_delta: int, c_bar: float = 0.25,
                      max_increments: Optional[int] = None, budget: int = 2_000_000) -> ScanResult:
    """Exhaustively count spines (trivial remainder) mapped onto `target` by the replacement map at i.

    Candidate spines have at most len(target) increments, the same total height,
    and excess at most m(target) + max_delta.
    """
    target = tuple(target)
    n_max = len(target) if max_increments is None else min(max_increments, len(target))
    H = sum(X.height for X in target)
    m_t = sum(X.excess for X in target)
    cat = enumerate_increments(m_t + max_delta)
    hist = Counter()
    scanned = 0
    partial = False

    def rec(prefix, h, m):
        nonlocal scanned, partial
        if partial:
            return
        if h == H and len(prefix) > i:
            scanned += 1
            if scanned > budget:
                partial = True
                return
            out, rem, marked = trivialize_sequence(prefix, TRIVIAL_REM, i, c_bar)
            if out == target and rem == TRIVIAL_REM:
                hist[m - m_t] += 1
        if len(prefix) >= n_max or h >= H:
            return
        for X in cat:
            if h + X.height <= H and m + X.excess <= m_t + max_delta:
                rec(prefix + (X,), h + X.height, m + X.excess)

    rec((), 0, 0)
    return ScanResult(dict(sorted(hist.items())), scanned, partial)


# -- synthetic spines --------------------------------------------------------

def random_increment(rng: np.random.Generator, max_height: int = 3, max_width: int = 3) -> Increment:
    """Random rooted increment; layers grow upward, each cell *-adjacent to the layer below."""
    while True:
        H = int(rng.integers(1, max_height + 1))
        if rng.random() < 0.5:
            H = 1
        cells = {ROOT}
        prev = [ROOT]
        ok = True
        for layer in range(1, H):
            z = 2 * layer + 1
            n = int(rng.integers(2, max_width + 1))
            layer_cells = set()
            tries = 0
            while len(layer_cells) < n and tries < 50:
                p = prev[int(rng.integers(len(prev)))]
                dx, dy = (int(v) for v in rng.integers(-1, 2, size=2))
                layer_cells.add((p[0] + 2 * dx, p[1] + 2 * dy, z))
                tries += 1
            if len(layer_cells) < 2:
                ok = False
                break
            cells |= layer_cells
            prev = sorted(layer_cells)
        if not ok:
            continue
        p = prev[int(rng.integers(len(prev)))]
        if H == 1 and rng.random() < 0.6:
            top = (1, 1, 3)
        else:
            dx, dy = (int(v) for v in rng.integers(-1, 2, size=2))
            top = (p[0] + 2 * dx, p[1] + 2 * dy, 2 * H + 1)
        cells.add(top)
        X = Increment(frozenset(cells))
        try:
            X.validate()
        except ValueError:
            continue
        return X


def random_remainder(rng: np.random.Generator) -> Remainder:
    if rng.random() < 0.6:
        return TRIVIAL_REM
    while True:
        z = 3
        cells = {ROOT}
        for _ in range(int(rng.integers(1, 3))):
            n = int(rng.integers(2, 4))
            layer = {(1 + 2 * int(rng.integers(-1, 2)), 1 + 2 * int(rng.integers(-1, 2)), z) for _ in range(n)}
            if len(layer) < 2:
                break
            cells |= layer
            z += 2
        R = Remainder(frozenset(cells))
        try:
            R.validate()
        except ValueError:
            continue
        return R
