import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dobrushin.interface import extract_interface
from dobrushin.ising import SpinConfig
from dobrushin.lattice import Region, bounding_faces
from dobrushin.maps import (
    MapParams,
    enumerate_increments,
    mix_sequences,
    multiplicity_scan,
    trivialize_sequence,
    random_increment,
    stat_sequences,
    verify_straighten_base,
    verify_swap_tails,
    verify_swap_windows,
    verify_trivialize,
)
from dobrushin.pillar import ROOT, TRIVIAL, TRIVIAL_REM, Increment, Remainder, extract_pillar

DIAG = Increment(frozenset({(1, 1, 1), (3, 3, 3)}))
WIDE_REM = Remainder(frozenset({(1, 1, 1), (3, 1, 3), (1, 3, 3)}))
BULGE = Increment(frozenset({(1, 1, 1), (1, 1, 3), (3, 1, 3), (1, 1, 5)}))
R = Region.box(6, 6, 12)
X = (1, 1, 0)


def interface_with(cells, region=R):
    return extract_interface(SpinConfig.ground_state(region).with_spins({c: 1 for c in cells}))


def column(h, at=(1, 1)):
    return [(at[0], at[1], 2 * t + 1) for t in range(h)]


# -- replacement map on sequences --------------------------------------------

def test_trivialize_replaces_marked_increment_by_trivial_stretch():
    out, rem, marked = trivialize_sequence([TRIVIAL, BULGE, TRIVIAL], TRIVIAL_REM, 1, 0.25)
    assert out == (TRIVIAL,) * 4 and rem == TRIVIAL_REM and marked == [1]


def test_trivialize_on_trivial_position_is_identity():
    seq = (DIAG, TRIVIAL, DIAG)
    assert trivialize_sequence(seq, TRIVIAL_REM, 1, 0.25) == (seq, TRIVIAL_REM, [])


def test_trivialize_also_marks_later_heavy_increments():
    out, _, marked = trivialize_sequence([DIAG, TRIVIAL, BULGE], TRIVIAL_REM, 0, 0.25)
    assert marked == [0, 2] and out == (TRIVIAL,) * 4
    out, _, marked = trivialize_sequence([BULGE, TRIVIAL, DIAG], TRIVIAL_REM, 0, 0.25)
    assert marked == [0] and out[-1] == DIAG


def test_trivialize_rejects_out_of_range_position():
    with pytest.raises(IndexError):
        trivialize_sequence([TRIVIAL], TRIVIAL_REM, 1, 0.25)
    with pytest.raises(IndexError):
        trivialize_sequence([TRIVIAL], TRIVIAL_REM, -1, 0.25)


@settings(max_examples=80)
@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 6))
def test_trivialize_preserves_height_and_prefix(seed, n):
    rng = np.random.default_rng(seed)
    incs = [random_increment(rng) for _ in range(n)]
    i = int(rng.integers(n))
    out, rem, marked = trivialize_sequence(incs, TRIVIAL_REM, i, 0.25)
    assert sum(X.height for X in out) == sum(X.height for X in incs)
    assert list(out[:i]) == incs[:i]
    assert sum(X.excess for X in out) == sum(X.excess for j, X in enumerate(incs) if j not in marked)


# -- catalogue of small increments ---------------------------------------------

def _independent_small_increments(max_excess):
    """Every cell set with root, one top cell, at most four cells, checked by hand-written rules."""
    offsets = [(dx, dy) for dx in (-2, 0, 2) for dy in (-2, 0, 2)]
    found = set()
    tops = [(1 + dx, 1 + dy, 3) for dx, dy in offsets]
    for top in tops:
        found.add(frozenset({ROOT, top}))
    # two layers above the root: a middle layer of exactly two cells
    mid_cands = [(1 + dx, 1 + dy, 3) for dx in (-2, 0, 2) for dy in (-2, 0, 2)]
    for a, b in itertools.combinations(mid_cands, 2):
        for top in {(m[0] + dx, m[1] + dy, 5) for m in (a, b) for dx, dy in offsets}:
            found.add(frozenset({ROOT, a, b, top}))
    out = []
    for cells in found:
        if not _star_connected(cells):
            continue
        top = max(cells, key=lambda c: c[2])
        faces = _boundary(cells) - {(1, 1, 0), (top[0], top[1], top[2] + 1)}
        if len(faces) - 8 <= max_excess:
            out.append(cells)
    return out


def _boundary(cells):
    seen = {}
    for c in cells:
        for f in bounding_faces(c):
            seen[f] = seen.get(f, 0) + 1
    return {f for f, k in seen.items() if k == 1}


def _star_connected(cells):
    cells = set(cells)
    start = next(iter(cells))
    todo, seen = [start], {start}
    while todo:
        c = todo.pop()
        for d in itertools.product((-2, 0, 2), repeat=3):
            e = (c[0] + d[0], c[1] + d[1], c[2] + d[2])
            if e in cells and e not in seen:
                seen.add(e)
                todo.append(e)
    return seen == cells


def test_enumerated_increments_match_independent_count():
    cat = enumerate_increments(8)
    assert len(cat) == len(_independent_small_increments(8)) == 17
    assert {X.cells for X in cat} == set(_independent_small_increments(8))
    assert cat[0] == TRIVIAL
    assert sum(1 for X in cat if X.height == 1 and X.excess == 2) == 8


def test_multiplicity_scan_counts_one_layer_preimages():
    # pre-images at excess +2 of four trivial increments are the 8 tilted one-layer tips at position 1
    res = multiplicity_scan((TRIVIAL,) * 4, 1, 2)
    assert not res.partial
    assert res.histogram == {0: 1, 2: 8}


# -- swaps on sequences --------------------------------------------------------

def _seq(rng, n, p_trivial=0.6):
    return tuple(TRIVIAL if rng.random() < p_trivial else random_increment(rng, 2, 2) for _ in range(n))


@settings(max_examples=120)
@given(st.integers(0, 2 ** 32 - 1), st.integers(6, 14), st.integers(6, 14), st.integers(1, 2))
def test_mix_is_an_involution_that_exchanges_lengths(seed, na, nb, L):
    rng = np.random.default_rng(seed)
    a, b = (_seq(rng, na), TRIVIAL_REM), (_seq(rng, nb), WIDE_REM)
    j = int(rng.integers(1, min(na, nb) + 1))
    k = int(rng.integers(j, min(na, nb) + 1))
    a2, b2, t = mix_sequences(a, b, j, k, L)
    a3, b3, t3 = mix_sequences(a2, b2, j, k, L)
    assert (a3, b3) == (a, b) and t3 == t
    if t is not None:
        assert len(a2[0]) == nb and len(b2[0]) == na and a2[1] == b[1]
        assert sum(X.height for X in a2[0] + b2[0]) == sum(X.height for X in a[0] + b[0])


@settings(max_examples=120)
@given(st.integers(0, 2 ** 32 - 1), st.integers(10, 16), st.integers(0, 1))
def test_stat_is_an_involution_that_keeps_lengths(seed, n, s):
    rng = np.random.default_rng(seed)
    a, b = (_seq(rng, n, 0.75), TRIVIAL_REM), (_seq(rng, n + 1, 0.75), TRIVIAL_REM)
    j, jp = int(rng.integers(4, n - 3)), int(rng.integers(4, n - 3))
    D = min(j - 1, jp - 1, n - (j + s), n + 1 - (jp + s))
    a2, b2, w = stat_sequences(a, b, j, jp, 1, s, D)
    a3, b3, w3 = stat_sequences(a2, b2, j, jp, 1, s, D)
    assert (a3, b3) == (a, b) and w3 == w
    assert len(a2[0]) == n and len(b2[0]) == n + 1
    if w is not None:
        tm, tp = w
        assert a2[0][j - tm:j + tp] == b[0][jp - tm:jp + tp]


# -- maps on interfaces ----------------------------------------------------------

def test_trivialize_on_interface_flattens_a_bulge():
    I = interface_with(column(6) + [(3, 1, 5)])
    P = extract_pillar(I, X)
    assert P.n_increments == 4
    rep = verify_trivialize(I, 1, MapParams(T=3))
    # the bulge cell exposes 5 faces and hides 1 column face
    assert not rep.identity and rep.ok and rep.delta == 4
    assert rep.info["marked_excess"] == 8
    assert rep.checks["height_preserved"]


def test_straighten_base_moves_a_high_source_point():
    I = interface_with(column(8) + [(7, 7, 1), (7, 7, 3), (7, 7, 5)])
    rep = verify_straighten_base(I, MapParams(T=4))
    assert not rep.identity, rep.info
    assert rep.ok, rep.checks
    assert rep.info["source_height"] == 3.5


def test_straighten_base_is_identity_for_a_low_source():
    rep = verify_straighten_base(interface_with(column(6)), MapParams(T=4))
    assert rep.identity and rep.ok


def test_pair_maps_on_interfaces():
    A = interface_with(column(9) + [(3, 1, 3)])
    B = interface_with(column(10) + [(1, 3, 11)])
    p = MapParams(T=4)
    mix = verify_swap_tails((A, B), 3, 6, p)
    assert mix.ok and not mix.identity
    stat = verify_swap_windows((A, B), 5, 5, p)
    assert stat.ok and stat.checks["counts_preserved"]
