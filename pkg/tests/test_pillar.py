import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dobrushin.interface import extract_interface
from dobrushin.ising import Chain, SamplerParams, SpinConfig, column_config, cuts_at_least, enumerate_exact
from dobrushin.lattice import Region
from dobrushin.maps import random_increment, random_remainder
from dobrushin.pillar import (
    ROOT,
    TRIVIAL,
    TRIVIAL_REM,
    Increment,
    Remainder,
    SpineParams,
    base_spine_split,
    cut_points,
    decompose_cells,
    decomposition_to_json,
    event_a_h,
    increments,
    is_tame,
    pillar_of_config,
    pillar_rows_to_csv,
    pillar_csv_row,
    recompose_spine,
    source_point,
    spine_cut_cells,
    truncation_cells,
)

R = Region.box(5, 5, 10)
X = (1, 1, 0)
DIAGONAL = Increment(frozenset({(1, 1, 1), (3, 3, 3)}))


def with_cells(cells, region=R):
    return SpinConfig.ground_state(region).with_spins({c: 1 for c in cells})


def column(h, at=(1, 1)):
    return [(at[0], at[1], 2 * t + 1) for t in range(h)]


def test_ground_state_pillar_is_empty_with_height_zero():
    P = pillar_of_config(SpinConfig.ground_state(R), X)
    assert P.empty and P.height == 0 and not P.negative
    with pytest.raises(ValueError):
        cut_points(P)


def test_negative_pillar():
    cfg = SpinConfig.ground_state(R).with_spins({(1, 1, -1): -1})
    P = pillar_of_config(cfg, X)
    assert P.empty and P.negative and P.height == -1


def test_single_bump_pillar():
    P = pillar_of_config(with_cells([(1, 1, 1)]), X)
    assert P.cells == {(1, 1, 1)} and len(P.faces) == 5 and P.height == 1
    assert cut_points(P) == [(1, 1, 1)]
    incs, rem, n = increments(P)
    assert incs == [] and n == 0 and rem == TRIVIAL_REM and rem.excess == 0


@pytest.mark.parametrize("h", [2, 3, 4, 5, 6])
def test_column_gives_trivial_increments(h):
    P = pillar_of_config(column_config(R, X, h), X)
    assert P.height == h
    assert [c[2] for c in cut_points(P)] == [2 * t + 1 for t in range(h)]
    incs, rem, n = increments(P)
    assert n == h - 1 and all(Xi == TRIVIAL for Xi in incs) and rem == TRIVIAL_REM


def test_bulge_removes_cut_point():
    P = pillar_of_config(with_cells(column(3) + [(3, 1, 3)]), X)
    assert [c[2] for c in cut_points(P)] == [1, 5]
    incs, rem, n = increments(P)
    assert n == 1 and incs[0].height == 2 and incs[0].excess == 8


def test_trivial_and_diagonal_increment_areas():
    assert len(TRIVIAL.faces) == 8 and TRIVIAL.excess == 0 and TRIVIAL.height == 1
    assert TRIVIAL.observables() == (0, 0, 1, 1, 4, 0)
    assert len(DIAGONAL.faces) == 10 and DIAGONAL.excess == 2 and DIAGONAL.height == 1
    assert DIAGONAL.observables() == (1, 1, 1, 1, 6, 2)


def test_recompose_column_and_diagonal():
    v = (1, 1, 3)
    assert recompose_spine(v, [TRIVIAL, TRIVIAL], TRIVIAL_REM) == {(1, 1, 3), (1, 1, 5), (1, 1, 7)}
    assert recompose_spine(v, [DIAGONAL], TRIVIAL_REM) == {(1, 1, 3), (3, 3, 5)}
    assert spine_cut_cells(v, [DIAGONAL, TRIVIAL]) == [(1, 1, 3), (3, 3, 5), (3, 3, 7)]


@st.composite
def spines(draw):
    rng = np.random.default_rng(draw(st.integers(0, 2 ** 32 - 1)))
    n = draw(st.integers(0, 6))
    return [random_increment(rng) for _ in range(n)], random_remainder(rng)


@settings(max_examples=150)
@given(spines(), st.tuples(st.integers(-5, 5), st.integers(-5, 5), st.integers(0, 4)))
def test_spine_roundtrip(spine, shift):
    incs, rem = spine
    v = (2 * shift[0] + 1, 2 * shift[1] + 1, 2 * shift[2] + 1)
    cells = recompose_spine(v, incs, rem)
    cuts, incs2, rem2 = decompose_cells(cells)
    assert cuts[0] == v
    assert incs2 == list(incs) and rem2 == rem
    assert cuts == spine_cut_cells(v, incs)


@settings(max_examples=100)
@given(st.integers(0, 2 ** 32 - 1))
def test_random_increments_are_valid_and_area_bound(seed):
    X_ = random_increment(np.random.default_rng(seed))
    X_.validate()
    d = (X_.top[0] - ROOT[0]) / 2, (X_.top[1] - ROOT[1]) / 2
    assert X_.excess >= math.sqrt(2) * math.hypot(*d) - 1e-12
    assert X_.excess >= 0 and (X_.excess == 0) == X_.is_trivial
    assert len(X_.faces) >= 6 * (X_.height - 1) + 8
    if not X_.is_trivial:
        assert 5 * X_.excess >= len(X_.faces)


def test_invalid_increments_are_rejected():
    with pytest.raises(ValueError):
        Increment(frozenset({(1, 1, 1), (1, 1, 3), (1, 1, 5)})).validate()  # interior cut
    with pytest.raises(ValueError):
        Increment(frozenset({(1, 1, 1), (5, 5, 3)})).validate()  # not *-connected
    with pytest.raises(ValueError):
        Remainder(frozenset({(1, 1, 1), (1, 1, 3)})).validate()  # cut above the root


def test_isolated_column_source_point_is_first_cut():
    I = extract_interface(column_config(R, X, 5))
    sp = source_point(I, X, 4)
    assert sp.tau == 1 and sp.v == (1, 1, 1)
    dec = base_spine_split(I, X, 4)
    assert dec.base_cells == {(1, 1, 1)}
    assert dec.spine_cells == set(column(5))
    assert len(dec.increments) == 4 and dec.spine_excess == 0
    assert is_tame(dec, 4)
    cut = truncation_cells(I, dec)
    assert pillar_of_config(cut, X).cells == {(1, 1, 1)}


def test_neighbouring_bump_raises_source_point():
    cells = column(6) + [(7, 7, 1), (7, 7, 3)]
    I = extract_interface(with_cells(cells))
    sp = source_point(I, X, 4)
    assert sp.neighbour_height == 1.5  # side faces of the upper bump cell; its top is a ceiling
    assert sp.v == (1, 1, 5) and sp.tau == 3


def test_bulge_below_source_point_is_in_base():
    cells = column(7) + [(3, 1, 3), (7, 7, 1), (7, 7, 3)]
    I = extract_interface(with_cells(cells))
    dec = base_spine_split(I, X, 4)
    assert dec.v == (1, 1, 5)
    assert (3, 1, 3) in dec.base_cells and (3, 1, 3) not in dec.spine_cells
    assert dec.base_diameter() == 1.0
    doc = json.loads(decomposition_to_json(dec))
    assert doc["tau_spine"] == dec.tau and len(doc["increments"]) == len(dec.increments)
    csv_text = pillar_rows_to_csv([pillar_csv_row(dec)])
    assert csv_text.splitlines()[0].startswith("x,hgt,")


def test_tameness_threshold():
    I = extract_interface(with_cells(column(3) + [(3, 1, 3)]))
    dec = base_spine_split(I, X, 1)
    assert dec.spine_excess > 0
    assert is_tame(dec, 1, r0=dec.spine_excess)
    assert not is_tame(dec, 1, r0=dec.spine_excess - 1)


def test_conditioned_pillars_have_enough_height():
    r = Region.box(4, 4, 8)
    p = SamplerParams(r, 0.9, 200, seed=2, thin=10)
    for s in Chain(p, event=cuts_at_least(X, 3)).run():
        P = pillar_of_config(s.cfg, X)
        assert P.n_increments >= 3 and P.height >= P.n_increments + 1
        dec = base_spine_split(extract_interface(s.cfg), X, 3, SpineParams())
        assert 1 <= dec.tau <= dec.n_increments + 1
        assert dec.spine_cells | dec.base_cells == P.cells
        assert dec.spine_cells & dec.base_cells == {dec.v}


def test_event_a_h_basics():
    assert event_a_h(column_config(R, X, 4), X, 4)
    assert not event_a_h(SpinConfig.ground_state(R), X, 1)
    assert event_a_h(SpinConfig.ground_state(R), X, 0)


def test_a_h_and_height_events_agree_more_closely_at_low_temperature():
    r = Region(-1, 2, -1, 2, -1, 1)
    gaps = []
    for beta in (0.5, 1.0, 1.5):
        t, _ = enumerate_exact(r, beta, x=r.center_face(), hmax=1)
        gaps.append(abs(t.prob_a_h(1) / t.prob_hgt_at_least(1) - 1))
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[0] < 1e-3
