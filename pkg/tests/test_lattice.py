from hypothesis import given, strategies as st

from dobrushin.lattice import (
    Region,
    bounding_faces,
    face_cells,
    is_cell,
    is_face,
    kind,
    neighbors,
    star_adjacent_faces,
)

odd = st.integers(-20, 20).map(lambda v: 2 * v + 1)
even = st.integers(-20, 20).map(lambda v: 2 * v)


@st.composite
def faces(draw):
    a = draw(st.integers(0, 2))
    return tuple(draw(even) if i == a else draw(odd) for i in range(3))


def test_kinds():
    assert kind((1, 1, 1)) == "cell"
    assert kind((1, 1, 0)) == "face"
    assert kind((0, 1, 0)) == "edge"
    assert kind((0, 0, 0)) == "vertex"


def test_cell_has_six_faces_and_26_star_neighbours():
    c = (1, 1, 1)
    assert len(set(bounding_faces(c))) == 6
    assert all(is_face(f) for f in bounding_faces(c))
    assert len(set(neighbors(c, star=True))) == 26
    assert all(is_cell(d) for d in neighbors(c))


@given(faces())
def test_star_adjacency_has_32_faces_and_is_symmetric(f):
    nb = star_adjacent_faces(f)
    assert len(set(nb)) == 32
    assert all(is_face(g) for g in nb)
    assert all(f in star_adjacent_faces(g) for g in nb)


@given(faces())
def test_face_separates_two_adjacent_cells(f):
    a, b = face_cells(f)
    assert f in bounding_faces(a) and f in bounding_faces(b)
    assert b in neighbors(a)


def test_region_box_geometry():
    r = Region.box(3, 2, 4)
    assert r.shape == (6, 4, 8)
    assert r.n_cells == 6 * 4 * 8
    assert r.center_face() == (1, 1, 0)
    assert len(r.l0_faces()) == 24
    for c in r.cells():
        assert r.cell_coord(*r.cell_index(c)) == c
    assert r.nmh == (3, 2, 4)


def test_odd_width_region_centre():
    r = Region(-1, 2, -1, 2, -1, 1)
    assert r.shape == (3, 3, 2)
    assert r.center_face() == (1, 1, 0)
