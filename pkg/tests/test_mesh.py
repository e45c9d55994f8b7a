import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dg0lab.errors import InvalidArgument, InvalidMesh
from dg0lab.mesh import (Mesh, check_quasi_uniform, make_interval_mesh,
                         make_interval_mesh_from_nodes, make_unit_square_tri_mesh)


def test_interval_two_cells():
    m = make_interval_mesh(0, 1, 2)
    np.testing.assert_allclose(m.vertices[:, 0], [0, 0.5, 1])
    assert m.h == 0.5


def test_interval_four_cells():
    assert make_interval_mesh(0, 1, 4).h == 0.25


def test_interval_negative_left_end():
    m = make_interval_mesh(-1, 1, 2)
    segs = sorted(tuple(m.vertices[c, 0]) for c in m.cells)
    assert segs == [(-1.0, 0.0), (0.0, 1.0)]


def test_interval_rejects_reversed_bounds():
    with pytest.raises(InvalidArgument):
        make_interval_mesh(1, 0, 4)


@pytest.mark.parametrize("n,cells,verts", [(1, 2, 4), (2, 8, 9)])
def test_square_counts(n, cells, verts):
    m = make_unit_square_tri_mesh(n)
    assert m.n_cells == cells and m.n_vertices == verts


def test_square_n4_geometry():
    m = make_unit_square_tri_mesh(4)
    assert m.h == pytest.approx(np.sqrt(2) / 4)
    np.testing.assert_allclose(m.cell_measures, 1 / 32)


@pytest.mark.parametrize("n", [1, 2, 5, 8])
def test_quasi_uniform_square_is_two(n):
    assert check_quasi_uniform(make_unit_square_tri_mesh(n)).C_measured == pytest.approx(2.0)


def test_quasi_uniform_interval_is_one():
    assert check_quasi_uniform(make_interval_mesh(0, 1, 7)).C_measured == pytest.approx(1.0)


def test_quasi_uniform_grows_with_local_refinement():
    values = []
    for j in range(1, 5):
        coarse = np.linspace(0, 0.5, 5)
        fine = 0.5 + np.arange(1, 4 * 2**j + 1) * (0.5 / (4 * 2**j))
        values.append(check_quasi_uniform(make_interval_mesh_from_nodes(np.r_[coarse, fine])).C_measured)
    assert np.all(np.diff(values) > 0)
    assert values[-1] == pytest.approx(2**4)


def test_boundary_vertices_1d_and_2d():
    m1 = make_interval_mesh(0, 1, 5)
    np.testing.assert_allclose(np.sort(m1.vertices[m1.boundary_vertices, 0]), [0, 1])
    m2 = make_unit_square_tri_mesh(3)
    v = m2.vertices
    on = np.any(np.isclose(v, 0) | np.isclose(v, 1), axis=1)
    np.testing.assert_array_equal(np.sort(m2.boundary_vertices), np.flatnonzero(on))


def test_degenerate_cell_rejected():
    with pytest.raises(InvalidMesh):
        Mesh([[0, 0], [1, 0], [2, 0]], [[0, 1, 2]])


def test_hanging_node_detected():
    v = [[0, 0], [1, 0], [0, 1], [1, 1], [0.5, 0]]
    cells = [[0, 1, 3], [0, 3, 2], [0, 4, 2]]
    with pytest.raises(InvalidMesh):
        Mesh(v, cells).check_conformity()


def test_structured_mesh_is_conformal():
    make_unit_square_tri_mesh(4).check_conformity()
    make_interval_mesh(0, 2, 6).check_conformity()


def test_clockwise_triangles_are_reoriented():
    m = Mesh([[0, 0], [0, 1], [1, 0]], [[0, 1, 2]])
    assert m.cell_measures[0] == pytest.approx(0.5)


def test_json_round_trip_and_boundary_check():
    m = make_unit_square_tri_mesh(2)
    back = Mesh.from_json(m.to_json())
    np.testing.assert_array_equal(back.cells, m.cells)
    data = json.loads(m.to_json())
    data["boundary"] = data["boundary"][:-1]
    with pytest.raises(InvalidMesh):
        Mesh.from_json(json.dumps(data))


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 12))
def test_square_areas_sum_to_one(n):
    m = make_unit_square_tri_mesh(n)
    assert m.cell_measures.sum() == pytest.approx(1.0)
    assert m.h == pytest.approx(np.sqrt(2) / n)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0.05, 1.0), min_size=2, max_size=20))
def test_interval_quasi_uniform_matches_step_ratio(raw):
    x = np.concatenate([[0.0], np.cumsum(raw)])
    m = make_interval_mesh_from_nodes(x)
    steps = np.diff(x)
    assert check_quasi_uniform(m).C_measured == pytest.approx(steps.max() / steps.min())
