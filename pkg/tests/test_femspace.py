import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dg0lab.coeffs import get_field
from dg0lab.errors import InvalidArgument
from dg0lab.femspace import (FeSpace, assemble_averaged_stiffness, assemble_mass,
                             assemble_stiffness, l2_project, ritz_project, ritz_project_avg)
from dg0lab.linalg import dense
from dg0lab.mesh import make_interval_mesh, make_unit_square_tri_mesh
from dg0lab.timegrid import make_uniform

from oracles import DenseFem


def p1_line(n=8):
    return FeSpace(make_interval_mesh(0, 1, n), 1)


def test_1d_mass_row_pattern():
    s = p1_line(8)
    M = dense(assemble_mass(s))
    np.testing.assert_allclose(M[3, 2:5], np.array([1, 4, 1]) / 6 / 8, rtol=1e-14)


def test_full_mass_sums_to_domain_measure():
    for s in (p1_line(5), FeSpace(make_unit_square_tri_mesh(3), 2)):
        assert dense(assemble_mass(s, full=True)).sum() == pytest.approx(1.0, rel=1e-13)


def test_2d_single_square_has_no_interior_dofs():
    s = FeSpace(make_unit_square_tri_mesh(1), 1)
    assert assemble_mass(s).shape == (0, 0)


def test_1d_stiffness_row_pattern():
    s = p1_line(8)
    K = dense(assemble_stiffness(s, get_field("identity", 1), 0.0))
    np.testing.assert_allclose(K[3, 2:5], 8 * np.array([-1, 2, -1]), rtol=1e-13)


def test_linear_time_stiffness_scales():
    s = FeSpace(make_unit_square_tri_mesh(3), 2)
    K0 = dense(s.stiffness(get_field("identity", 2), 0.0))
    K = dense(s.stiffness(get_field("linear-time", 2), 0.7))
    np.testing.assert_allclose(K, 1.7 * K0, rtol=1e-13, atol=1e-13)


@pytest.mark.parametrize("dim,deg", [(1, 1), (1, 2), (2, 1), (2, 2)])
def test_stiffness_matches_dense_oracle(dim, deg):
    n = 2 if dim == 2 else 3
    fem = DenseFem(dim, n, deg, qpts=14)
    s = FeSpace(make_unit_square_tri_mesh(n) if dim == 2 else make_interval_mesh(0, 1, n), deg)
    field = get_field("diag-mixed" if dim == 2 else "sine-time", dim)
    K = dense(s.stiffness(field, 0.3, degree=24))
    ref = fem.stiffness(field, 0.3)
    idx = _match(s, fem)
    np.testing.assert_allclose(K, ref[np.ix_(idx, idx)], rtol=1e-10, atol=1e-10)


def _match(space, fem):
    coords = space.dof_coords[space.interior]
    return [int(np.argmin(np.linalg.norm(fem.coords - c, axis=1))) for c in coords]


def test_stiffness_rejects_low_quadrature():
    with pytest.raises(InvalidArgument):
        p1_line().stiffness(get_field("sine-time", 1), 0.0, degree=0)


def test_averaged_stiffness_autonomous():
    s = p1_line(6)
    f = get_field("identity", 1)
    K0 = dense(s.stiffness(f, 0.0))
    for q in (1, 3):
        np.testing.assert_array_equal(dense(assemble_averaged_stiffness(s, f, make_uniform(1, 4), 2, q)), K0)


def test_averaged_linear_time_is_three_halves():
    s = p1_line(6)
    K0 = dense(s.stiffness(get_field("identity", 1), 0.0))
    K = dense(assemble_averaged_stiffness(s, get_field("linear-time", 1), make_uniform(1, 1), 1, 1))
    np.testing.assert_allclose(K, 1.5 * K0, rtol=1e-14)


@pytest.mark.parametrize("q,factor", [(1, 1.25), (2, 4 / 3)])
def test_averaged_quadratic_time(q, factor):
    s = p1_line(6)
    K0 = dense(s.stiffness(get_field("identity", 1), 0.0))
    K = dense(assemble_averaged_stiffness(s, get_field("quadratic-time", 1), make_uniform(1, 1), 1, q))
    np.testing.assert_allclose(K, factor * K0, rtol=1e-14)


def test_averaged_stiffness_rejects_q0():
    with pytest.raises(InvalidArgument):
        assemble_averaged_stiffness(p1_line(), get_field("identity", 1), make_uniform(1, 2), 1, 0)


def test_averaging_converges_in_q():
    s = FeSpace(make_unit_square_tri_mesh(2), 1)
    f = get_field("diag-mixed", 2)
    g = make_uniform(1.0, 1)
    ref = dense(assemble_averaged_stiffness(s, f, g, 1, 12))
    errs = [np.abs(dense(assemble_averaged_stiffness(s, f, g, 1, q)) - ref).max() for q in (1, 2, 3)]
    # coefficient is linear in t here, so every rule is exact
    assert max(errs) < 1e-13
    s1 = p1_line(6)
    sine = get_field("sine-time", 1)
    ref = dense(assemble_averaged_stiffness(s1, sine, make_uniform(1, 2), 1, 16))
    errs = [np.abs(dense(assemble_averaged_stiffness(s1, sine, make_uniform(1, 2), 1, q)) - ref).max()
            for q in (1, 2, 4, 6)]
    assert all(b < a for a, b in zip(errs, errs[1:]))


def test_l2_projection_examples():
    s = FeSpace(make_interval_mesh(0, 1, 4), 1)
    hat = s.interpolate(lambda X: X[:, 0] * (1 - X[:, 0]))
    np.testing.assert_allclose(l2_project(s, lambda X: s.evaluate(hat, X), degree=8), hat, atol=1e-12)
    np.testing.assert_array_equal(l2_project(s, lambda X: 0 * X[:, 0]), np.zeros(s.n))
    p = l2_project(s, lambda X: np.sin(np.pi * X[:, 0]), degree=12)
    nodal = s.interpolate(lambda X: np.sin(np.pi * X[:, 0]))
    assert np.abs(p - nodal).max() < 0.25**2


def test_l2_projection_matches_oracle():
    fem = DenseFem(1, 4, 1, qpts=12)
    ref = np.linalg.solve(fem.mass(), fem.load(lambda X: np.sin(np.pi * X[:, 0])))
    p = l2_project(FeSpace(make_interval_mesh(0, 1, 4), 1), lambda X: np.sin(np.pi * X[:, 0]), degree=22)
    np.testing.assert_allclose(p, ref, rtol=1e-12)


def test_ritz_idempotent_and_zero():
    s = FeSpace(make_unit_square_tri_mesh(3), 2)
    field = get_field("diag-mixed", 2)
    v = np.random.default_rng(1).standard_normal(s.n)
    grad = lambda X: s.evaluate(v, X, grad=True)[1]
    np.testing.assert_allclose(ritz_project(s, field, 0.4, grad, degree=6), v, atol=1e-11)
    np.testing.assert_allclose(ritz_project(s, field, 0.4, lambda X: np.zeros_like(X)), 0)
    with pytest.raises(InvalidArgument):
        ritz_project(s, field, 0.4, None)


def test_averaged_ritz_examples():
    s = p1_line(6)
    g = make_uniform(1.0, 4)
    v = np.random.default_rng(2).standard_normal(s.n)
    grad = lambda X: s.evaluate(v, X, grad=True)[1]
    np.testing.assert_allclose(ritz_project_avg(s, get_field("sine-time", 1), g, 2, grad), v, atol=1e-12)
    ident = get_field("identity", 1)
    w = lambda X: np.pi * np.cos(np.pi * X)
    np.testing.assert_allclose(ritz_project_avg(s, ident, g, 3, w), ritz_project(s, ident, 0.9, w), rtol=1e-13)


def test_evaluate_gradient_of_interpolant():
    s = FeSpace(make_unit_square_tri_mesh(4), 2)
    u = s.interpolate(lambda X: X[:, 0] * (1 - X[:, 0]) * X[:, 1] * (1 - X[:, 1]))
    P = np.array([[0.3, 0.4], [0.71, 0.2]])
    val, grad = s.evaluate(u, P, grad=True)
    x, y = P[:, 0], P[:, 1]
    np.testing.assert_allclose(val, x * (1 - x) * y * (1 - y), atol=2e-2)
    assert grad.shape == (2, 2)
    with pytest.raises(InvalidArgument):
        s.evaluate(u, [[1.5, 0.5]])


def test_export_coo(tmp_path):
    import scipy.io
    s = p1_line(4)
    s.export_coo(s.mass_matrix, tmp_path / "m.mtx")
    back = scipy.io.mmread(str(tmp_path / "m.mtx"))
    np.testing.assert_allclose(back.toarray(), dense(s.mass_matrix), rtol=1e-15)


def test_unsupported_degree():
    with pytest.raises(InvalidArgument):
        FeSpace(make_interval_mesh(0, 1, 4), 3)


@settings(max_examples=25, deadline=None)
@given(st.sampled_from([(1, 1), (1, 2), (2, 1), (2, 2)]), st.integers(2, 5),
       st.sampled_from(["identity", "sine-time", "separable"]), st.floats(0, 1))
def test_matrices_symmetric_positive_definite(kind, n, fname, t):
    dim, deg = kind
    s = FeSpace(make_unit_square_tri_mesh(n) if dim == 2 else make_interval_mesh(0, 1, n), deg)
    for A in (dense(s.mass_matrix), dense(s.stiffness(get_field(fname, dim), t))):
        assert np.abs(A - A.T).max() <= 1e-14 * np.abs(A).max()
        assert np.linalg.eigvalsh(A).min() > 0
