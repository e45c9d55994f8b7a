"""Continuous Lagrange spaces of degree 1 or 2 with Dirichlet elimination.

All vectors returned by the public functions live on interior degrees of
freedom; boundary dofs are removed from the system, never penalised.
"""

from __future__ import annotations

from functools import cached_property

import numpy as np
import scipy.io
import scipy.sparse as sps

from .coeffs import CoefficientField
from .errors import InvalidArgument
from .linalg import SpdSolver
from .mesh import Mesh
from .quadrature import cell_rule


def _barycentric(dim, xi):
    """Barycentric coordinates and their constant reference gradients."""
    if dim == 1:
        lam = np.column_stack([1.0 - xi[:, 0], xi[:, 0]])
        dlam = np.array([[-1.0], [1.0]])
    else:
        lam = np.column_stack([1.0 - xi[:, 0] - xi[:, 1], xi[:, 0], xi[:, 1]])
        dlam = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    return lam, dlam


def _local_edge_pairs(dim):
    # 2D order matches Mesh._local_edges: edge j is opposite vertex j
    return [(0, 1)] if dim == 1 else [(1, 2), (2, 0), (0, 1)]


def reference_basis(dim: int, degree: int, xi: np.ndarray):
    """Values (nq, nloc) and reference gradients (nq, nloc, d)."""
    lam, dlam = _barycentric(dim, xi)
    nq = xi.shape[0]
    if degree == 1:
        vals = lam
        grads = np.broadcast_to(dlam, (nq,) + dlam.shape).copy()
        return vals, grads
    vals, grads = [], []
    for i in range(dim + 1):
        vals.append(lam[:, i] * (2 * lam[:, i] - 1))
        grads.append((4 * lam[:, i] - 1)[:, None] * dlam[i])
    for a, b in _local_edge_pairs(dim):
        vals.append(4 * lam[:, a] * lam[:, b])
        grads.append(4 * (lam[:, a][:, None] * dlam[b] + lam[:, b][:, None] * dlam[a]))
    return np.column_stack(vals), np.stack(grads, axis=1)


class FeSpace:
    """Degree-r Lagrange space on a conformal mesh, homogeneous Dirichlet data."""

    def __init__(self, mesh: Mesh, degree: int = 1):
        if degree not in (1, 2):
            raise InvalidArgument(f"only degrees 1 and 2 are supported, got {degree}")
        self.mesh = mesh
        self.degree = degree
        self.dim = mesh.dim
        nv = mesh.n_vertices
        if degree == 1:
            self.cell_dofs = mesh.cells.copy()
            self.n_full = nv
            coords = mesh.vertices
            bdofs = mesh.boundary_vertices
        elif mesh.dim == 1:
            mids = nv + np.arange(mesh.n_cells)
            self.cell_dofs = np.column_stack([mesh.cells, mids])
            self.n_full = nv + mesh.n_cells
            coords = np.vstack([mesh.vertices, mesh.vertices[mesh.cells].mean(axis=1)])
            bdofs = mesh.boundary_vertices
        else:
            self.cell_dofs = np.column_stack([mesh.cells, nv + mesh.cell_edges])
            self.n_full = nv + len(mesh.edges)
            coords = np.vstack([mesh.vertices, mesh.vertices[mesh.edges].mean(axis=1)])
            bdofs = np.concatenate([mesh.boundary_vertices, nv + mesh.boundary_edges])
        self.dof_coords = coords
        is_boundary = np.zeros(self.n_full, dtype=bool)
        is_boundary[bdofs] = True
        self.boundary_dofs = np.flatnonzero(is_boundary)
        self.interior = np.flatnonzero(~is_boundary)
        self.full_to_interior = -np.ones(self.n_full, dtype=np.int64)
        self.full_to_interior[self.interior] = np.arange(self.interior.size)
        self._quad_cache = {}
        self._stiffness_cache = {}

        p = mesh.vertices[mesh.cells]
        self._origin = p[:, 0]
        self._jac = np.stack([p[:, i + 1] - p[:, 0] for i in range(self.dim)], axis=2)
        self._det = np.abs(np.linalg.det(self._jac))
        self._inv_t = np.swapaxes(np.linalg.inv(self._jac), 1, 2)

    @property
    def n(self) -> int:
        """Number of interior degrees of freedom."""
        return self.interior.size

    @property
    def h(self) -> float:
        return self.mesh.h

    # ------------------------------------------------------------ quadrature

    def quad(self, degree: int):
        """Physical points, weights, basis values and gradients for a rule."""
        if degree not in self._quad_cache:
            xi, w = cell_rule(self.dim, degree)
            vals, rgrads = reference_basis(self.dim, self.degree, xi)
            X = self._origin[:, None, :] + np.einsum("cij,qj->cqi", self._jac, xi)
            W = self._det[:, None] * w[None, :]
            grads = np.einsum("cij,qaj->cqai", self._inv_t, rgrads)
            self._quad_cache[degree] = (X, W, vals, grads)
        return self._quad_cache[degree]

    @property
    def default_degree(self) -> int:
        return 2 * self.degree

    # ------------------------------------------------------------- plumbing

    def _assemble_matrix(self, local) -> sps.csr_matrix:
        nloc = self.cell_dofs.shape[1]
        rows = np.repeat(self.cell_dofs, nloc, axis=1).ravel()
        cols = np.tile(self.cell_dofs, (1, nloc)).ravel()
        return sps.coo_matrix((local.ravel(), (rows, cols)), shape=(self.n_full,) * 2).tocsr()

    def _assemble_vector(self, local) -> np.ndarray:
        return np.bincount(self.cell_dofs.ravel(), weights=local.ravel(), minlength=self.n_full)

    def restrict(self, A_full) -> sps.csr_matrix:
        A = A_full[self.interior][:, self.interior]
        return sps.csr_matrix(A)

    def extend(self, u) -> np.ndarray:
        """Interior coefficient vector -> full vector with zero boundary dofs."""
        full = np.zeros(self.n_full)
        full[self.interior] = u
        return full

    def values_at_quad(self, u, degree: int) -> np.ndarray:
        """Values of the FE function at the physical points of a rule, (nc, nq)."""
        _, _, vals, _ = self.quad(degree)
        return self.extend(u)[self.cell_dofs] @ vals.T

    def field_at_quad(self, field: CoefficientField, t: float, degree: int) -> np.ndarray:
        X, _, _, _ = self.quad(degree)
        nc, nq, d = X.shape
        if field.dim != d:
            raise InvalidArgument(f"field {field.name} is {field.dim}D, space is {d}D")
        return field(t, X.reshape(-1, d)).reshape(nc, nq, d, d)

    # ------------------------------------------------------------- matrices

    def mass(self, full: bool = False, degree: int | None = None) -> sps.csr_matrix:
        X, W, vals, _ = self.quad(self.default_degree if degree is None else degree)
        local = np.einsum("cq,qi,qj->cij", W, vals, vals)
        M = self._assemble_matrix(local)
        return M if full else self.restrict(M)

    @cached_property
    def mass_matrix(self) -> sps.csr_matrix:
        return self.mass()

    @cached_property
    def mass_solver(self) -> SpdSolver:
        return SpdSolver(self.mass_matrix)

    def stiffness(self, field: CoefficientField, t: float, degree: int | None = None,
                  full: bool = False) -> sps.csr_matrix:
        degree = self.stiffness_degree(field) if degree is None else degree
        if degree < 1:
            raise InvalidArgument(f"quadrature degree must be >= 1, got {degree}")
        if field.separable and not full:
            key = (id(field.spatial), degree)
            if key not in self._stiffness_cache:
                self._stiffness_cache[key] = (field.spatial, self._stiffness(field.spatial, 0.0, degree, False))
            return field.time_factor(t) * self._stiffness_cache[key][1]
        return self._stiffness(field, t, degree, full)

    def _stiffness(self, field, t, degree, full):
        _, W, _, grads = self.quad(degree)
        A = self.field_at_quad(field, t, degree)
        local = np.einsum("cq,cqia,cqab,cqjb->cij", W, grads, A, grads)
        local = 0.5 * (local + np.swapaxes(local, 1, 2))
        K = self._assemble_matrix(local)
        return K if full else self.restrict(K)

    def stiffness_degree(self, field: CoefficientField) -> int:
        # exact for gradient products (degree 2r-2) plus two orders for non-polynomial a
        return 2 * self.degree

    @cached_property
    def reference_stiffness(self) -> sps.csr_matrix:
        """Identity-coefficient stiffness K0."""
        _, W, _, grads = self.quad(max(2 * self.degree - 2, 1))
        local = np.einsum("cq,cqia,cqja->cij", W, grads, grads)
        local = 0.5 * (local + np.swapaxes(local, 1, 2))
        return self.restrict(self._assemble_matrix(local))

    @cached_property
    def h1_gram(self) -> sps.csr_matrix:
        """Gram matrix K0 + M of the discrete H1 norm."""
        return (self.reference_stiffness + self.mass_matrix).tocsr()

    # ------------------------------------------------------------- vectors

    def load(self, f, degree: int | None = None, full: bool = False) -> np.ndarray:
        """Vector of (f, phi_i) for a spatial function f(X) -> (N,)."""
        degree = 2 * self.degree + 2 if degree is None else degree
        X, W, vals, _ = self.quad(degree)
        nc, nq, d = X.shape
        fv = np.broadcast_to(np.asarray(f(X.reshape(-1, d)), dtype=float), (nc * nq,))
        local = np.einsum("cq,qi->ci", W * fv.reshape(nc, nq), vals)
        b = self._assemble_vector(local)
        return b if full else b[self.interior]

    def energy_load(self, field: CoefficientField, t: float, grad_v, degree: int | None = None) -> np.ndarray:
        """Vector of a(t; v, phi_i) for v given through its gradient."""
        degree = 2 * self.degree + 2 if degree is None else degree
        X, W, _, grads = self.quad(degree)
        nc, nq, d = X.shape
        gv = np.asarray(grad_v(X.reshape(-1, d)), dtype=float).reshape(nc, nq, d)
        A = self.field_at_quad(field, t, degree)
        local = np.einsum("cq,cqab,cqb,cqia->ci", W, A, gv, grads)
        return self._assemble_vector(local)[self.interior]

    def interpolate(self, fn) -> np.ndarray:
        """Nodal interpolant at interior dofs of fn(X) -> (N,)."""
        return np.asarray(fn(self.dof_coords[self.interior]), dtype=float).reshape(-1)

    def l2_norm(self, u) -> float:
        u = np.asarray(u, dtype=float)
        return float(np.sqrt(max(u @ (self.mass_matrix @ u), 0.0)))

    def evaluate(self, u, points, grad: bool = False):
        """Point values of the FE function (point location by barycentrics).

        With ``grad=True`` also returns the gradients, shape (N, d).
        """
        P = np.atleast_2d(np.asarray(points, dtype=float))
        full = self.extend(u)
        out = np.empty(P.shape[0])
        gout = np.empty((P.shape[0], self.dim))
        inv_jac = np.linalg.inv(self._jac)
        for s in range(0, P.shape[0], 256):
            chunk = P[s:s + 256]
            xi = np.einsum("cij,pcj->pci", inv_jac, chunk[:, None, :] - self._origin[None])
            lam0 = 1.0 - xi.sum(axis=2)
            ok = (xi >= -1e-10).all(axis=2) & (lam0 >= -1e-10)
            if not ok.any(axis=1).all():
                raise InvalidArgument("point outside the mesh")
            cell = ok.argmax(axis=1)
            xi_c = xi[np.arange(chunk.shape[0]), cell]
            vals, rgrads = reference_basis(self.dim, self.degree, xi_c)
            coef = full[self.cell_dofs[cell]]
            out[s:s + chunk.shape[0]] = np.einsum("pa,pa->p", vals, coef)
            if grad:
                g = np.einsum("pij,paj->pai", self._inv_t[cell], rgrads)
                gout[s:s + chunk.shape[0]] = np.einsum("pai,pa->pi", g, coef)
        return (out, gout) if grad else out

    def export_coo(self, A, path) -> None:
        """Write a matrix in Matrix Market coordinate text format."""
        scipy.io.mmwrite(str(path), sps.coo_matrix(A), precision=17)


# ---------------------------------------------------------------- operations


def assemble_mass(space: FeSpace, full: bool = False) -> sps.csr_matrix:
    return space.mass(full=full)


def assemble_stiffness(space: FeSpace, field: CoefficientField, t: float,
                       degree: int | None = None) -> sps.csr_matrix:
    return space.stiffness(field, t, degree)


def assemble_averaged_stiffness(space: FeSpace, field: CoefficientField, grid, m: int,
                                q: int = 4, degree: int | None = None) -> sps.csr_matrix:
    """(1/k_m) int_{I_m} K(t) dt by q-point Gauss-Legendre in time."""
    if q < 1:
        raise InvalidArgument(f"need q >= 1 time quadrature points, got {q}")
    times, weights = grid.gauss_points(m, q)
    if field.autonomous:
        return space.stiffness(field, float(times[0]), degree)
    if field.separable:
        b = sum(w * field.time_factor(float(t)) for t, w in zip(times, weights))
        return b * space.stiffness(field.spatial, 0.0, degree)
    K = None
    for t, w in zip(times, weights):
        Kt = w * space.stiffness(field, float(t), degree)
        K = Kt if K is None else K + Kt
    return K.tocsr()


def l2_project(space: FeSpace, v, degree: int | None = None) -> np.ndarray:
    """Coefficients of the orthogonal L2 projection onto V_h."""
    b = space.load(v, degree)
    return space.mass_solver.solve(b, check=True)


def ritz_project(space: FeSpace, field: CoefficientField, t: float, grad_v,
                 degree: int | None = None) -> np.ndarray:
    """R_h(t) v through the gradient of v."""
    if grad_v is None or not callable(grad_v):
        raise InvalidArgument("Ritz projection needs a gradient evaluator")
    K = space.stiffness(field, t, degree)
    return SpdSolver(K).solve(space.energy_load(field, t, grad_v), check=True)


def ritz_project_avg(space: FeSpace, field: CoefficientField, grid, m: int, grad_v,
                     q: int = 4, degree: int | None = None) -> np.ndarray:
    """R_{kh,m} v with interval-averaged coefficients."""
    if grad_v is None or not callable(grad_v):
        raise InvalidArgument("Ritz projection needs a gradient evaluator")
    times, weights = grid.gauss_points(m, q)
    Kbar = assemble_averaged_stiffness(space, field, grid, m, q, degree)
    b = sum(w * space.energy_load(field, float(t), grad_v) for t, w in zip(times, weights))
    return SpdSolver(Kbar).solve(b, check=True)
