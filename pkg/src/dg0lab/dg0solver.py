"""dG(0)-in-time, cG(r)-in-space time stepping.

On each interval I_m the scheme solves

    (M + k_m Kbar_m) u_m = M u_{m-1} + k_m bbar_m,    u_0 = P_h u0,

where Kbar_m and bbar_m are interval averages (Gauss-Legendre in time) of
the stiffness matrix and of the load vector.  The backward-Euler mode
evaluates both at t_m instead and exists only as a point of comparison.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field as dc_field
from typing import Callable

import numpy as np

from .coeffs import CoefficientField
from .errors import InvalidArgument
from .femspace import FeSpace, assemble_averaged_stiffness, l2_project
from .linalg import SpdSolver
from .problems import ExactSolution, ProblemData, resolve
from .timegrid import TimeGrid

SCHEMES = ("dg0", "backward-euler")


class DiscreteExact:
    """A time-independent FE function used as an exact solution."""

    time_constant = True

    def __init__(self, space: FeSpace, coeffs):
        self.space = space
        self.coeffs = np.asarray(coeffs, dtype=float)
        self.dim = space.dim
        self.name = "discrete"

    def value(self, t, X):
        return self.space.evaluate(self.coeffs, X)

    def grad(self, t, X):
        return self.space.evaluate(self.coeffs, X, grad=True)[1]

    def dt(self, t, X):
        return np.zeros(np.atleast_2d(X).shape[0])

    def at(self, t):
        return lambda X: self.value(t, X)

    def grad_at(self, t):
        return lambda X: self.grad(t, X)


@dataclass(eq=False)
class ParabolicProblem:
    """Data of u_t + A(t)u = f, u(0) = u0 with homogeneous Dirichlet data.

    ``load`` overrides ``f`` with a discrete functional t -> (f(t), phi_i)
    on interior dofs; ``u0_vector`` overrides ``u0`` with coefficients of
    P_h u0.  ``quad_degree`` is the spatial rule used for loads (default
    2r+2) and ``stiffness_quad`` the one used for stiffness matrices.
    """

    space: FeSpace
    grid: TimeGrid
    field: CoefficientField
    f: Callable | None = None
    u0: Callable | None = None
    exact: ExactSolution | DiscreteExact | None = None
    load: Callable | None = None
    u0_vector: np.ndarray | None = None
    time_points: int = 4
    quad_degree: int | None = None
    stiffness_quad: int | None = None
    name: str = "custom"
    _kbar: dict = dc_field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.time_points < 1:
            raise InvalidArgument(f"need at least one time quadrature point, got {self.time_points}")
        if self.field.dim != self.space.dim:
            raise InvalidArgument("coefficient field and space dimensions differ")

    @classmethod
    def from_data(cls, data: ProblemData, space: FeSpace, grid: TimeGrid, **kw) -> ParabolicProblem:
        return cls(space, grid, data.field, f=data.f, u0=data.u0, exact=data.exact,
                   name=data.name, **kw)

    @classmethod
    def from_corpus(cls, name: str, space: FeSpace, grid: TimeGrid, **kw) -> ParabolicProblem:
        return cls.from_data(resolve(name, space.dim), space, grid, **kw)

    def load_at(self, t: float) -> np.ndarray:
        if self.load is not None:
            return np.asarray(self.load(t), dtype=float)
        if self.f is None:
            return np.zeros(self.space.n)
        return self.space.load(lambda X: self.f(t, X), self.quad_degree)

    def initial_vector(self) -> np.ndarray:
        if self.u0_vector is not None:
            return np.asarray(self.u0_vector, dtype=float).copy()
        if self.u0 is None:
            return np.zeros(self.space.n)
        return l2_project(self.space, self.u0, self.quad_degree)

    def kbar(self, m: int, q: int | None = None):
        q = self.time_points if q is None else q
        key = (m, q)
        if key not in self._kbar:
            self._kbar[key] = assemble_averaged_stiffness(
                self.space, self.field, self.grid, m, q, self.stiffness_quad
            )
        return self._kbar[key]

    def stiffness_at(self, t: float):
        return self.space.stiffness(self.field, t, self.stiffness_quad)


def average_load(problem: ParabolicProblem, m: int, q: int | None = None) -> np.ndarray:
    """Load vector of the interval average of f over I_m."""
    q = problem.time_points if q is None else q
    if q < 1:
        raise InvalidArgument(f"need q >= 1, got {q}")
    times, weights = problem.grid.gauss_points(m, q)
    b = np.zeros(problem.space.n)
    for t, w in zip(times, weights):
        b += w * problem.load_at(float(t))
    return b


def _system(problem: ParabolicProblem, m: int, scheme: str):
    if scheme == "dg0":
        return problem.kbar(m), average_load(problem, m)
    if scheme == "backward-euler":
        t = problem.grid.nodes[m]
        return problem.stiffness_at(t), problem.load_at(t)
    raise InvalidArgument(f"unknown scheme {scheme!r}")


def step(problem: ParabolicProblem, m: int, u_prev, scheme: str = "dg0") -> np.ndarray:
    """One time step on I_m starting from the value on I_{m-1}."""
    K, b = _system(problem, m, scheme)
    k = problem.grid.step(m)
    M = problem.space.mass_matrix
    return SpdSolver(M + k * K).solve(M @ np.asarray(u_prev, dtype=float) + k * b, check=True)


@dataclass(eq=False)
class DgSolution:
    """Piecewise-constant trajectory: ``values[m-1]`` is u_m on I_m."""

    grid: TimeGrid
    space: FeSpace
    u0h: np.ndarray
    values: np.ndarray
    loads: np.ndarray
    kbar: list
    scheme: str = "dg0"

    def at(self, t: float) -> np.ndarray:
        """Left-continuous evaluation: u_m on (t_{m-1}, t_m], P_h u0 at t = 0."""
        m = self.grid.interval_of(t)
        return self.u0h if m == 0 else self.values[m - 1]

    def on(self, m: int) -> np.ndarray:
        return self.values[m - 1]

    def with_values(self, values) -> DgSolution:
        return DgSolution(self.grid, self.space, self.u0h, np.asarray(values, dtype=float),
                          self.loads, self.kbar, self.scheme)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["m", "t_m", "norm_u_m", "norm_jump"])
        for m, (u, j) in enumerate(zip(self.values, jumps(self)), start=1):
            w.writerow([m, _fmt(self.grid.nodes[m]), _fmt(self.space.l2_norm(u)),
                        _fmt(self.space.l2_norm(j))])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps({
            "scheme": self.scheme,
            "nodes": [float(t) for t in self.grid.nodes],
            "u0h": [float(x) for x in self.u0h],
            "values": [[float(x) for x in u] for u in self.values],
        })


def _fmt(x: float) -> str:
    return f"{float(x):.17g}"


def solve(problem: ParabolicProblem, scheme: str = "dg0") -> DgSolution:
    if scheme not in SCHEMES:
        raise InvalidArgument(f"unknown scheme {scheme!r}")
    grid = problem.grid
    u = problem.initial_vector()
    u0h = u.copy()
    values = np.empty((grid.M, problem.space.n))
    loads = np.empty_like(values)
    kbar = []
    M = problem.space.mass_matrix
    for m in range(1, grid.M + 1):
        K, b = _system(problem, m, scheme)
        k = grid.step(m)
        u = SpdSolver(M + k * K).solve(M @ u + k * b, check=True)
        values[m - 1] = u
        loads[m - 1] = b
        kbar.append(K)
    return DgSolution(grid, problem.space, u0h, values, loads, kbar, scheme)


def jumps(sol: DgSolution) -> np.ndarray:
    """Rows [u]_{m-1} = u_m - u_{m-1}, with u_0 = P_h u0."""
    prev = np.vstack([sol.u0h[None, :], sol.values[:-1]])
    return sol.values - prev


def _dual_norm(space: FeSpace, r) -> float:
    # L2 norm of the FE function M^{-1} r
    return float(np.sqrt(max(r @ space.mass_solver.solve(r), 0.0)))


def residual_identity_check(sol: DgSolution, relative: bool = True) -> float:
    """max_m || [u]_{m-1}/k_m + A_m u_m - P_h f_m ||_{L2}.

    With ``relative`` the residual is divided by the largest of the three
    terms' norms (zero data gives zero).
    """
    space = sol.space
    M = space.mass_matrix
    J = jumps(sol)
    worst, scale = 0.0, 0.0
    for m in range(1, sol.grid.M + 1):
        k = sol.grid.step(m)
        ju = M @ J[m - 1] / k
        au = sol.kbar[m - 1] @ sol.values[m - 1]
        b = sol.loads[m - 1]
        worst = max(worst, _dual_norm(space, ju + au - b))
        scale = max(scale, _dual_norm(space, ju), _dual_norm(space, au), _dual_norm(space, b))
    if relative:
        return worst / scale if scale > 0 else worst
    return worst


def galerkin_orthogonality_check(problem: ParabolicProblem, sol: DgSolution,
                                 order: int = 10) -> float:
    """max over (m, i) of |B(u - u_kh, chi_i 1_{I_m})|.

    Time integrals use an ``order``-point Gauss rule on each interval, so the
    result measures the quadrature error committed by the scheme's averages.
    """
    exact = problem.exact
    if exact is None:
        raise InvalidArgument("Galerkin orthogonality check needs an exact solution")
    space, grid = problem.space, problem.grid
    M = space.mass_matrix
    deg = problem.quad_degree
    # the energy term must use the stiffness rule, or discrete solutions leave a residual
    kdeg = problem.stiffness_quad or space.stiffness_degree(problem.field)
    ex_prev = None
    worst = 0.0
    for m in range(1, grid.M + 1):
        k = grid.step(m)
        times, weights = grid.gauss_points(m, order)
        ex_now = space.load(exact.at(grid.nodes[m]), deg)
        # B(u, phi) for smooth u: time derivative integrates to the increment,
        # the first interval also carries the initial term (u(0), chi)
        bu = ex_now - (ex_prev if m > 1 else 0.0)
        bh = M @ (sol.values[m - 1] - (sol.values[m - 2] if m > 1 else 0.0))
        for t, w in zip(times, weights):
            t = float(t)
            bu = bu + k * w * space.energy_load(problem.field, t, exact.grad_at(t), kdeg)
            bh = bh + k * w * (problem.stiffness_at(t) @ sol.values[m - 1])
        worst = max(worst, float(np.abs(bu - bh).max()) if bu.size else 0.0)
        ex_prev = ex_now
    return worst


def export_csv(sol: DgSolution, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(sol.to_csv())


def export_json(sol: DgSolution, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(sol.to_json())
