"""Built-in corpus of exact solutions, loads and initial data.

Manufactured loads are derived symbolically: f = u_t - div(a grad u).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import sympy as sp

from .coeffs import SPACE_SYMBOLS, CoefficientField, get_field, t_sym
from .errors import InvalidArgument


@dataclass(eq=False)
class ExactSolution:
    """Vectorised u(t, X), grad u(t, X) -> (N, d) and u_t(t, X)."""

    value: Callable
    grad: Callable
    dt: Callable
    dim: int
    name: str = "exact"
    time_constant: bool = False

    def at(self, t):
        return lambda X: self.value(t, X)

    def grad_at(self, t):
        return lambda X: self.grad(t, X)


def _lambdify_scalar(expr, dim):
    fn = sp.lambdify((t_sym,) + SPACE_SYMBOLS[:dim], expr, "numpy")

    def ev(t, X):
        X = np.atleast_2d(X)
        return np.broadcast_to(fn(float(t), *[X[:, c] for c in range(dim)]), (X.shape[0],)).astype(float)

    return ev


def _lambdify_vector(exprs, dim):
    parts = [_lambdify_scalar(e, dim) for e in exprs]

    def ev(t, X):
        return np.column_stack([p(t, X) for p in parts])

    return ev


def symbolic_exact(expr, dim: int, name: str = "exact") -> ExactSolution:
    xs = SPACE_SYMBOLS[:dim]
    return ExactSolution(
        value=_lambdify_scalar(expr, dim),
        grad=_lambdify_vector([sp.diff(expr, x) for x in xs], dim),
        dt=_lambdify_scalar(sp.diff(expr, t_sym), dim),
        dim=dim,
        name=name,
        time_constant=not expr.has(t_sym),
    )


def manufactured_rhs_expr(u_expr, field: CoefficientField):
    """f = u_t - sum_ij d_j (a_ij d_i u) from the symbolic field."""
    if field.expr is None:
        raise InvalidArgument("manufactured loads need a symbolic coefficient field")
    dim = field.dim
    xs = SPACE_SYMBOLS[:dim]
    a = field.expr
    flux = sum(sp.diff(a[i, j] * sp.diff(u_expr, xs[i]), xs[j]) for i in range(dim) for j in range(dim))
    return sp.diff(u_expr, t_sym) - flux


def _prod_sin(dim):
    return sp.Mul(*[sp.sin(sp.pi * x) for x in SPACE_SYMBOLS[:dim]])


def _prod_poly(dim):
    return sp.Mul(*[x * (1 - x) for x in SPACE_SYMBOLS[:dim]])


EXACT_EXPRS = {
    "exp-sine": lambda d: sp.exp(-t_sym) * _prod_sin(d),
    "steady-sine": _prod_sin,
    "steady-poly": _prod_poly,
    "zero": lambda d: sp.Integer(0),
}

LOAD_EXPRS = {
    "zero": lambda d: sp.Integer(0),
    "one": lambda d: sp.Integer(1),
    "sine-load": _prod_sin,
    "oscillating-load": lambda d: sp.cos(2 * sp.pi * t_sym) * _prod_sin(d),
}

INITIAL_EXPRS = {
    "zero": lambda d: sp.Integer(0),
    "sine": _prod_sin,
}


@dataclass(frozen=True)
class ProblemSpec:
    """A corpus entry: ids resolved against the tables above."""

    field: str
    rhs: str  # "manufactured" or a LOAD_EXPRS key
    u0: str  # "exact" or an INITIAL_EXPRS key
    exact: str | None = None
    dims: tuple[int, ...] = (1, 2)


PROBLEMS = {
    "heat-lipschitz": ProblemSpec("linear-time", "manufactured", "exact", "exp-sine"),
    "heat-sine": ProblemSpec("sine-time", "manufactured", "exact", "exp-sine"),
    "heat-quadratic": ProblemSpec("quadratic-time", "manufactured", "exact", "exp-sine"),
    "heat-separable": ProblemSpec("separable", "manufactured", "exact", "exp-sine"),
    "heat-mixed": ProblemSpec("diag-mixed", "manufactured", "exact", "exp-sine", dims=(2,)),
    "heat-sqrt": ProblemSpec("sqrt-time", "manufactured", "exact", "exp-sine"),
    "heat-autonomous": ProblemSpec("identity", "manufactured", "exact", "exp-sine"),
    "steady-sine": ProblemSpec("sine-time", "manufactured", "exact", "steady-sine"),
    "steady-mixed": ProblemSpec("diag-mixed", "manufactured", "exact", "steady-sine", dims=(2,)),
    "steady-poly": ProblemSpec("linear-time", "manufactured", "exact", "steady-poly"),
    "forced-sine": ProblemSpec("sine-time", "sine-load", "zero"),
    "forced-lipschitz": ProblemSpec("linear-time", "oscillating-load", "zero"),
    "forced-initial": ProblemSpec("linear-time", "sine-load", "sine"),
    "zero": ProblemSpec("linear-time", "zero", "zero", "zero"),
}


@dataclass(eq=False)
class ProblemData:
    """Resolved analytic data of a corpus problem in a given dimension."""

    name: str
    field: CoefficientField
    f: Callable | None
    u0: Callable | None
    exact: ExactSolution | None
    zero_load: bool = False
    zero_initial: bool = False


def resolve(name: str | None = None, dim: int = 1, *, field=None, rhs=None, u0=None,
            exact=None) -> ProblemData:
    """Corpus problem by id, or an inline combination of component ids."""
    if name is not None:
        try:
            spec = PROBLEMS[name]
        except KeyError:
            raise InvalidArgument(f"unknown problem {name!r}") from None
        if dim not in spec.dims:
            raise InvalidArgument(f"problem {name!r} is not defined in {dim}D")
        field, rhs, u0, exact = (
            field or spec.field, rhs or spec.rhs, u0 or spec.u0, exact or spec.exact
        )
    else:
        name = f"{field}/{rhs}/{u0}/{exact}"
    if field is None or rhs is None or u0 is None:
        raise InvalidArgument("a problem needs field, rhs and u0 ids")
    fld = get_field(field, dim)
    u_expr = None
    if exact is not None:
        if exact not in EXACT_EXPRS:
            raise InvalidArgument(f"unknown exact solution {exact!r}")
        u_expr = EXACT_EXPRS[exact](dim)
    if rhs == "manufactured":
        if u_expr is None:
            raise InvalidArgument("manufactured load needs an exact solution")
        f_expr = manufactured_rhs_expr(u_expr, fld)
    elif rhs in LOAD_EXPRS:
        f_expr = LOAD_EXPRS[rhs](dim)
    else:
        raise InvalidArgument(f"unknown load {rhs!r}")
    if u0 == "exact":
        if u_expr is None:
            raise InvalidArgument("initial datum 'exact' needs an exact solution")
        u0_expr = u_expr.subs(t_sym, 0)
    elif u0 in INITIAL_EXPRS:
        u0_expr = INITIAL_EXPRS[u0](dim)
    else:
        raise InvalidArgument(f"unknown initial datum {u0!r}")
    f_fn = _lambdify_scalar(sp.simplify(f_expr), dim)
    u0_fn = _lambdify_scalar(u0_expr, dim)
    return ProblemData(
        name=name,
        field=fld,
        f=f_fn,
        u0=lambda X: u0_fn(0.0, X),
        exact=None if u_expr is None else symbolic_exact(u_expr, dim, exact),
        zero_load=sp.simplify(f_expr) == 0,
        zero_initial=sp.simplify(u0_expr) == 0,
    )
