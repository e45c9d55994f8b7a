"""Time-dependent diffusion coefficients a_ij(t, x) and their audits.

A field is a vectorised evaluator ``(t, X) -> A`` with ``X`` of shape (N, d)
and ``A`` of shape (N, d, d).  Fields of the form b(t) A0(x) carry their
factors so that assembly can reuse the spatial stiffness matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Callable

import numpy as np
import sympy as sp

from .errors import InsufficientData, InvalidArgument, InvalidField

t_sym, x_sym, y_sym = sp.symbols("t x y", real=True)
SPACE_SYMBOLS = (x_sym, y_sym)


@dataclass(eq=False)
class CoefficientField:
    evaluator: Callable[[float, np.ndarray], np.ndarray]
    dim: int
    alpha_declared: float
    holder_exponent_declared: float = 1.0
    lipschitz_space_bound_declared: float | None = None
    name: str = "custom"
    time_factor: Callable[[float], float] | None = None
    spatial: CoefficientField | None = None
    autonomous: bool = False
    expr: sp.Matrix | None = dc_field(default=None, repr=False)

    def __call__(self, t, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.dim:
            raise InvalidArgument(f"field {self.name} is {self.dim}D, points are {X.shape[1]}D")
        A = np.asarray(self.evaluator(float(t), X), dtype=float)
        return np.broadcast_to(A, (X.shape[0], self.dim, self.dim))

    @property
    def separable(self) -> bool:
        return self.time_factor is not None and self.spatial is not None


def separable_field(b, spatial: CoefficientField, **kw) -> CoefficientField:
    """Field b(t) * spatial(x); ``spatial`` must be autonomous."""
    if not spatial.autonomous:
        raise InvalidField("spatial factor of a separable field must be autonomous")

    def evaluator(t, X):
        return b(t) * spatial(0.0, X)

    kw.setdefault("name", f"separable({spatial.name})")
    return CoefficientField(evaluator, spatial.dim, time_factor=b, spatial=spatial, **kw)


def _lambdify_matrix(mat: sp.Matrix, dim: int):
    syms = (t_sym,) + SPACE_SYMBOLS[:dim]
    entries = [[sp.lambdify(syms, mat[i, j], "numpy") for j in range(dim)] for i in range(dim)]

    def evaluator(t, X):
        n = X.shape[0]
        out = np.empty((n, dim, dim))
        args = [t] + [X[:, c] for c in range(dim)]
        for i in range(dim):
            for j in range(dim):
                out[:, i, j] = np.broadcast_to(entries[i][j](*args), (n,))
        return out

    return evaluator


def symbolic_field(mat, dim: int, alpha: float, **kw) -> CoefficientField:
    """Build a field from a sympy matrix in the symbols t, x, y."""
    mat = sp.Matrix(mat)
    if mat.shape != (dim, dim):
        raise InvalidField(f"expected a {dim}x{dim} coefficient matrix")
    if sp.simplify(mat - mat.T) != sp.zeros(dim, dim):
        raise InvalidField("coefficient matrix must be symmetric")
    autonomous = all(not e.has(t_sym) for e in mat)
    return CoefficientField(
        _lambdify_matrix(mat, dim), dim, alpha, autonomous=autonomous, expr=mat, **kw
    )


def symbolic_separable(b_expr, a0_mat, dim: int, alpha: float, **kw) -> CoefficientField:
    spatial = symbolic_field(a0_mat, dim, alpha=1.0, name=kw.get("name", "") + ":space")
    b_fn = sp.lambdify(t_sym, b_expr, "numpy")
    field = separable_field(lambda t: float(b_fn(t)), spatial, alpha_declared=alpha, **kw)
    field.expr = sp.Matrix(a0_mat) * b_expr
    return field


def _scalar(b_expr, dim, alpha, holder, lip, name):
    return symbolic_separable(
        b_expr, sp.eye(dim), dim, alpha,
        holder_exponent_declared=holder, lipschitz_space_bound_declared=lip, name=name,
    )


def _identity(dim):
    f = symbolic_field(sp.eye(dim), dim, 1.0, lipschitz_space_bound_declared=1.0, name="identity")
    f.time_factor, f.spatial = (lambda t: 1.0), f
    return f


def _diag_mixed(dim):
    if dim != 2:
        raise InvalidField("field 'diag-mixed' is defined on 2D domains only")
    mat = sp.diag(1 + t_sym, 2 + sp.cos(x_sym))
    return symbolic_field(
        mat, 2, 1.0, holder_exponent_declared=1.0, lipschitz_space_bound_declared=3.0,
        name="diag-mixed",
    )


def _separable(dim):
    a0 = (1 + x_sym / 2) * sp.eye(dim)
    return symbolic_separable(
        1 + sp.sin(2 * sp.pi * t_sym) / 2, a0, dim, 0.5,
        holder_exponent_declared=1.0, lipschitz_space_bound_declared=1.5, name="separable",
    )


FIELD_BUILDERS = {
    "identity": _identity,
    "linear-time": lambda d: _scalar(1 + t_sym, d, 1.0, 1.0, 2.0, "linear-time"),
    "quadratic-time": lambda d: _scalar(1 + t_sym**2, d, 1.0, 1.0, 2.0, "quadratic-time"),
    "sine-time": lambda d: _scalar(
        1 + sp.sin(2 * sp.pi * t_sym) / 2, d, 0.5, 1.0, 1.5, "sine-time"
    ),
    "sqrt-time": lambda d: _scalar(1 + sp.sqrt(t_sym), d, 1.0, 0.5, 2.0, "sqrt-time"),
    "diag-mixed": _diag_mixed,
    "separable": _separable,
}


def get_field(name: str, dim: int) -> CoefficientField:
    try:
        builder = FIELD_BUILDERS[name]
    except KeyError:
        raise InvalidArgument(f"unknown coefficient field {name!r}") from None
    return builder(dim)


# ---------------------------------------------------------------- audits


def default_space_samples(dim: int, n: int = 9) -> np.ndarray:
    g = np.linspace(0.0, 1.0, n)
    if dim == 1:
        return g[:, None]
    X, Y = np.meshgrid(g, g, indexing="ij")
    return np.column_stack([X.ravel(), Y.ravel()])


@dataclass(frozen=True)
class EllipticityReport:
    alpha_measured: float
    alpha_declared: float
    violated: bool


def ellipticity_audit(field: CoefficientField, t_samples, x_samples) -> EllipticityReport:
    """Smallest eigenvalue of a(t, x) over the sample set."""
    t_samples = np.atleast_1d(np.asarray(t_samples, dtype=float))
    X = np.atleast_2d(np.asarray(x_samples, dtype=float))
    if t_samples.size == 0 or X.size == 0:
        raise InsufficientData("ellipticity audit needs non-empty sample sets")
    alpha = np.inf
    for t in t_samples:
        A = field(t, X)
        scale = max(1.0, float(np.abs(A).max()))
        if np.abs(A - np.swapaxes(A, 1, 2)).max() > 1e-14 * scale:
            raise InvalidField(f"field {field.name} is not symmetric at t={t}")
        alpha = min(alpha, float(np.linalg.eigvalsh(A).min()))
    return EllipticityReport(alpha, field.alpha_declared, alpha < field.alpha_declared - 1e-12)


def modulus_at(field: CoefficientField, t1: float, t2: float, x_samples) -> float:
    """sup over samples of max_ij |a_ij(t1, x) - a_ij(t2, x)|."""
    X = np.atleast_2d(np.asarray(x_samples, dtype=float))
    return float(np.abs(field(t1, X) - field(t2, X)).max())


@dataclass(frozen=True)
class ModulusReport:
    separations: np.ndarray
    omega: np.ndarray
    C: float
    gamma: float
    passes: bool
    vacuous: bool

    def omega_fit(self, s):
        """Fitted power law C s^gamma (zero for autonomous fields)."""
        if self.vacuous:
            return np.zeros_like(np.asarray(s, dtype=float))
        return self.C * np.asarray(s, dtype=float) ** self.gamma

    def as_dict(self) -> dict:
        return {
            "separations": self.separations.tolist(),
            "omega": self.omega.tolist(),
            "C": self.C,
            "gamma": self.gamma,
            "passes": self.passes,
            "vacuous": self.vacuous,
        }


# margin on the strict exponent test; an exact square-root law fits 1/2 to rounding
GAMMA_MARGIN = 1e-6


def temporal_modulus_audit(
    field: CoefficientField,
    dyadic_levels: int,
    T: float = 1.0,
    t_points: int = 33,
    x_samples=None,
) -> ModulusReport:
    """Estimate omega(s) at s = T 2^-j and fit a power law C s^gamma.

    The field passes when gamma exceeds 1/2, which makes the integral of
    omega(t) t^{-3/2} over (0, T] finite.
    """
    if dyadic_levels < 3:
        raise InsufficientData(f"need at least 3 dyadic levels, got {dyadic_levels}")
    if x_samples is None:
        x_samples = default_space_samples(field.dim)
    X = np.atleast_2d(np.asarray(x_samples, dtype=float))
    seps = T * 2.0 ** -np.arange(1, dyadic_levels + 1)
    omega = np.empty_like(seps)
    for j, s in enumerate(seps):
        starts = np.linspace(0.0, T - s, t_points)
        omega[j] = max(modulus_at(field, t1, t1 + s, X) for t1 in starts)
    scale = max(1.0, float(np.abs(field(0.0, X)).max()))
    if np.all(omega <= 1e-14 * scale):
        return ModulusReport(seps, omega, 0.0, np.inf, True, True)
    if np.any(omega <= 0):
        raise InsufficientData("modulus vanishes at some separations but not all")
    gamma, logC = np.polyfit(np.log(seps), np.log(omega), 1)
    return ModulusReport(seps, omega, float(np.exp(logC)), float(gamma),
                         bool(gamma > 0.5 + GAMMA_MARGIN), False)
