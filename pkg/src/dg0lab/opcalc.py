"""Block realisation of the discrete operator calculus and its norm audits.

Operators act on interior coefficient vectors.  The discrete operator of
interval m is A_m = M^{-1} Kbar_m; the shifted operator is

    Atilde_m = (1 + k_m mu) A_m + mu Id = M^{-1} Ktilde_m,
    Ktilde_m = (1 + k_m mu) Kbar_m + mu M,

and the rational propagator freezes the operator at interval m:

    Rtilde_{m,l} = prod_{j=l..m} (Id + k_j Atilde_m)^{-1}.

Norms are taken in the mass geometry (discrete L2), the (K0 + M) geometry
(discrete H1) and its dual (discrete H^-1).  mu = 0 gives the untransformed
operators.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field as dc_field

import numpy as np
import scipy.linalg as sla

from .coeffs import CoefficientField, ModulusReport, temporal_modulus_audit
from .errors import InvalidArgument, ResourceLimit
from .femspace import FeSpace, assemble_averaged_stiffness
from .linalg import dense, gram_power_norm, lanczos_norm
from .timegrid import TimeGrid

DEFAULT_BUDGET = 4000
DEFAULT_MU_SWEEP = (0.0, 1.0, 4.0, 16.0, 64.0, 256.0)
NORM_TOL = 1e-13


def _sqrt_pair(G):
    w, V = np.linalg.eigh(0.5 * (G + G.T))
    if w.size and w.min() <= 0:
        raise InvalidArgument("Gram matrix is not positive definite")
    return (V * np.sqrt(w)) @ V.T, (V / np.sqrt(w)) @ V.T


class NormGeometry:
    """Square roots of the L2, H1 and H^-1 Gram matrices on V_h."""

    def __init__(self, mass, h1_gram):
        self.mass = dense(mass)
        self.h1 = dense(h1_gram)
        self.hm1 = self.mass @ np.linalg.solve(self.h1, self.mass)
        self.hm1 = 0.5 * (self.hm1 + self.hm1.T)
        self._roots = {
            "l2": _sqrt_pair(self.mass),
            "h1": _sqrt_pair(self.h1),
            "hm1": _sqrt_pair(self.hm1),
        }

    def root(self, name):
        try:
            return self._roots[name]
        except KeyError:
            raise InvalidArgument(f"unknown norm {name!r}") from None

    def symmetrized(self, B, src="l2", dst="l2"):
        """Y^{1/2} B X^{-1/2}: its spectral norm is ||B||_{X->Y}."""
        return self.root(dst)[0] @ B @ self.root(src)[1]

    def norm(self, B, src="l2", dst="l2", method="lanczos", tol=NORM_TOL) -> float:
        C = self.symmetrized(np.asarray(B, dtype=float), src, dst)
        if not np.any(C):
            return 0.0
        if method == "svd":
            return float(np.linalg.norm(C, 2))
        CtC = C.T @ C
        if method == "lanczos":
            return lanczos_norm(lambda X: CtC @ X, C.shape[1])
        if method == "power":
            return gram_power_norm(lambda X: CtC @ X, lambda X: X, C.shape[1], tol=tol)
        raise InvalidArgument(f"unknown norm method {method!r}")

    def functional_norm(self, K, src="h1", method="lanczos", tol=NORM_TOL) -> float:
        """||M^{-1}K||_{src -> H^-1}, i.e. K read as a map into dual vectors."""
        return self.norm(np.linalg.solve(self.mass, dense(K)), src, "hm1", method, tol)


class OperatorCalculus:
    """Dense blocks R, Q, L, D (and their mu-transformed versions)."""

    def __init__(self, mass, kbars, grid: TimeGrid, mu: float = 0.0, h1_gram=None,
                 budget: int = DEFAULT_BUDGET, norm_method: str = "lanczos"):
        self.mass = dense(mass)
        n = self.mass.shape[0]
        if grid.M * n > budget:
            raise ResourceLimit(f"M*dofs = {grid.M * n} exceeds the budget {budget}")
        if len(kbars) != grid.M:
            raise InvalidArgument("need one averaged stiffness per interval")
        if mu < 0:
            raise InvalidArgument(f"mu must be non-negative, got {mu}")
        self.n = n
        self.grid = grid
        self.mu = float(mu)
        self.budget = budget
        self.norm_method = norm_method
        self.kbars = [dense(K) for K in kbars]
        self.steps = grid.steps
        self.h1_gram = None if h1_gram is None else dense(h1_gram)
        self._geometry = None
        self._kt = [(1.0 + k * self.mu) * K + self.mu * self.mass
                    for k, K in zip(self.steps, self.kbars)]
        self._factors = {}
        self._rows = {}

    # ----------------------------------------------------------- builders

    @classmethod
    def from_space(cls, space: FeSpace, field: CoefficientField, grid: TimeGrid,
                   mu: float = 0.0, q: int = 4, **kw) -> OperatorCalculus:
        if grid.M * space.n > kw.get("budget", DEFAULT_BUDGET):
            raise ResourceLimit(f"M*dofs = {grid.M * space.n} exceeds the budget")
        kbars = [assemble_averaged_stiffness(space, field, grid, m, q) for m in range(1, grid.M + 1)]
        return cls(space.mass_matrix, kbars, grid, mu, space.h1_gram, **kw)

    @classmethod
    def from_problem(cls, problem, mu: float = 0.0, **kw) -> OperatorCalculus:
        space, grid = problem.space, problem.grid
        if grid.M * space.n > kw.get("budget", DEFAULT_BUDGET):
            raise ResourceLimit(f"M*dofs = {grid.M * space.n} exceeds the budget")
        kbars = [problem.kbar(m) for m in range(1, grid.M + 1)]
        return cls(space.mass_matrix, kbars, grid, mu, space.h1_gram, **kw)

    def with_mu(self, mu: float) -> OperatorCalculus:
        other = OperatorCalculus(self.mass, self.kbars, self.grid, mu, self.h1_gram,
                                 self.budget, self.norm_method)
        other._geometry = self._geometry
        return other

    # ----------------------------------------------------------- geometry

    @property
    def geometry(self) -> NormGeometry:
        if self._geometry is None:
            if self.h1_gram is None:
                raise InvalidArgument("H1 norms need the H1 Gram matrix")
            self._geometry = NormGeometry(self.mass, self.h1_gram)
        return self._geometry

    def norm(self, B, src="l2", dst="l2") -> float:
        if self.h1_gram is None and src == dst == "l2":
            # L2 norms need only the mass matrix
            if self._geometry is None:
                self._geometry = NormGeometry(self.mass, self.mass)
        return self.geometry.norm(B, src, dst, self.norm_method)

    # ---------------------------------------------------------- operators

    def _check(self, m, l=None):
        if not 1 <= m <= self.grid.M:
            raise InvalidArgument(f"interval index {m} outside 1..{self.grid.M}")
        if l is not None and not 1 <= l <= self.grid.M:
            raise InvalidArgument(f"interval index {l} outside 1..{self.grid.M}")

    def ktilde(self, m: int) -> np.ndarray:
        self._check(m)
        return self._kt[m - 1]

    def atilde(self, m: int) -> np.ndarray:
        """Operator form M^{-1} Ktilde_m."""
        return np.linalg.solve(self.mass, self.ktilde(m))

    def atilde_inv(self, m: int) -> np.ndarray:
        return np.linalg.solve(self.ktilde(m), self.mass)

    def _factor(self, m, k):
        key = (m, float(k))
        if key not in self._factors:
            self._factors[key] = sla.cho_factor(self.mass + k * self._kt[m - 1])
        return self._factors[key]

    def resolvent_factor(self, m: int, j: int) -> np.ndarray:
        """(Id + k_j Atilde_m)^{-1} = (M + k_j Ktilde_m)^{-1} M."""
        self._check(m, j)
        return sla.cho_solve(self._factor(m, self.steps[j - 1]), self.mass)

    def apply_propagator(self, m: int, l: int, v) -> np.ndarray:
        """Rtilde_{m,l} v by successive SPD solves."""
        self._check(m, l)
        if l > m:
            raise InvalidArgument(f"propagator needs l <= m, got l={l}, m={m}")
        v = np.asarray(v, dtype=float)
        for j in range(l, m + 1):
            v = sla.cho_solve(self._factor(m, self.steps[j - 1]), self.mass @ v)
        return v

    def _row(self, m):
        """All Rtilde_{m,l}, l = 1..m, built from l = m downwards."""
        if m not in self._rows:
            out = [None] * (m + 1)
            R = np.eye(self.n)
            for l in range(m, 0, -1):
                R = sla.cho_solve(self._factor(m, self.steps[l - 1]), self.mass @ R)
                out[l] = R
            self._rows = {m: out}  # keep one row: memory stays O(M n^2)
        return self._rows[m]

    def rational_propagator(self, m: int, l: int) -> np.ndarray:
        self._check(m, l)
        if l > m:
            raise InvalidArgument(f"propagator needs l <= m, got l={l}, m={m}")
        return self._row(m)[l]

    def difference(self, m: int, l: int) -> np.ndarray:
        """Ktilde_m - Ktilde_l without the cancelling mu M terms."""
        km, kl = self.steps[m - 1], self.steps[l - 1]
        return (1.0 + km * self.mu) * self.kbars[m - 1] - (1.0 + kl * self.mu) * self.kbars[l - 1]

    def q_block(self, m: int, l: int) -> np.ndarray:
        """k_l Atilde_m Rtilde_{m,l} (Atilde_m - Atilde_l) Atilde_l^{-1}."""
        self._check(m, l)
        if l >= m:
            raise InvalidArgument(f"Q blocks are strictly lower triangular, got m={m}, l={l}")
        D = self.difference(m, l)
        if not np.any(D):
            return np.zeros((self.n, self.n))
        inner = np.linalg.solve(self.mass, D @ np.linalg.solve(self.ktilde(l), self.mass))
        return self.steps[l - 1] * self.atilde(m) @ (self.rational_propagator(m, l) @ inner)

    def l_block(self, m: int, l: int) -> np.ndarray:
        """k_l Atilde_m Rtilde_{m,l}."""
        self._check(m, l)
        if l > m:
            raise InvalidArgument(f"L blocks need l <= m, got m={m}, l={l}")
        return self.steps[l - 1] * np.linalg.solve(self.mass, self.ktilde(m) @ self.rational_propagator(m, l))

    def d_block(self, m: int) -> np.ndarray:
        """Atilde_m Rtilde_{m,1}."""
        self._check(m)
        return np.linalg.solve(self.mass, self.ktilde(m) @ self.rational_propagator(m, 1))

    # ------------------------------------------------- block applications

    def apply_q(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        out = np.zeros_like(v)
        for m in range(2, self.grid.M + 1):
            for l in range(1, m):
                out[m - 1] += self.q_block(m, l) @ v[l - 1]
        return out

    def apply_l(self, f) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        out = np.zeros_like(f)
        for m in range(1, self.grid.M + 1):
            for l in range(1, m + 1):
                out[m - 1] += self.l_block(m, l) @ f[l - 1]
        return out

    def apply_d(self, u0) -> np.ndarray:
        return np.array([self.d_block(m) @ u0 for m in range(1, self.grid.M + 1)])

    # --------------------------------------------------------- transform

    def damping(self) -> np.ndarray:
        """sigma_m = prod_{l<=m} (1 + mu k_l)^{-1} for m = 0..M."""
        return np.concatenate([[1.0], np.cumprod(1.0 / (1.0 + self.mu * self.steps))])

    def transform_data(self, f, u) -> tuple[np.ndarray, np.ndarray]:
        """(ftilde, w) from operator-form loads f_m and values u_m."""
        sigma = self.damping()
        return sigma[:-1, None] * np.asarray(f), sigma[1:, None] * np.asarray(u)

    def transformed_solve(self, f, u0) -> np.ndarray:
        """Solve w_m - w_{m-1} + k_m Atilde_m w_m = k_m ftilde_m and undo the scaling."""
        sigma = self.damping()
        ft = sigma[:-1, None] * np.asarray(f, dtype=float)
        w = np.asarray(u0, dtype=float)
        out = np.empty_like(ft)
        for m in range(1, self.grid.M + 1):
            k = self.steps[m - 1]
            w = sla.cho_solve(self._factor(m, k), self.mass @ (w + k * ft[m - 1]))
            out[m - 1] = w / sigma[m]
        return out


# ------------------------------------------------------------------ audits


@dataclass(frozen=True)
class AuditRow:
    quantity: str
    mu: float
    m: int
    l: int
    norm: float
    predicted_bound: float
    ratio: float
    param: float | complex | None = None


@dataclass
class NormAudit:
    quantity: str
    mu: float
    rows: list = dc_field(default_factory=list)
    aggregates: dict = dc_field(default_factory=dict)

    def add(self, quantity, m, l, norm, bound, param=None):
        ratio = norm / bound if bound > 0 else (0.0 if norm == 0 else float("inf"))
        self.rows.append(AuditRow(quantity, self.mu, m, l, float(norm), float(bound), float(ratio), param))

    def select(self, quantity) -> list:
        return [r for r in self.rows if r.quantity == quantity]

    def max_ratio(self, quantity=None) -> float:
        rows = self.rows if quantity is None else self.select(quantity)
        return max((r.ratio for r in rows), default=0.0)

    def to_csv(self, header: bool = True) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        if header:
            w.writerow(["quantity", "mu", "m", "l", "param", "norm", "predicted_bound", "ratio"])
        for r in self.rows:
            w.writerow([r.quantity, _fmt(r.mu), r.m, r.l, _fmt_param(r.param),
                        _fmt(r.norm), _fmt(r.predicted_bound), _fmt(r.ratio)])
        return buf.getvalue()


def _fmt(x) -> str:
    return f"{float(x):.17g}"


def _fmt_param(p) -> str:
    if p is None:
        return ""
    if isinstance(p, complex):
        return f"{p.real:.17g}{p.imag:+.17g}j"
    return _fmt(p)


def contraction_audit(ops: OperatorCalculus) -> NormAudit:
    """Block norms of Qtilde with the row-sum and weighted column-sum aggregates."""
    audit = NormAudit("contraction", ops.mu)
    M = ops.grid.M
    steps = ops.steps
    norms = np.zeros((M + 1, M + 1))
    for m in range(2, M + 1):
        for l in range(1, m):
            norms[m, l] = ops.norm(ops.q_block(m, l))
            audit.add("q_block", m, l, norms[m, l], 1.0)
    rows = norms.sum(axis=1)
    weighted = norms[1:, 1:] * (steps[:, None] / steps[None, :])
    audit.aggregates = {
        "rowsum_inf": float(rows.max()),
        "colsum_1": float(weighted.sum(axis=0).max()) if M else 0.0,
    }
    return audit


def contraction_sweep(ops: OperatorCalculus, mus=DEFAULT_MU_SWEEP) -> list[NormAudit]:
    return [contraction_audit(ops.with_mu(mu)) for mu in mus]


def smoothing_audit(ops: OperatorCalculus, h1: bool = True) -> NormAudit:
    """Norms of Atilde R and Atilde^2 R scaled by the predicted decay.

    The single-factor blocks (m = l) enter only the L2 -> L2 quantity "AR";
    the other bounds are stated for m - l >= 1.
    """
    audit = NormAudit("smoothing", ops.mu)
    nodes, steps, mu = ops.grid.nodes, ops.steps, ops.mu
    for m in range(1, ops.grid.M + 1):
        A = ops.atilde(m)
        for l in range(1, m + 1):
            s = nodes[m] - nodes[l - 1]
            AR = A @ ops.rational_propagator(m, l)
            audit.add("AR", m, l, ops.norm(AR), 1.0 / s)
            if m == l:
                continue
            audit.add("A2R", m, l, ops.norm(A @ AR), 1.0 / s**2)
            if h1:
                bound = 1.0 / (s**1.5 * np.sqrt(1.0 + mu * steps[m - 1]))
                audit.add("AR_l2_h1", m, l, ops.norm(AR, "l2", "h1"), bound)
                audit.add("AR_hm1_l2", m, l, ops.norm(AR, "hm1", "l2"), bound)
    for q in ("AR", "A2R", "AR_l2_h1", "AR_hm1_l2"):
        if audit.select(q):
            audit.aggregates[q] = audit.max_ratio(q)
    return audit


def resolvent_audit(ops: OperatorCalculus, m: int, z_samples, gamma: float = np.pi / 2) -> NormAudit:
    """||(z - Atilde_m)^{-1}|| = 1 / dist(z, spectrum) against 1/(|z| + mu)."""
    audit = NormAudit("resolvent", ops.mu)
    lam = sla.eigh(ops.ktilde(m), ops.mass, eigvals_only=True)
    for i, z in enumerate(z_samples):
        z = complex(z)
        if z == 0 or abs(np.angle(z)) <= gamma:
            raise InvalidArgument(f"z = {z} lies inside the excluded sector |arg z| <= {gamma}")
        norm = 1.0 / float(np.abs(z - lam).min())
        audit.add("resolvent", m, i + 1, norm, 1.0 / (abs(z) + ops.mu), param=z)
    inv = ops.atilde_inv(m)
    lam_min = float(lam.min())
    if ops.mu > 0:
        audit.add("inverse_l2", m, 0, 1.0 / lam_min, 1.0 / ops.mu)
        if ops.h1_gram is not None:
            k = ops.steps[m - 1]
            bound = 1.0 / (np.sqrt(ops.mu) * np.sqrt(1.0 + k * ops.mu))
            audit.add("inverse_l2_h1", m, 0, ops.norm(inv, "l2", "h1"), bound)
    audit.aggregates = {"max_ratio": audit.max_ratio("resolvent"), "lambda_min": lam_min}
    return audit


def difference_audit(ops: OperatorCalculus, modulus: ModulusReport) -> NormAudit:
    """||Atilde_m - Atilde_l||_{H1 -> H^-1} against the predicted bound."""
    audit = NormAudit("difference", ops.mu)
    nodes, steps, mu = ops.grid.nodes, ops.steps, ops.mu
    for m in range(1, ops.grid.M + 1):
        for l in range(1, m + 1):
            D = ops.difference(m, l)
            norm = 0.0 if not np.any(D) else ops.geometry.functional_norm(D, method=ops.norm_method)
            km, kl = steps[m - 1], steps[l - 1]
            omega = float(modulus.omega_fit(nodes[m] - nodes[l - 1]))
            bound = (1.0 + mu * min(km, kl)) * omega + mu * abs(km - kl)
            audit.add("difference", m, l, norm, bound)
    audit.aggregates = {"max_ratio": audit.max_ratio()}
    return audit


def fitted_modulus(field: CoefficientField, grid: TimeGrid, levels: int = 8) -> ModulusReport:
    return temporal_modulus_audit(field, levels, T=grid.T)


# ---------------------------------------------------------- identity checks


def _operator_data(problem, sol, ops: OperatorCalculus):
    if sol.grid is not problem.grid and not np.array_equal(sol.grid.nodes, problem.grid.nodes):
        raise InvalidArgument("solution and problem use different time grids")
    if sol.values.shape[1] != ops.n or ops.grid.M != sol.grid.M:
        raise InvalidArgument("solution and operator calculus do not match")
    f = np.linalg.solve(ops.mass, np.asarray(sol.loads).T).T
    return f, np.asarray(sol.values), np.asarray(sol.u0h)


def _mass_norm(mass, v) -> float:
    return float(np.sqrt(max(v @ (mass @ v), 0.0)))


def fixed_point_check(problem, sol, mu: float = 0.0, ops: OperatorCalculus | None = None) -> float:
    """max_m ||vt_m - (Qt vt + Lt ft + Dt u0)_m|| / max_m ||vt_m|| with vt_m = At_m w_m."""
    ops = OperatorCalculus.from_problem(problem, mu) if ops is None else ops.with_mu(mu)
    f, u, u0 = _operator_data(problem, sol, ops)
    ft, w = ops.transform_data(f, u)
    v = np.array([ops.atilde(m) @ w[m - 1] for m in range(1, ops.grid.M + 1)])
    rhs = ops.apply_q(v) + ops.apply_l(ft) + ops.apply_d(u0)
    res = max(_mass_norm(ops.mass, r) for r in v - rhs)
    scale = max(_mass_norm(ops.mass, x) for x in v)
    return res / scale if scale > 0 else res


def representation_check(problem, sol, ops: OperatorCalculus | None = None) -> float:
    """max_m ||u_m - representation_m|| / max_m ||u_m|| (untransformed operators)."""
    ops = OperatorCalculus.from_problem(problem, 0.0) if ops is None else ops.with_mu(0.0)
    f, u, u0 = _operator_data(problem, sol, ops)
    res, scale = 0.0, 0.0
    for m in range(1, ops.grid.M + 1):
        rep = ops.rational_propagator(m, 1) @ u0
        for l in range(1, m + 1):
            R = ops.rational_propagator(m, l)
            g = f[l - 1]
            if l < m:
                g = g + np.linalg.solve(ops.mass, ops.difference(m, l) @ u[l - 1])
            rep = rep + ops.steps[l - 1] * (R @ g)
        res = max(res, _mass_norm(ops.mass, u[m - 1] - rep))
        scale = max(scale, _mass_norm(ops.mass, u[m - 1]))
    return res / scale if scale > 0 else res
