"""Regularity functionals, stability audits, error norms and convergence tables."""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field

import numpy as np

from .coeffs import CoefficientField
from .dg0solver import DgSolution, ParabolicProblem, jumps, solve
from .errors import InsufficientData, InvalidArgument, ResourceLimit
from .femspace import FeSpace, assemble_averaged_stiffness, ritz_project
from .linalg import SpdSolver, mass_operator_norm
from .mesh import make_interval_mesh, make_unit_square_tri_mesh
from .problems import resolve
from .timegrid import TimeGrid, make_uniform

INF = math.inf
# interior samples per interval for sup-norms in time (endpoints are added)
SUP_SAMPLES = 5
STABILITY_DOF_LIMIT = 20_000


def _parse_p(p) -> float:
    if isinstance(p, str):
        if p.lower() in ("inf", "infinity", "oo"):
            return INF
        p = float(p)
    p = float(p)
    if not p >= 1:
        raise InvalidArgument(f"norm index must be >= 1, got {p}")
    return p


def _sup_times(grid: TimeGrid, m: int, samples: int = SUP_SAMPLES) -> np.ndarray:
    a, b = grid.interval(m)
    return np.linspace(a, b, samples + 2)


def _space_l2(space: FeSpace, values, degree) -> float:
    _, W, _, _ = space.quad(degree)
    return float(np.sqrt(max(np.sum(W * values**2), 0.0)))


def _error_degree(space: FeSpace) -> int:
    return 2 * space.degree + 4


def _time_norm(per_interval, grid: TimeGrid, p: float) -> float:
    """Combine per-interval (times, weights, values) samples into an L^p(I) norm."""
    if p == INF:
        return max((float(np.max(v)) for _, _, v in per_interval), default=0.0)
    total = 0.0
    for m, (_, w, v) in enumerate(per_interval, start=1):
        total += grid.step(m) * float(np.sum(w * np.asarray(v) ** p))
    return total ** (1.0 / p)


def _interval_samples(grid: TimeGrid, m: int, p: float, time_points: int):
    if p == INF:
        t = _sup_times(grid, m)
        return t, np.ones_like(t)
    return grid.gauss_points(m, time_points)


def function_time_norm(space: FeSpace, fn, grid: TimeGrid, p, time_points: int = 4) -> float:
    """||g||_{L^p(I;L2)} for g(t, X) by Gauss (finite p) or sampling (p = inf)."""
    p = _parse_p(p)
    deg = _error_degree(space)
    X, _, _, _ = space.quad(deg)
    nc, nq, d = X.shape
    flat = X.reshape(-1, d)
    samples = []
    for m in range(1, grid.M + 1):
        t, w = _interval_samples(grid, m, p, time_points)
        vals = [_space_l2(space, np.asarray(fn(float(s), flat)).reshape(nc, nq), deg) for s in t]
        samples.append((t, w, np.array(vals)))
    return _time_norm(samples, grid, p)


# -------------------------------------------------------------- regularity


@dataclass
class RegularityReport:
    """Per-interval ||A_m u_m|| and ||[u]_{m-1}||/k_m with their aggregates."""

    a_norms: np.ndarray
    jump_rates: np.ndarray
    steps: np.ndarray
    T: float
    log_factor: float
    aggregates: dict
    data: dict
    p: float
    ratio: float
    ratio_a: float
    experimental: bool = False

    @property
    def M(self) -> int:
        return self.a_norms.size

    def interpolation_consistent(self, rtol: float = 1e-12) -> bool:
        """agg_2^2 <= agg_1 agg_inf and agg_1 <= T agg_inf on the computed sequences."""
        a1, a2, ai = (self.aggregates[k] for k in ("1", "2", "inf"))
        slack = rtol * max(1.0, a1 * ai, self.T * ai)
        return a2**2 <= a1 * ai + slack and a1 <= self.T * ai + slack

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["m", "k_m", "norm_Akm_ukm", "norm_jump_over_km"])
        for m, (k, a, j) in enumerate(zip(self.steps, self.a_norms, self.jump_rates), start=1):
            w.writerow([m, _fmt(k), _fmt(a), _fmt(j)])
        return buf.getvalue()

    def summary(self) -> dict:
        return {
            "p": "inf" if self.p == INF else self.p,
            "log_factor": self.log_factor,
            "aggregates": self.aggregates,
            "data": self.data,
            "ratio": self.ratio,
            "ratio_a": self.ratio_a,
            "max_m_norm_Akm_ukm": float(self.a_norms.max()) if self.M else 0.0,
            "experimental": self.experimental,
        }


def _fmt(x) -> str:
    return f"{float(x):.17g}"


def _mass_dual_norm(space: FeSpace, b) -> float:
    return float(np.sqrt(max(b @ space.mass_solver.solve(b), 0.0)))


def _aggregate(a, j, k, p) -> float:
    if a.size == 0:
        return 0.0
    if p == INF:
        return float(np.max(a + j))
    if p == 1:
        return float(np.sum(k * a + k * j))
    return float(np.sum(k * (a**p + j**p)) ** (1.0 / p))


def _safe_ratio(num, den) -> float:
    if den > 0:
        return num / den
    return 0.0 if num == 0 else INF


def load_time_norm(problem: ParabolicProblem, p) -> float:
    """||f||_{L^p(I;L2)}; discrete loads are measured through P_h f."""
    p = _parse_p(p)
    space, grid = problem.space, problem.grid
    if problem.load is None and problem.f is not None:
        return function_time_norm(space, problem.f, grid, p, problem.time_points)
    samples = []
    for m in range(1, grid.M + 1):
        t, w = _interval_samples(grid, m, p, problem.time_points)
        samples.append((t, w, np.array([_mass_dual_norm(space, problem.load_at(float(s))) for s in t])))
    return _time_norm(samples, grid, p)


def initial_l2(problem: ParabolicProblem, sol: DgSolution) -> float:
    if problem.u0 is not None and problem.u0_vector is None:
        deg = _error_degree(problem.space)
        X, _, _, _ = problem.space.quad(deg)
        nc, nq, d = X.shape
        return _space_l2(problem.space, np.asarray(problem.u0(X.reshape(-1, d))).reshape(nc, nq), deg)
    return problem.space.l2_norm(sol.u0h)


def regularity_functionals(problem: ParabolicProblem, sol: DgSolution, p="inf") -> RegularityReport:
    """Discrete maximal-regularity functionals and their data-normalised ratios.

    Denominators: p = inf uses ln(T/k)||f||_inf + T max_m ||A_m P_h u0||;
    p = 1 uses ln(T/k)(||f||_1 + ||u0||); other p use ln(T/k)(||f||_p + ||u0||).
    """
    p = _parse_p(p)
    space, grid = sol.space, sol.grid
    J = jumps(sol)
    steps = grid.steps
    a = np.array([_mass_dual_norm(space, K @ u) for K, u in zip(sol.kbar, sol.values)])
    j = np.array([space.l2_norm(x) for x in J]) / steps
    aggregates = {"inf": _aggregate(a, j, steps, INF), "1": _aggregate(a, j, steps, 1.0),
                  "2": _aggregate(a, j, steps, 2.0)}
    key = "inf" if p == INF else ("1" if p == 1 else ("2" if p == 2 else str(p)))
    if key not in aggregates:
        aggregates[key] = _aggregate(a, j, steps, p)
    log = grid.log_factor()
    f_norm = load_time_norm(problem, p)
    u0_norm = initial_l2(problem, sol)
    a_u0 = max((_mass_dual_norm(space, K @ sol.u0h) for K in sol.kbar), default=0.0)
    data = {"f_norm": f_norm, "u0_l2": u0_norm, "max_m_norm_Akm_Phu0": a_u0}
    if p == INF:
        den = log * f_norm + grid.T * a_u0
    else:
        den = log * (f_norm + u0_norm)
    data["denominator"] = den
    return RegularityReport(
        a_norms=a, jump_rates=j, steps=np.asarray(steps), T=grid.T, log_factor=log,
        aggregates=aggregates, data=data, p=p,
        ratio=_safe_ratio(aggregates[key], den),
        ratio_a=_safe_ratio(float(a.max()) if p == INF else _aggregate(a, 0 * a, steps, p), den),
        experimental=p not in (1.0, 2.0, INF),
    )


def boundedness_gate(ratios, factor: float = 2.0) -> bool:
    """max_j ratio_j <= factor * median_j ratio_j."""
    r = np.asarray(ratios, dtype=float)
    if r.size == 0:
        raise InsufficientData("no ratios to test")
    return bool(r.max() <= factor * np.median(r))


# --------------------------------------------------------------- stability


@dataclass
class StabilityReport:
    per_interval: np.ndarray
    sample_times: list

    @property
    def value(self) -> float:
        return float(self.per_interval.max()) if self.per_interval.size else 0.0


def stability_lemma_audit(space: FeSpace, field: CoefficientField, grid: TimeGrid,
                          samples_per_interval: int = SUP_SAMPLES, q: int = 4,
                          dof_limit: int = STABILITY_DOF_LIMIT) -> StabilityReport:
    """sup_t ||A_h(t) A_{kh,m}^{-1}|| per interval, t sampled with both endpoints."""
    n = space.n
    if n > dof_limit:
        raise ResourceLimit(f"{n} dofs exceed the stability audit limit {dof_limit}")
    M = space.mass_matrix
    msolve = space.mass_solver.solve
    values, times = [], []
    for m in range(1, grid.M + 1):
        Kbar = assemble_averaged_stiffness(space, field, grid, m, q)
        kb = SpdSolver(Kbar)
        best = 0.0
        ts = _sup_times(grid, m, samples_per_interval)
        for t in ts:
            K = space.stiffness(field, float(t))
            # B = M^{-1} K(t) Kbar^{-1} M, B^T = M Kbar^{-1} K(t) M^{-1}
            val = mass_operator_norm(
                lambda x: msolve(K @ kb.solve(M @ x)),
                lambda x: M @ kb.solve(K @ msolve(x)),
                M, msolve, n,
            )
            best = max(best, val)
        values.append(best)
        times.append(ts)
    return StabilityReport(np.array(values), times)


# ----------------------------------------------------------- error norms


class PikTrajectory:
    """pi_k u: the value u(t_m) on each interval I_m."""

    def __init__(self, exact, grid: TimeGrid):
        self.exact = exact
        self.grid = grid

    def function_on(self, m: int):
        return self.exact.at(float(self.grid.nodes[m]))


def pik_interpolant(problem: ParabolicProblem, grid: TimeGrid | None = None) -> PikTrajectory:
    if problem.exact is None:
        raise InvalidArgument("pi_k needs an exact solution")
    return PikTrajectory(problem.exact, problem.grid if grid is None else grid)


def _piece_values(traj, m, space: FeSpace, deg, flat, shape):
    if isinstance(traj, DgSolution):
        return space.values_at_quad(traj.values[m - 1], deg)
    return np.asarray(traj.function_on(m)(flat)).reshape(shape)


@dataclass(frozen=True)
class ErrorNorms:
    lp: float
    linf: float
    p: float


def _trajectory_error(space, exact, traj, grid, p, time_points, ritz_field=None):
    """Per-interval samples of ||u(t) - piece(t)||; piece is R_h(t)u with ritz_field."""
    deg = _error_degree(space)
    X, _, _, _ = space.quad(deg)
    nc, nq, d = X.shape
    flat = X.reshape(-1, d)
    out = []
    for m in range(1, grid.M + 1):
        t, w = _interval_samples(grid, m, p, time_points)
        piece = None if ritz_field is not None else _piece_values(traj, m, space, deg, flat, (nc, nq))
        vals = []
        for s in t:
            s = float(s)
            u = np.asarray(exact.value(s, flat)).reshape(nc, nq)
            if ritz_field is not None:
                piece = space.values_at_quad(ritz_project(space, ritz_field, s, exact.grad_at(s)), deg)
            vals.append(_space_l2(space, u - piece, deg))
        out.append((t, w, np.array(vals)))
    return out


def error_norms(problem: ParabolicProblem, sol, p=2, time_points: int = 4) -> ErrorNorms:
    """(||u - u_kh||_{L^p(I;L2)}, ||u - u_kh||_{L^inf(I;L2)}) for a trajectory.

    ``sol`` may be a DgSolution or a PikTrajectory.
    """
    p = _parse_p(p)
    if problem.exact is None:
        raise InvalidArgument("error norms need an exact solution")
    grid = sol.grid
    space = problem.space
    linf = _time_norm(_trajectory_error(space, problem.exact, sol, grid, INF, time_points), grid, INF)
    if p == INF:
        return ErrorNorms(linf, linf, p)
    lp = _time_norm(_trajectory_error(space, problem.exact, sol, grid, p, time_points), grid, p)
    return ErrorNorms(lp, linf, p)


def ritz_error_norm(problem: ParabolicProblem, p=2, time_points: int = 4) -> float:
    """||u - R_h(t)u||_{L^p(I;L2)} with R_h(t) evaluated at the temporal samples."""
    p = _parse_p(p)
    if problem.exact is None:
        raise InvalidArgument("Ritz error needs an exact solution")
    samples = _trajectory_error(problem.space, problem.exact, None, problem.grid, p,
                                time_points, ritz_field=problem.field)
    return _time_norm(samples, problem.grid, p)


@dataclass(frozen=True)
class BestApproxResult:
    ratio: float
    error: float
    pik_term: float
    ritz_term: float
    log_factor: float
    applicable: bool
    p: float


# denominators below this (relative to the solution size) count as zero
DEGENERATE_RTOL = 1e-10


def best_approx_ratio(problem: ParabolicProblem, sol: DgSolution, p=2,
                      time_points: int = 4) -> BestApproxResult:
    p = _parse_p(p)
    if problem.exact is None:
        raise InvalidArgument("best-approximation ratio needs an exact solution")
    err = error_norms(problem, sol, p, time_points)
    e = err.linf if p == INF else err.lp
    pik = error_norms(problem, pik_interpolant(problem, sol.grid), p, time_points)
    pik_term = pik.linf if p == INF else pik.lp
    ritz = ritz_error_norm(problem, p, time_points)
    log = sol.grid.log_factor()
    size = function_time_norm(problem.space, problem.exact.value, sol.grid, p, time_points)
    den = log * (pik_term + ritz)
    applicable = den > DEGENERATE_RTOL * max(size, 1e-300) and log > 0
    return BestApproxResult(e / den if applicable else float("nan"), e, pik_term, ritz, log,
                            bool(applicable), p)


# ------------------------------------------------------------ convergence


@dataclass(frozen=True)
class RefinementLine:
    """One refinement line: (n, M) levels for a named problem.

    ``variable`` selects the abscissa of the fitted order ('h' or 'k').
    """

    name: str
    variable: str
    problem: str
    levels: tuple
    degree: int = 1
    dim: int = 1
    T: float = 1.0

    def __post_init__(self):
        if self.variable not in ("h", "k"):
            raise InvalidArgument(f"refinement variable must be 'h' or 'k', got {self.variable!r}")
        if not self.levels:
            raise InvalidArgument("a refinement line needs at least one level")


def build_space(dim: int, n: int, degree: int) -> FeSpace:
    if dim == 1:
        return FeSpace(make_interval_mesh(0.0, 1.0, n), degree)
    if dim == 2:
        return FeSpace(make_unit_square_tri_mesh(n), degree)
    raise InvalidArgument(f"dimension must be 1 or 2, got {dim}")


@dataclass
class ConvergenceTable:
    p: float
    rows: list = dc_field(default_factory=list)

    @property
    def p_label(self) -> str:
        return "inf" if self.p == INF else f"{self.p:g}"

    def lines(self) -> list:
        seen = []
        for r in self.rows:
            if r["line"] not in seen:
                seen.append(r["line"])
        return seen

    def orders(self) -> dict:
        """Log-log slopes per line; lines with fewer than 3 rows are omitted.

        A slope is None when some error is at rounding level.
        """
        out = {}
        for name in self.lines():
            rows = [r for r in self.rows if r["line"] == name]
            if len(rows) < 3:
                continue
            var = rows[0]["variable"]
            x = np.log([r[var] for r in rows])
            fit = {}
            for key in (f"err_L{self.p_label}_I_L2", "err_Linf_I_L2"):
                e = np.array([r[key] for r in rows])
                # rounding-level errors carry no rate information
                if np.all(e > ZERO_ERROR):
                    fit[key] = float(np.polyfit(x, np.log(e), 1)[0])
                else:
                    fit[key] = None
            out[name] = {"variable": var, **fit}
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        cols = ["line", "variable", "problem", "degree", "n", "M", "h", "k",
                f"err_L{self.p_label}_I_L2", "err_Linf_I_L2", "zero_error"]
        w.writerow(cols)
        for r in self.rows:
            w.writerow([r[c] if isinstance(r[c], (str, int, bool)) else _fmt(r[c]) for c in cols])
        return buf.getvalue()


# error at or below this level is reported as exact (reproduction runs)
ZERO_ERROR = 1e-12


def _run_level(line: RefinementLine, n: int, M: int, p: float, time_points: int):
    space = build_space(line.dim, n, line.degree)
    grid = make_uniform(line.T, M)
    problem = ParabolicProblem.from_data(resolve(line.problem, line.dim), space, grid,
                                         time_points=time_points)
    sol = solve(problem)
    err = error_norms(problem, sol, p, time_points)
    lp_key = "inf" if p == INF else f"{p:g}"
    return {
        "line": line.name, "variable": line.variable, "problem": line.problem,
        "degree": line.degree, "n": n, "M": M, "h": space.h, "k": grid.k,
        f"err_L{lp_key}_I_L2": err.lp, "err_Linf_I_L2": err.linf,
        "zero_error": bool(max(err.lp, err.linf) <= ZERO_ERROR),
    }


def convergence_study(lines, p=2, time_points: int = 4, jobs: int = 1) -> ConvergenceTable:
    """Solve every level of every line; rows keep the plan order."""
    p = _parse_p(p)
    tasks = [(line, n, M) for line in lines for (n, M) in line.levels]
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(lambda a: _run_level(*a, p, time_points), tasks))
    else:
        rows = [_run_level(*a, p, time_points) for a in tasks]
    return ConvergenceTable(p, rows)


def default_plan(degree: int = 1, dim: int = 1) -> list[RefinementLine]:
    """k-line on a fine mesh, h-line on a steady solution, and a diagonal line.

    The h-line uses a time-independent exact solution so that the dG(0)
    time error vanishes and the spatial order is seen cleanly.
    """
    fine_n = 64 if dim == 1 else 16
    # a 16x16 P1 mesh is too coarse for the time error to dominate
    k_degree = degree if dim == 1 else max(degree, 2)
    hs = (4, 8, 16, 32)
    diag = tuple((n, max(2, int(round(n ** (degree + 1) / (4 ** degree))))) for n in hs[:3])
    # the k-line starts where k times the smallest eigenvalue is below one
    return [
        RefinementLine("k", "k", "heat-sine", tuple((fine_n, M) for M in (32, 64, 128, 256)),
                       k_degree, dim),
        RefinementLine("h", "h", "steady-sine" if dim == 1 else "steady-mixed",
                       tuple((n, 4) for n in hs), degree, dim),
        RefinementLine("diagonal", "h", "heat-sine", diag, degree, dim),
    ]
