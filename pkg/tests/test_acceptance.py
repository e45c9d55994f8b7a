"""Acceptance suite: one test per criterion, each recording a pass/fail line."""

import math

import numpy as np
import scipy.linalg as sla

from dg0lab.analysis import (RefinementLine, best_approx_ratio, boundedness_gate, build_space,
                             convergence_study, default_plan, error_norms,
                             regularity_functionals, stability_lemma_audit)
from dg0lab.coeffs import get_field
from dg0lab.dg0solver import (DiscreteExact, ParabolicProblem, residual_identity_check,
                              solve)
from dg0lab.opcalc import (OperatorCalculus, contraction_audit, fixed_point_check,
                           representation_check, resolvent_audit, smoothing_audit)
from dg0lab.problems import PROBLEMS, resolve
from dg0lab.timegrid import make_uniform

from oracles import DenseFem, dense_dg0

NON_AUTONOMOUS = [name for name, spec in PROBLEMS.items() if spec.field != "identity"]


def corpus_cases(dim):
    return [name for name, spec in PROBLEMS.items() if dim in spec.dims]


def test_scheme_identity(criterion):
    worst = 0.0
    for dim, n, deg, M in ((1, 64, 2, 64), (2, 16, 1, 32), (2, 8, 2, 16)):
        space = build_space(dim, n, deg)
        for name in corpus_cases(dim):
            p = ParabolicProblem.from_corpus(name, space, make_uniform(1.0, M))
            worst = max(worst, residual_identity_check(solve(p)))
    assert criterion(1, "scheme identity", worst <= 1e-10, f"max relative residual {worst:.2e}")


def test_representation_and_fixed_point(criterion):
    rep, fix = 0.0, 0.0
    for dim, n in ((1, 10), (2, 4)):
        space = build_space(dim, n, 1)
        for name in NON_AUTONOMOUS:
            if dim not in PROBLEMS[name].dims:
                continue
            p = ParabolicProblem.from_corpus(name, space, make_uniform(1.0, 8))
            sol = solve(p)
            ops = OperatorCalculus.from_problem(p)
            rep = max(rep, representation_check(p, sol, ops))
            fix = max(fix, *(fixed_point_check(p, sol, mu, ops) for mu in (0.0, 4.0)))
    ok = rep <= 1e-9 and fix <= 1e-9
    assert criterion(2, "representation and fixed point", ok,
                     f"representation {rep:.2e}, fixed point {fix:.2e}")


def test_dense_oracle(criterion):
    worst = 0.0
    for dim, n, deg in ((1, 26, 1), (1, 13, 2), (2, 6, 1), (2, 3, 2)):
        fem = DenseFem(dim, n, deg)
        space = build_space(dim, n, deg)
        assert space.n == fem.coords.shape[0] <= 25
        for name in corpus_cases(dim):
            d = resolve(name, dim)
            p = ParabolicProblem.from_data(d, space, make_uniform(1.0, 8),
                                           quad_degree=22, stiffness_quad=22)
            got = np.array([space.evaluate(u, fem.coords) for u in solve(p).values])
            ref = dense_dg0(fem, d.field, d.f, d.u0, 1.0, 8)
            scale = np.abs(ref).max()
            err = np.abs(got - ref).max()
            worst = max(worst, err / scale if scale > 0 else err)
    assert criterion(3, "dense oracle", worst <= 1e-10, f"max relative deviation {worst:.2e}")


def test_contraction(criterion):
    mus = (1.0, 4.0, 16.0, 64.0, 256.0)
    space = build_space(1, 16, 1)
    details, ok = [], True
    for M in (8, 16, 32):
        grid = make_uniform(1.0, M)
        ops = OperatorCalculus.from_space(space, get_field("linear-time", 1), grid)
        rows = {mu: contraction_audit(ops.with_mu(mu)).aggregates["rowsum_inf"] for mu in mus}
        ok &= min(rows.values()) < 0.75
        # pre-plateau: both sweep values keep mu k <= 1
        ratios = [rows[4 * mu] / rows[mu] for mu in mus[:-1] if 4 * mu * grid.k <= 1]
        ok &= bool(ratios) and all(0.35 <= r <= 0.75 for r in ratios)
        details.append(f"M={M} min rowsum {min(rows.values()):.3g} ratios "
                       + "/".join(f"{r:.3f}" for r in ratios))
    auto = OperatorCalculus.from_space(space, get_field("identity", 1), make_uniform(1.0, 16))
    zero = all(contraction_audit(auto.with_mu(mu)).aggregates == {"rowsum_inf": 0.0, "colsum_1": 0.0}
               for mu in (0.0,) + mus)
    ok &= zero
    details.append(f"autonomous exactly zero: {zero}")
    assert criterion(4, "contraction", ok, "; ".join(details))


def test_smoothing(criterion):
    space = build_space(1, 16, 1)
    ok, details = True, []
    for mu in (0.0, 4.0):
        consts = {"AR": [], "A2R": []}
        for M in (8, 16, 32):
            ops = OperatorCalculus.from_space(space, get_field("linear-time", 1), make_uniform(1.0, M), mu)
            audit = smoothing_audit(ops, h1=False)
            consts["AR"].append(max(r.ratio for r in audit.select("AR") if r.m > r.l))
            consts["A2R"].append(audit.aggregates["A2R"])
        for q, c in consts.items():
            spread = max(c) / min(c)
            ok &= spread < 2
            details.append(f"mu={mu:g} {q} spread {spread:.3f}")
    k = 0.125
    scalar = []
    for lam in np.logspace(-4, 14, 60):
        ops = OperatorCalculus(np.eye(1), [np.array([[lam]])], make_uniform(k, 1))
        scalar.append(ops.norm(ops.atilde(1) @ ops.rational_propagator(1, 1)) * k)
    bound_ok = max(scalar) <= 1 + 1e-12
    ok &= bound_ok
    details.append(f"scalar single-factor max k*norm {max(scalar):.15f}")
    assert criterion(5, "smoothing", ok, "; ".join(details))


def test_resolvent(criterion):
    space = build_space(1, 16, 1)
    grid = make_uniform(1.0, 8)
    zs = [r * complex(math.cos(a), math.sin(a)) for a in (0.75 * math.pi, math.pi) for r in (1, 10, 100)]
    worst, exact_dev = 0.0, 0.0
    for mu in (4.0, 16.0):
        ops = OperatorCalculus.from_space(space, get_field("linear-time", 1), grid, mu)
        audit = resolvent_audit(ops, grid.M, zs)
        worst = max(worst, max(r.norm * (abs(r.param) + mu) for r in audit.select("resolvent")))
        lam_min = np.linalg.eigvals(np.linalg.solve(ops.mass, ops.ktilde(grid.M))).real.min()
        at_minus_mu = resolvent_audit(ops, grid.M, [-mu]).rows[0].norm
        exact_dev = max(exact_dev, abs(at_minus_mu - 1 / (mu + lam_min)) * (mu + lam_min))
    ok = worst <= 4 and exact_dev <= 1e-10
    assert criterion(6, "resolvent", ok, f"max norm*(|z|+mu) {worst:.3f}, z=-mu deviation {exact_dev:.1e}")


def test_maximal_regularity(criterion):
    space = build_space(1, 32, 1)
    levels = (8, 16, 32, 64, 128, 256)
    ok, details = True, []
    for name, p in (("forced-sine", "inf"), ("forced-lipschitz", "inf"), ("forced-initial", 1)):
        ratios = []
        for M in levels:
            prob = ParabolicProblem.from_corpus(name, space, make_uniform(1.0, M))
            rep = regularity_functionals(prob, solve(prob), p)
            ratios.append(rep.ratio_a if p == "inf" else rep.ratio)
        passed = boundedness_gate(ratios)
        ok &= passed
        details.append(f"{name} p={p} max/median {max(ratios) / np.median(ratios):.3f}")
    assert criterion(7, "maximal regularity", ok, "; ".join(details))


def test_stability_lemma(criterion):
    grid = make_uniform(1.0, 8)
    auto = stability_lemma_audit(build_space(2, 8, 1), get_field("identity", 2), grid)
    dev = float(np.abs(auto.per_interval - 1).max())
    values = [stability_lemma_audit(build_space(2, n, 1), get_field("diag-mixed", 2), grid).value
              for n in (4, 8, 16)]
    spread = max(values) / min(values)
    ok = dev <= 1e-10 and spread < 2
    assert criterion(8, "stability lemma", ok,
                     f"autonomous deviation {dev:.1e}; diag-mixed values "
                     + "/".join(f"{v:.4f}" for v in values))


def test_convergence_rates(criterion):
    lines = []
    for r in (1, 2):
        for line in default_plan(r, 1):
            if line.name in ("k", "h"):
                lines.append(RefinementLine(f"{line.name}{r}", line.variable, line.problem,
                                           line.levels, line.degree, line.dim))
    ok, details = True, []
    for p in (2, "inf"):
        orders = convergence_study(lines, p, jobs=4).orders()
        for name, fit in orders.items():
            r = int(name[1:])
            lo, hi = (0.85, 1.15) if fit["variable"] == "k" else (r + 0.85, r + 1.15)
            key = "err_Linf_I_L2" if p == "inf" else "err_L2_I_L2"
            ok &= fit[key] is not None and lo <= fit[key] <= hi
            details.append(f"{name} {key.split('_')[1]} {fit[key]:.3f}")
    assert criterion(9, "convergence rates", ok, ", ".join(details))


def test_best_approximation(criterion):
    levels = ((4, 8), (8, 16), (16, 32), (32, 64))
    ok, details = True, []
    for name in ("heat-sine", "heat-lipschitz"):
        for p in (2, "inf"):
            ratios = []
            for n, M in levels:
                prob = ParabolicProblem.from_corpus(name, build_space(1, n, 1), make_uniform(1.0, M))
                res = best_approx_ratio(prob, solve(prob), p)
                ok &= res.applicable
                ratios.append(res.ratio)
            ok &= boundedness_gate(ratios)
            details.append(f"{name} p={p} max/median {max(ratios) / np.median(ratios):.3f}")
    assert criterion(10, "best approximation", ok, "; ".join(details))


def test_reproduction(criterion):
    worst = 0.0
    rng = np.random.default_rng(11)
    cases = [(1, 8, 1, f) for f in ("linear-time", "quadratic-time", "sine-time", "sqrt-time", "separable")]
    cases += [(1, 6, 2, "sine-time"), (2, 4, 1, "diag-mixed"), (2, 3, 2, "diag-mixed"), (2, 4, 2, "separable")]
    for dim, n, deg, field in cases:
        space = build_space(dim, n, deg)
        uh = rng.standard_normal(space.n)
        p = ParabolicProblem(space, make_uniform(1.0, 8), get_field(field, dim), u0_vector=uh,
                             exact=DiscreteExact(space, uh))
        p.load = lambda t, p=p, uh=uh: p.stiffness_at(t) @ uh
        err = error_norms(p, solve(p), 2)
        worst = max(worst, err.lp, err.linf)
    assert criterion(11, "reproduction", worst <= 1e-10, f"max error {worst:.2e}")
