"""Config-driven command line: validate | solve | operators | convergence | bestapprox.

Exit codes: 0 success, 1 numeric failure, 2 assumption violation,
3 configuration error, 4 resource limit.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import analysis, opcalc
from .coeffs import default_space_samples, ellipticity_audit, temporal_modulus_audit
from .dg0solver import ParabolicProblem, solve
from .errors import ConfigError, Dg0Error, InvalidArgument, NumericFailure, ResourceLimit
from .mesh import check_quasi_uniform
from .problems import resolve
from .timegrid import make_graded, make_uniform, validate_conditions

EXIT_OK, EXIT_NUMERIC, EXIT_VIOLATION, EXIT_CONFIG, EXIT_RESOURCE = 0, 1, 2, 3, 4

SCHEMA = {
    "problem": {"id", "field", "rhs", "u0", "exact", "dim"},
    "grid": {"kind", "T", "M", "gamma"},
    "mesh": {"n", "degree"},
    "conditions": {"c", "beta", "kappa", "quasi_uniform_max"},
    "modulus": {"dyadic_levels", "t_points"},
    "solver": {"time_points", "scheme"},
    "operators": {"mu", "budget", "resolvent_abs", "resolvent_args", "gamma", "audits"},
    "analysis": {"p"},
    "convergence": {"lines"},
    "output": {"dir"},
}
LINE_KEYS = {"name", "variable", "problem", "degree", "dim", "T", "levels"}
AUDITS = ("contraction", "smoothing", "resolvent", "difference")


# ------------------------------------------------------------------ config


def load_config(path) -> dict:
    try:
        with open(path, "rb") as fh:
            cfg = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}") from exc
    check_schema(cfg)
    return cfg


def check_schema(cfg: dict) -> None:
    for section, body in cfg.items():
        if section not in SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        if not isinstance(body, dict):
            raise ConfigError(f"[{section}] must be a table")
        unknown = set(body) - SCHEMA[section]
        if unknown:
            raise ConfigError(f"unknown keys in [{section}]: {sorted(unknown)}")
    for line in cfg.get("convergence", {}).get("lines", []):
        if not isinstance(line, dict):
            raise ConfigError("[convergence] lines must be tables")
        unknown = set(line) - LINE_KEYS
        if unknown:
            raise ConfigError(f"unknown keys in a convergence line: {sorted(unknown)}")


def _get(cfg, section, key, default):
    return cfg.get(section, {}).get(key, default)


def _as_list(value, what) -> list:
    items = value if isinstance(value, list) else [value]
    if not items:
        raise ConfigError(f"sweep '{what}' must not be empty")
    return items


def _problem_data(cfg):
    sec = cfg.get("problem", {})
    dim = int(sec.get("dim", 1))
    try:
        return resolve(sec.get("id"), dim, field=sec.get("field"), rhs=sec.get("rhs"),
                       u0=sec.get("u0"), exact=sec.get("exact")), dim
    except (InvalidArgument, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def _grid(cfg, M):
    kind = _get(cfg, "grid", "kind", "uniform")
    T = float(_get(cfg, "grid", "T", 1.0))
    try:
        if kind == "uniform":
            return make_uniform(T, int(M))
        if kind == "graded":
            return make_graded(T, int(M), float(_get(cfg, "grid", "gamma", 2.0)))
    except InvalidArgument as exc:
        raise ConfigError(str(exc)) from exc
    raise ConfigError(f"unknown grid kind {kind!r}")


def _space(dim, n, degree):
    try:
        return analysis.build_space(dim, int(n), int(degree))
    except InvalidArgument as exc:
        raise ConfigError(str(exc)) from exc


def _p_list(cfg):
    out = []
    for p in _as_list(_get(cfg, "analysis", "p", ["inf", 1, 2]), "p"):
        try:
            out.append(analysis._parse_p(p))
        except (InvalidArgument, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
    return out


def _p_name(p) -> str:
    return "inf" if p == math.inf else f"{p:g}"


# ------------------------------------------------------------------ output


def _clean(obj):
    """JSON-ready copy with floats at full precision and non-finite values as strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            return str(x)
        return float(f"{x:.17g}")
    return obj


def _write(out: Path, name: str, text: str) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / name).write_text(text, encoding="utf-8")


def _write_json(out: Path, name: str, obj) -> None:
    _write(out, name, json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n")


def _map(fn, items, jobs):
    """Ordered map; results follow the input order whatever the completion order."""
    if jobs > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


# ---------------------------------------------------------------- commands


def cmd_validate(cfg, out: Path, jobs: int = 1) -> int:
    data, dim = _problem_data(cfg)
    degree = int(_get(cfg, "mesh", "degree", 1))
    c = float(_get(cfg, "conditions", "c", 1.0))
    beta = float(_get(cfg, "conditions", "beta", 1.0))
    kappa = float(_get(cfg, "conditions", "kappa", 2.0))
    q_max = _get(cfg, "conditions", "quasi_uniform_max", None)
    report = {"grids": [], "meshes": []}
    ok = True
    for M in _as_list(_get(cfg, "grid", "M", 8), "M"):
        rep = validate_conditions(_grid(cfg, M), c, beta, kappa)
        report["grids"].append({"M": int(M), **rep.as_dict()})
        ok &= rep.all_ok
    for n in _as_list(_get(cfg, "mesh", "n", 8), "n"):
        space = _space(dim, n, degree)
        q = check_quasi_uniform(space.mesh)
        passes = q_max is None or q.C_measured <= float(q_max)
        report["meshes"].append({"n": int(n), "C_measured": q.C_measured,
                                 "max_diameter": q.max_diameter, "h": q.h, "passes": passes})
        ok &= passes
    T = float(_get(cfg, "grid", "T", 1.0))
    mod = temporal_modulus_audit(data.field, int(_get(cfg, "modulus", "dyadic_levels", 8)), T=T,
                                 t_points=int(_get(cfg, "modulus", "t_points", 33)))
    report["modulus"] = mod.as_dict()
    ok &= mod.passes
    ell = ellipticity_audit(data.field, np.linspace(0.0, T, 33), default_space_samples(dim))
    report["ellipticity"] = {"alpha_measured": ell.alpha_measured,
                             "alpha_declared": ell.alpha_declared, "violated": ell.violated}
    ok &= not ell.violated
    report["all_ok"] = ok
    _write_json(out, "validate.json", report)
    return EXIT_OK if ok else EXIT_VIOLATION


def _solve_one(cfg, data, dim, n, M):
    space = _space(dim, n, int(_get(cfg, "mesh", "degree", 1)))
    problem = ParabolicProblem.from_data(data, space, _grid(cfg, M),
                                         time_points=int(_get(cfg, "solver", "time_points", 4)))
    scheme = _get(cfg, "solver", "scheme", "dg0")
    try:
        sol = solve(problem, scheme)
    except InvalidArgument as exc:
        raise ConfigError(str(exc)) from exc
    return problem, sol


def cmd_solve(cfg, out: Path, jobs: int = 1) -> int:
    data, dim = _problem_data(cfg)
    ps = _p_list(cfg)
    cases = [(int(n), int(M)) for n in _as_list(_get(cfg, "mesh", "n", 8), "n")
             for M in _as_list(_get(cfg, "grid", "M", 8), "M")]

    def run(case):
        n, M = case
        problem, sol = _solve_one(cfg, data, dim, n, M)
        reports = {_p_name(p): analysis.regularity_functionals(problem, sol, p) for p in ps}
        return sol, reports

    summary = []
    for (n, M), (sol, reports) in zip(cases, _map(run, cases, jobs)):
        tag = f"n{n}_M{M}"
        _write(out, f"solution_{tag}.csv", sol.to_csv())
        first = next(iter(reports.values()))
        _write(out, f"regularity_{tag}.csv", first.to_csv())
        summary.append({"n": n, "M": M, "reports": {k: r.summary() for k, r in reports.items()}})
    _write_json(out, "solve_summary.json", {"problem": data.name, "runs": summary})
    return EXIT_OK


def cmd_operators(cfg, out: Path, jobs: int = 1) -> int:
    data, dim = _problem_data(cfg)
    degree = int(_get(cfg, "mesh", "degree", 1))
    budget = int(_get(cfg, "operators", "budget", opcalc.DEFAULT_BUDGET))
    mus = [float(m) for m in _as_list(_get(cfg, "operators", "mu", list(opcalc.DEFAULT_MU_SWEEP)), "mu")]
    audits = _as_list(_get(cfg, "operators", "audits", list(AUDITS)), "audits")
    for a in audits:
        if a not in AUDITS:
            raise ConfigError(f"unknown audit {a!r}")
    n = int(_as_list(_get(cfg, "mesh", "n", 8), "n")[0])
    M = int(_as_list(_get(cfg, "grid", "M", 8), "M")[0])
    space, grid = _space(dim, n, degree), _grid(cfg, M)
    q = int(_get(cfg, "solver", "time_points", 4))
    base = opcalc.OperatorCalculus.from_space(space, data.field, grid, 0.0, q, budget=budget)
    modulus = opcalc.fitted_modulus(data.field, grid) if "difference" in audits else None
    radii = [float(r) for r in _as_list(_get(cfg, "operators", "resolvent_abs", [1.0, 10.0, 100.0]), "resolvent_abs")]
    args = [float(a) for a in _as_list(_get(cfg, "operators", "resolvent_args", [0.75, 1.0]), "resolvent_args")]
    gamma = float(_get(cfg, "operators", "gamma", 0.5)) * math.pi
    zs = [r * complex(math.cos(a * math.pi), math.sin(a * math.pi)) for a in args for r in radii]

    def run(mu):
        ops = base.with_mu(mu)
        res = {}
        if "contraction" in audits:
            res["contraction"] = opcalc.contraction_audit(ops)
        if "smoothing" in audits:
            res["smoothing"] = opcalc.smoothing_audit(ops)
        if "resolvent" in audits and mu > 0:
            try:
                res["resolvent"] = opcalc.resolvent_audit(ops, grid.M, zs, gamma)
            except InvalidArgument as exc:
                raise ConfigError(str(exc)) from exc
        if "difference" in audits:
            res["difference"] = opcalc.difference_audit(ops, modulus)
        return res

    results = _map(run, mus, jobs)
    summary = {}
    for name in audits:
        blocks = [(mu, r[name]) for mu, r in zip(mus, results) if name in r]
        text = "".join(a.to_csv(header=(i == 0)) for i, (_, a) in enumerate(blocks))
        if blocks:
            _write(out, f"{name}.csv", text)
        summary[name] = {_fmt_mu(mu): a.aggregates for mu, a in blocks}
    _write_json(out, "operators_summary.json", summary)
    return EXIT_OK


def _fmt_mu(mu) -> str:
    return f"{mu:g}"


def _lines(cfg, dim, degree):
    sec = cfg.get("convergence", {})
    raw = sec.get("lines")
    if not raw:
        return analysis.default_plan(degree, dim)
    lines = []
    for spec in raw:
        try:
            levels = tuple((int(a), int(b)) for a, b in spec["levels"])
            lines.append(analysis.RefinementLine(
                spec.get("name", f"line{len(lines) + 1}"), spec.get("variable", "h"),
                spec["problem"], levels, int(spec.get("degree", degree)),
                int(spec.get("dim", dim)), float(spec.get("T", 1.0))))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad convergence line: {exc}") from exc
    for line in lines:
        try:
            resolve(line.problem, line.dim)
        except InvalidArgument as exc:
            raise ConfigError(str(exc)) from exc
    return lines


def cmd_convergence(cfg, out: Path, jobs: int = 1) -> int:
    _, dim = _problem_data(cfg) if "problem" in cfg else (None, 1)
    degree = int(_get(cfg, "mesh", "degree", 1))
    lines = _lines(cfg, dim, degree)
    ps = _p_list(cfg)
    p = next((x for x in ps if x != math.inf), 2.0)
    table = analysis.convergence_study(lines, p, jobs=jobs)
    _write(out, "convergence.csv", table.to_csv())
    _write_json(out, "orders.json", table.orders())
    return EXIT_OK


def cmd_bestapprox(cfg, out: Path, jobs: int = 1) -> int:
    data, dim = _problem_data(cfg)
    if data.exact is None:
        raise ConfigError("bestapprox needs a problem with an exact solution")
    ps = _p_list(cfg)
    ns = [int(n) for n in _as_list(_get(cfg, "mesh", "n", 8), "n")]
    Ms = [int(M) for M in _as_list(_get(cfg, "grid", "M", 8), "M")]
    if len(ns) != len(Ms):
        raise ConfigError("bestapprox pairs mesh.n with grid.M: the lists must have equal length")

    def run(case):
        n, M = case
        problem, sol = _solve_one(cfg, data, dim, n, M)
        return [analysis.best_approx_ratio(problem, sol, p) for p in ps]

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n", "M", "p", "error", "pik_term", "ritz_term", "log_factor", "ratio", "applicable"])
    for (n, M), results in zip(zip(ns, Ms), _map(run, list(zip(ns, Ms)), jobs)):
        for r in results:
            w.writerow([n, M, _p_name(r.p), f"{r.error:.17g}", f"{r.pik_term:.17g}",
                        f"{r.ritz_term:.17g}", f"{r.log_factor:.17g}", f"{r.ratio:.17g}", r.applicable])
    _write(out, "bestapprox.csv", buf.getvalue())
    return EXIT_OK


COMMANDS = {
    "validate": cmd_validate,
    "solve": cmd_solve,
    "operators": cmd_operators,
    "convergence": cmd_convergence,
    "bestapprox": cmd_bestapprox,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dg0lab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="TOML experiment configuration")
        p.add_argument("--out", default=None, help="output directory (overrides [output] dir)")
        p.add_argument("--jobs", type=int, default=1, help="parallel sweep workers")
        p.add_argument("--seed", type=int, default=0, help="reserved; runs are deterministic")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        out = Path(args.out or _get(cfg, "output", "dir", "out"))
        if args.jobs < 1:
            raise ConfigError("--jobs must be at least 1")
        return COMMANDS[args.command](cfg, out, args.jobs)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ResourceLimit as exc:
        print(f"resource limit: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except NumericFailure as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except Dg0Error as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
