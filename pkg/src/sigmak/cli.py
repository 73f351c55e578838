"""Experiment runner: validates a JSON manifest, executes harness
scenarios, and writes CSV/JSON results plus a run record.

Subcommands:

  sigmak run <manifest.json> [--out DIR] [--seed N] [--parallel]
  sigmak study <manifest.json> --res 17,33,65 [--out DIR]

The SIGMAK_OUT environment variable overrides the output directory.
"""

import argparse
import concurrent.futures
import hashlib
import json
import os
import sys
import time
from dataclasses import asdict

import numpy as np

from . import estimates, geometry, io, operator, solver, symfunc
from .errors import ManifestError, SigmakError
from .grids import make_grid
from .operator import ProblemSpec, RhsModel
from .solver import SolverConfig


# -- manifest ---------------------------------------------------------------


def load_manifest(path):
    try:
        with open(path) as fh:
            raw = fh.read()
    except OSError as exc:
        raise ManifestError(f"cannot read manifest: {exc}") from exc
    try:
        m = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ManifestError(f"manifest is not valid JSON: {exc}") from exc
    m["_hash"] = hashlib.sha256(raw.encode()).hexdigest()
    validate_manifest(m)
    return m


def _require(m, key, types, where="manifest"):
    if key not in m:
        raise ManifestError(f"{where}: missing field {key!r}")
    if not isinstance(m[key], types):
        raise ManifestError(
            f"{where}: field {key!r} has type {type(m[key]).__name__}"
        )
    return m[key]


def validate_manifest(m):
    chart = _require(m, "chart", dict)
    _require(chart, "kind", str, "chart")
    _require(chart, "n", int, "chart")
    _require(chart, "resolution", int, "chart")
    metric = _require(m, "metric", dict)
    formula = _require(metric, "formula", str, "metric")
    if formula not in geometry.METRIC_FORMULAS:
        raise ManifestError(f"metric: unknown formula {formula!r}")
    scenarios = _require(m, "scenarios", list)
    for i, sc in enumerate(scenarios):
        if isinstance(sc, str):
            sid = sc
        elif isinstance(sc, dict):
            sid = _require(sc, "id", str, f"scenarios[{i}]")
        else:
            raise ManifestError(f"scenarios[{i}]: must be an id string or object")
        if sid not in SCENARIOS:
            raise ManifestError(f"scenarios[{i}]: unknown scenario id {sid!r}")
    if "problem" in m:
        prob = m["problem"]
        _require(prob, "branch", str, "problem")
        op_spec = _require(prob, "operator", dict, "problem")
        _require(op_spec, "kind", str, "problem.operator")
        _require(op_spec, "k", int, "problem.operator")
    if "seed" in m and not isinstance(m["seed"], int):
        raise ManifestError("seed must be an integer")


def build_grid(m):
    chart = m["chart"]
    return make_grid(
        chart["kind"], chart["n"], chart["resolution"], chart.get("extent", 1.0)
    )


def build_metric(m, grid=None):
    grid = build_grid(m) if grid is None else grid
    metric = m["metric"]
    return geometry.make_metric(grid, metric["formula"], **metric.get("params", {}))


def build_S(selector, gf, t):
    if isinstance(selector, dict):
        kind = selector.get("kind", "identity")
        if kind == "identity":
            scale = float(selector.get("scale", 1.0))
            S = np.zeros(gf.grid.shape + (gf.n, gf.n))
            S[..., range(gf.n), range(gf.n)] = scale
            return S
        raise ManifestError(f"problem.S: unknown selector {selector!r}")
    if selector == "zero":
        return np.zeros(gf.grid.shape + (gf.n, gf.n))
    if selector == "schouten":
        return geometry.schouten(gf)
    if selector == "minus_schouten":
        return -geometry.schouten(gf)
    if selector == "modified_schouten":
        return geometry.modified_schouten(gf, t)
    if selector == "half_g":
        return 0.5 * gf.g
    raise ManifestError(f"problem.S: unknown selector {selector!r}")


def build_problem(m, gf):
    prob = m["problem"]
    op_spec = prob["operator"]
    oper = symfunc.make_operator(
        op_spec["kind"], op_spec["k"], gf.n, op_spec.get("l", 0)
    )
    t = float(prob.get("t", 1.0))
    rhs_spec = prob.get("rhs", {"kind": "exp_decay", "psi": 1.0, "k_exp": 1})
    rhs = RhsModel(
        kind=rhs_spec.get("kind", "exp_decay"),
        psi=rhs_spec.get("psi", 1.0),
        k_exp=int(rhs_spec.get("k_exp", 1)),
        Lambda=float(rhs_spec.get("Lambda", 2.0 * abs(rhs_spec.get("k_exp", 1)))),
        table_name=rhs_spec.get("table_name", ""),
        table_params=tuple(rhs_spec.get("table_params", ())),
    )
    return ProblemSpec(
        branch=prob["branch"],
        t=t,
        a=float(prob.get("a", 1.0)),
        b=float(prob.get("b", -0.5)),
        S=build_S(prob.get("S", "zero"), gf, t),
        operator=oper,
        rhs=rhs,
    )


def build_solver_config(m):
    s = m.get("solver", {})
    return SolverConfig(
        max_newton_iters=int(s.get("max_newton_iters", 30)),
        residual_tol=float(s.get("residual_tol", 1e-10)),
        shrink=float(s.get("shrink", 0.5)),
        min_step=float(s.get("min_step", 1e-6)),
        admissibility_margin=float(s.get("admissibility_margin", 1e-10)),
        linear_solver=s.get("linear_solver", "auto"),
        bc_mode=s.get("bc_mode", "solution"),
    )


# -- shared state constructions ----------------------------------------------


def neumann_modes(grid, rng, amplitude, n_modes=4, kmax=2):
    """Random combination of box Neumann modes (periodic axes get plain
    Fourier modes); zero normal derivative on every non-periodic face."""
    m = grid.meshes()
    u = np.zeros(grid.shape)
    for _ in range(n_modes):
        coeff = rng.standard_normal()
        ks = rng.integers(0, kmax + 1, size=grid.n)
        term = np.ones(grid.shape)
        for a in range(grid.n):
            c = grid.axis_coords(a)
            if grid.periodic[a]:
                term = term * np.cos(ks[a] * m[a])
            else:
                lo, hi = c[0], c[-1]
                term = term * np.cos(ks[a] * np.pi * (m[a] - lo) / (hi - lo))
        u += coeff * term
    peak = np.abs(u).max()
    return amplitude * u / peak if peak > 0 else u


def theorem1_state(grid, q=0.4, gamma=-0.02):
    """Manufactured half-ball state: radial bowl plus an x_n-even profile
    whose K attains its unweighted maximum on the face."""
    m = grid.meshes()
    rho2 = sum(x * x for x in m)
    return q * rho2 / 2.0 + gamma * np.cos(np.pi * m[-1] / grid.extent)


def manufactured_problem(gf, u_star, branch, t, a, b, k, bc_mode, S=None):
    """ProblemSpec whose rhs is manufactured so u_star solves it exactly
    in the given discretization mode."""
    oper = symfunc.make_operator("sigma_k_root", k, gf.n)
    if S is None:
        S = np.zeros(gf.grid.shape + (gf.n, gf.n))
    probe = ProblemSpec(
        branch=branch, t=t, a=a, b=b, S=S,
        operator=oper, rhs=RhsModel(kind="exp_decay", psi=1.0, k_exp=1, Lambda=2.0),
    )
    T = operator.assemble_tensor(u_star, gf, probe, bc_mode)
    lam = operator.congruent_eigenvalues(gf, T)
    flat = lam.reshape(-1, gf.n)
    if not np.all(symfunc.in_cone(flat, k)):
        raise SigmakError("manufactured state is not admissible")
    F = symfunc.evaluate_F(oper, flat, check=False).reshape(gf.grid.shape)
    psi = F * np.exp(2.0 * u_star)
    return ProblemSpec(
        branch=branch, t=t, a=a, b=b, S=probe.S, operator=oper,
        rhs=RhsModel(kind="exp_decay", psi=psi, k_exp=1, Lambda=2.0),
    )


# -- scenarios ----------------------------------------------------------------


def scenario_newton(ctx, params):
    gf = ctx["metric"]
    grid = gf.grid
    spec = build_problem(ctx["manifest"], gf)
    cfg = ctx["solver_config"]
    u0_sel = params.get("u0", "zero")
    if u0_sel == "zero":
        u0 = np.zeros(grid.shape)
    elif isinstance(u0_sel, dict) and "perturbation" in u0_sel:
        u0 = neumann_modes(grid, ctx["rng"], float(u0_sel["perturbation"]))
    else:
        raise ManifestError(f"newton: unknown u0 selector {u0_sel!r}")
    u, rep = solver.newton_solve(u0, gf, spec, cfg)
    out = ctx["out"]
    files = [
        io.write_csv(
            os.path.join(out, "newton_log.csv"),
            ["iteration", "residual", "step", "cone_distance"],
            [[r["iteration"], r["residual"], r["step"], r["cone_distance"]]
             for r in rep.history],
        ),
        io.field_to_csv(os.path.join(out, "newton_u.csv"), grid, u),
    ]
    return {"converged": rep.converged, "iterations": rep.iterations,
            "residual": rep.residual, "message": rep.message}, files


def scenario_sphere_exact(ctx, params):
    """Exact-solution construction on the round chart: S = g/2 (closed
    form), psi the matching constant, Newton from a smooth perturbation."""
    gf = ctx["metric"]
    grid = gf.grid
    k = int(params.get("k", 2))
    amp = float(params.get("perturbation", 1e-2))
    oper = symfunc.make_operator("sigma_k_root", k, gf.n)
    spec = ProblemSpec(
        branch="W", t=1.0, a=1.0, b=-0.5, S=0.5 * gf.g, operator=oper,
        rhs=RhsModel(kind="exp_decay", psi=0.5, k_exp=1, Lambda=2.0),
    )
    u0 = neumann_modes(grid, ctx["rng"], amp)
    u, rep = solver.newton_solve(u0, gf, spec, ctx["solver_config"])
    out = ctx["out"]
    files = [
        io.write_csv(
            os.path.join(out, "sphere_exact_log.csv"),
            ["iteration", "residual", "step", "cone_distance"],
            [[r["iteration"], r["residual"], r["step"], r["cone_distance"]]
             for r in rep.history],
        )
    ]
    status = {
        "converged": rep.converged, "iterations": rep.iterations,
        "max_abs_u": float(np.abs(u).max()), "residual": rep.residual,
    }
    if not rep.converged:
        raise SigmakError(f"sphere exact solve failed: {rep.message}")
    return status, files


def scenario_continuation(ctx, params):
    gf = ctx["metric"]
    k = int(params.get("k", 2))
    t_target = float(params.get("t_target", 1.0))
    a0 = solver.choose_start_parameter(gf)
    fam = solver.yamabe_family(gf, k, a0)
    state = solver.continuation_in_t(
        gf, fam, ctx["solver_config"], a0, t_target,
        allow_growth=bool(params.get("allow_growth", True)),
        initial_step=params.get("initial_step"),
    )
    out = ctx["out"]
    files = [
        io.write_csv(
            os.path.join(out, "continuation_path.csv"),
            ["t", "residual", "sup_grad_sq", "sup_hess", "K_min", "K_max",
             "cone_distance", "newton_iters", "step"],
            [[r["t"], r["residual"], r["sup_grad_sq"], r["sup_hess"],
              r["K_min"], r["K_max"], r["cone_distance"], r["newton_iters"],
              r["step"]] for r in state.path],
        )
    ]
    if not state.success:
        raise SigmakError(f"continuation failed: {state.message}")
    return {"t_final": state.t_current, "nodes": len(state.path),
            "max_residual": max(r["residual"] for r in state.path)}, files


def scenario_theorem1_boundary_max(ctx, params):
    gf = ctx["metric"]
    grid = gf.grid
    p_list = params.get("p_list", [0, 1, 2, 4, 8, 16, 32, 64])
    u_star = theorem1_state(grid, float(params.get("q", 0.4)),
                            float(params.get("gamma", -0.02)))
    spec = manufactured_problem(
        gf, u_star, "W", float(params.get("t", 0.5)), float(params.get("a", 1.0)),
        float(params.get("b", -1.0)), int(params.get("k", 2)), "face_only",
    )
    cfg = build_solver_config(ctx["manifest"])
    if cfg.bc_mode != "face_only":
        cfg = SolverConfig(
            max_newton_iters=cfg.max_newton_iters, residual_tol=cfg.residual_tol,
            shrink=cfg.shrink, min_step=cfg.min_step,
            admissibility_margin=cfg.admissibility_margin,
            linear_solver=cfg.linear_solver, bc_mode="face_only",
        )
    m = grid.meshes()
    pert = float(params.get("perturbation", 1e-3)) * np.cos(
        np.pi * m[-1] / grid.extent
    ) * np.cos(0.5 * np.pi * m[0] / grid.extent)
    u, rep = solver.newton_solve(u_star + pert, gf, spec, cfg)
    if not rep.converged:
        raise SigmakError(f"theorem-1 state solve failed: {rep.message}")
    bm = estimates.boundary_max_test(
        u, gf, spec, spec.a, p_list, grid.extent, mode="face_only"
    )
    report = estimates.check_bounds(
        u, gf, spec, {"delta1": 0.5, "delta3": 1.0}, mode="face_only"
    )
    if bm.argmax_interior:
        report.boundary_max_location = (
            "interior" if bm.argmax_interior[-1] else "boundary"
        )
    out = ctx["out"]
    files = [
        io.write_csv(
            os.path.join(out, "boundary_max.csv"),
            ["p", "argmax_interior"],
            list(zip(bm.p_values, bm.argmax_interior)),
        ),
        io.write_json(os.path.join(out, "boundary_max.json"), asdict(bm)),
        io.write_json(
            os.path.join(out, "estimate_report.json"), json.loads(report.to_json())
        ),
    ]
    return {"minimal_interior_p": bm.minimal_interior_p,
            "monotone": bm.monotone_interior, "skipped": bm.skipped,
            "boundary_max_location": report.boundary_max_location}, files


_BOUND_STATES = ("theorem1", "v_branch", "torus_w")


def _bound_state(state_name, grid_kind, n, res, extent):
    grid = make_grid(grid_kind, n, res, extent)
    gf = geometry.make_metric(grid, "flat")
    if state_name == "theorem1":
        u = theorem1_state(grid)
        spec = manufactured_problem(gf, u, "W", 0.5, 1.0, -1.0, 2, "face_only")
        deltas = {"delta1": 0.5, "delta3": 1.0}
    elif state_name == "v_branch":
        u = theorem1_state(grid)
        spec = manufactured_problem(gf, u, "V", float(n), 1.0, -0.5, 2, "face_only")
        deltas = {"delta1": 0.5}
    else:  # torus_w
        m = grid.meshes()
        u = 0.4 + 0.2 * np.cos(m[0]) * np.cos(m[1]) + 0.1 * np.cos(m[2])
        S = np.zeros(grid.shape + (n, n))
        S[..., range(n), range(n)] = 1.5  # positive background keeps W in the cone
        spec = manufactured_problem(gf, u, "W", 0.5, 1.0, -1.0, 2, "solution", S=S)
        deltas = {"delta1": 0.5, "delta3": 1.0}
    return u, gf, spec, deltas


def scenario_bounds_check(ctx, params):
    m = ctx["manifest"]
    chart = m["chart"]
    state_name = params.get("state", "theorem1")
    if state_name not in _BOUND_STATES:
        raise ManifestError(f"bounds_check: unknown state {state_name!r}")
    kind = "periodic_torus" if state_name == "torus_w" else "half_ball_fermi"
    res = int(params.get("resolution", chart["resolution"]))
    deltas_override = params.get("deltas")
    rows, reports = [], {}
    for vres in (res, 2 * res - 1) if kind != "periodic_torus" else (res, 2 * res):
        u, gf, spec, deltas = _bound_state(state_name, kind, chart["n"], vres,
                                           chart.get("extent", 1.0))
        if deltas_override:
            deltas = {k: float(v) for k, v in deltas_override.items()}
        rep = estimates.check_bounds(u, gf, spec, deltas)
        reports[vres] = rep
        for c in rep.bounds_checked:
            rows.append([state_name, vres, c.inequality, c.fitted_C, c.passed])
    res2 = 2 * res - 1 if kind != "periodic_torus" else 2 * res
    stab = estimates.bounds_stability(reports[res], reports[res2])
    out = ctx["out"]
    files = [
        io.write_csv(
            os.path.join(out, f"bounds_{state_name}.csv"),
            ["scenario", "resolution", "inequality", "fitted_C", "passed"],
            rows,
        ),
        io.write_json(os.path.join(out, f"bounds_{state_name}.json"), {
            "stability": stab,
            "report_h": asdict(reports[res]),
            "report_h2": asdict(reports[res2]),
        }),
    ]
    if not all(v["stable"] for v in stab.values()):
        raise SigmakError(f"bound constants unstable: {stab}")
    return {"stability": stab}, files


def scenario_functional(ctx, params):
    gf = ctx["metric"]
    grid = gf.grid
    k = int(params.get("k", 1))
    m = grid.meshes()
    u_test = np.ones(grid.shape)
    for a in range(grid.n):
        c = grid.axis_coords(a)
        if grid.periodic[a]:
            u_test = u_test + 0.1 * np.cos(m[a])
        else:
            u_test = u_test + 0.1 * np.cos(np.pi * (m[a] - c[0]) / (c[-1] - c[0]))
    y = estimates.yamabe_functional(u_test, gf)
    fk = estimates.F_k_functional(gf, k)
    out = ctx["out"]
    files = [io.write_csv(os.path.join(out, "functionals.csv"),
                          ["name", "k", "value"],
                          [["yamabe_1", 1, y], ["curvature_integral", k, fk]])]
    return {"yamabe_1": y, "F_k": fk}, files


def scenario_structure_conditions(ctx, params):
    n = ctx["manifest"]["chart"]["n"]
    k = int(params.get("k", 2))
    l = int(params.get("l", 0))
    kind = "quotient" if l > 0 else "sigma_k_root"
    count = int(params.get("samples", 1000))
    epsilon = float(params.get("epsilon", 0.05))
    spec = symfunc.make_operator(kind, k, n, l)
    samples = symfunc.sample_cone(n, k, count, ctx["rng"])
    report = symfunc.check_structure_conditions(spec, samples, epsilon)
    out = ctx["out"]
    files = [io.write_json(os.path.join(out, "structure_conditions.json"),
                           json.loads(report.to_json()))]
    if not report.all_pass:
        raise SigmakError(f"structure conditions failed: {report.to_json()}")
    return {"epsilon_max": report.epsilon_max, "all_pass": report.all_pass}, files


def scenario_property_sweep(ctx, params):
    n = ctx["manifest"]["chart"]["n"]
    count = int(params.get("samples", 2000))
    rng = ctx["rng"]
    rows = []
    for k in range(1, n + 1):
        samples = symfunc.sample_cone(n, k, count, rng)
        spec = symfunc.make_operator("sigma_k_root", k, n)
        F = symfunc.evaluate_F(spec, samples, check=False)
        grad = symfunc.F_gradient(spec, samples, check=False)
        euler = np.abs((samples * grad).sum(axis=1) - F) / np.abs(F)
        gsum = grad.sum(axis=1)
        row = [n, k, float(euler.max()), float(gsum.min())]
        if k >= 2:
            nm = symfunc.newton_maclaurin_residual(samples, k, k - 1)
            scale = symfunc.newton_maclaurin_scale(samples, k, k - 1)
            row.append(float((nm / np.maximum(scale, 1e-300)).min()))
        else:
            row.append(0.0)
        rows.append(row)
    out = ctx["out"]
    files = [io.write_csv(
        os.path.join(out, "property_sweep.csv"),
        ["n", "k", "max_euler_rel_defect", "min_gradient_sum", "min_nm_rel_residual"],
        rows,
    )]
    worst_euler = max(r[2] for r in rows)
    if worst_euler > 1e-10:
        raise SigmakError(f"Euler identity defect {worst_euler:.3e} exceeds 1e-10")
    return {"max_euler_rel_defect": worst_euler}, files


SCENARIOS = {
    "newton": scenario_newton,
    "sphere_exact": scenario_sphere_exact,
    "continuation": scenario_continuation,
    "theorem1_boundary_max": scenario_theorem1_boundary_max,
    "bounds_check": scenario_bounds_check,
    "functional": scenario_functional,
    "structure_conditions": scenario_structure_conditions,
    "property_sweep": scenario_property_sweep,
}

CSV_SCHEMA = {
    "newton_log.csv": ["iteration", "residual max-norm", "accepted step length",
                       "min cone distance"],
    "sphere_exact_log.csv": ["iteration", "residual max-norm",
                             "accepted step length", "min cone distance"],
    "continuation_path.csv": ["deformation parameter t", "node residual max-norm",
                              "sup |grad u|^2", "sup |hess u|_g", "K min", "K max",
                              "min cone distance", "newton iterations",
                              "t step at node"],
    "boundary_max.csv": ["exponential weight p", "argmax interior flag"],
    "bounds_*.csv": ["scenario state", "resolution", "inequality id",
                     "fitted constant", "finite-fit flag"],
    "functionals.csv": ["functional name", "order k", "value"],
    "property_sweep.csv": ["dimension", "order k", "max Euler relative defect",
                           "min gradient sum", "min Newton-Maclaurin residual"],
    "newton_u.csv": ["flat index", "coordinates", "solution value"],
    "study.csv": ["resolution", "grid spacing", "round-trip max error",
                  "observed order vs previous"],
}


# -- run / study -------------------------------------------------------------


def run(manifest_path, out_dir=None, seed=None, parallel=False):
    m = load_manifest(manifest_path)
    out = os.environ.get("SIGMAK_OUT") or out_dir or m.get("output_dir", "out")
    os.makedirs(out, exist_ok=True)
    seed = m.get("seed", 0) if seed is None else seed
    grid = build_grid(m)
    gf = build_metric(m, grid)
    cfg = build_solver_config(m)

    entries = []
    for sc in m["scenarios"]:
        sid, params = (sc, {}) if isinstance(sc, str) else (sc["id"], dict(sc))
        params.pop("id", None)
        entries.append((sid, params))

    record = {"manifest_hash": m["_hash"], "scenarios": [], "output_dir": out}

    def run_one(sid, params):
        ctx = {
            "manifest": m, "metric": gf, "solver_config": cfg, "out": out,
            "rng": np.random.default_rng(seed),
        }
        t0 = time.perf_counter()
        try:
            status, files = SCENARIOS[sid](ctx, params)
            return {"id": sid, "status": "ok", "detail": status,
                    "outputs": files, "wall_time_s": time.perf_counter() - t0}
        except SigmakError as exc:
            return {"id": sid, "status": "failed", "error": str(exc),
                    "outputs": [], "wall_time_s": time.perf_counter() - t0}

    if parallel:
        with concurrent.futures.ThreadPoolExecutor() as pool:
            results = list(pool.map(lambda e: run_one(*e), entries))
    else:
        results = [run_one(sid, params) for sid, params in entries]
    record["scenarios"] = results
    io.write_json(os.path.join(out, "run_record.json"), record)
    io.write_json(os.path.join(out, "schema.json"), CSV_SCHEMA)
    failed = [r["id"] for r in results if r["status"] != "ok"]
    return record, (1 if failed else 0)


def round_trip_error(grid_kind, n, res, extent, formula, params=None):
    """Max-norm discrepancy between the conformal transformation law and
    direct recomputation of the Schouten tensor."""
    grid = make_grid(grid_kind, n, res, extent)
    gf = geometry.make_metric(grid, formula, **(params or {}))
    mm = grid.meshes()
    if grid.chart_kind == "periodic_torus":
        u = 0.1 * np.sin(mm[0]) * np.cos(mm[1])
    else:
        c0 = grid.axis_coords(0)
        u = 0.1 * np.cos(np.pi * (mm[0] - c0[0]) / (c0[-1] - c0[0])) * np.cos(
            np.pi * (mm[1] - c0[0]) / (c0[-1] - c0[0])
        )
    A = geometry.schouten(gf)
    lhs = geometry.schouten_transform(gf, u, A)
    rhs = geometry.schouten(geometry.conformal_metric(gf, u))
    return float(np.abs(lhs - rhs).max())


def curvature_zero_error(grid_kind, n, res, extent, formula, params=None):
    """Max-norm Ricci of formulas that are flat analytically."""
    grid = make_grid(grid_kind, n, res, extent)
    gf = geometry.make_metric(grid, formula, **(params or {}))
    ric, _ = geometry.ricci_and_scalar(gf)
    return float(np.abs(ric).max())


STUDY_KINDS = {
    "round_trip": round_trip_error,
    "curvature_zero": curvature_zero_error,
}


def convergence_study(manifest_path, resolutions, out_dir=None):
    m = load_manifest(manifest_path)
    if len(resolutions) < 2:
        raise ManifestError("study needs at least 2 resolutions")
    out = os.environ.get("SIGMAK_OUT") or out_dir or m.get("output_dir", "out")
    os.makedirs(out, exist_ok=True)
    chart = m["chart"]
    metric = m["metric"]
    default_kind = "curvature_zero" if metric["formula"].startswith("flat") else "round_trip"
    kind = m.get("study", {}).get("kind", default_kind)
    if kind not in STUDY_KINDS:
        raise ManifestError(f"study: unknown kind {kind!r}")
    error_fn = STUDY_KINDS[kind]
    rows = []
    prev = None
    for res in resolutions:
        grid = make_grid(chart["kind"], chart["n"], res, chart.get("extent", 1.0))
        h = grid.spacing(0)
        err = error_fn(chart["kind"], chart["n"], res, chart.get("extent", 1.0),
                       metric["formula"], metric.get("params", {}))
        if prev is None:
            order = ""
        elif err < 1e-12 and prev[1] < 1e-12:
            order = "exact"
        else:
            order = np.log(prev[1] / err) / np.log(prev[0] / h)
        rows.append([res, h, err, order])
        prev = (h, err)
    io.write_csv(os.path.join(out, "study.csv"),
                 ["resolution", "h", "error", "observed_order"], rows)
    io.write_json(os.path.join(out, "schema.json"), CSV_SCHEMA)
    return rows


# -- entry point ---------------------------------------------------------------


def main(argv=None):
    parser = argparse.ArgumentParser(prog="sigmak")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="execute the scenarios of a manifest")
    p_run.add_argument("manifest")
    p_run.add_argument("--out", default=None)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--parallel", action="store_true")
    p_study = sub.add_parser("study", help="convergence study over resolutions")
    p_study.add_argument("manifest")
    p_study.add_argument("--res", required=True,
                         help="comma-separated resolutions, e.g. 17,33,65")
    p_study.add_argument("--out", default=None)
    args = parser.parse_args(argv)

    try:
        if args.command == "run":
            record, code = run(args.manifest, args.out, args.seed, args.parallel)
            for sc in record["scenarios"]:
                print(f"[{sc['status']}] {sc['id']} ({sc['wall_time_s']:.2f}s)")
            return code
        resolutions = [int(x) for x in args.res.split(",") if x]
        rows = convergence_study(args.manifest, resolutions, args.out)
        for row in rows:
            print(f"res={row[0]} h={row[1]:.5f} err={row[2]:.4e} order={row[3]}")
        return 0
    except ManifestError as exc:
        print(f"manifest error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
