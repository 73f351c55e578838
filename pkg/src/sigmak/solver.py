"""Damped Newton iteration for F(g^-1 T(u)) = f(x, u) and the
continuity-method deformation in the modified-Schouten parameter t.

The discrete problem carries the homogeneous Neumann condition by
ghost-point reflection on every non-periodic face (periodic charts need no
boundary handling).  Newton steps are safeguarded: a backtracking line
search rejects any step that leaves the Garding cone or drops the minimum
cone distance below the configured margin.
"""

from dataclasses import dataclass, field as dc_field

import numpy as np
import scipy.sparse.linalg as spla

from . import geometry, operator, symfunc
from .errors import AdmissibilityError, ChartError
from .grids import assemble_linear_operator
from .operator import ProblemSpec, rhs_eval


@dataclass(frozen=True)
class SolverConfig:
    max_newton_iters: int = 30
    residual_tol: float = 1e-10
    shrink: float = 0.5
    min_step: float = 1e-6
    admissibility_margin: float = 1e-10
    linear_solver: str = "auto"  # "auto" | "umfpack" | "splu"
    bc_mode: str = "solution"  # "solution" (box = manifold) | "face_only" (local problem)

    def __post_init__(self):
        if self.residual_tol <= 0:
            raise ValueError("residual_tol must be positive")
        if not 0.0 < self.shrink < 1.0:
            raise ValueError("shrink factor must lie in (0, 1)")
        if self.linear_solver not in ("auto", "umfpack", "splu"):
            raise ValueError(f"unknown linear solver {self.linear_solver!r}")
        if self.bc_mode not in ("solution", "face_only"):
            raise ValueError(f"unknown bc mode {self.bc_mode!r}")


def _splu_solve(J, rhs):
    return spla.splu(J.tocsc()).solve(rhs)


def _umfpack_solve(J, rhs):
    from cvxopt import matrix as cv_matrix, spmatrix, umfpack

    coo = J.tocoo()
    Jc = spmatrix(coo.data.tolist(), coo.row.tolist(), coo.col.tolist(), coo.shape)
    sym = umfpack.symbolic(Jc)
    num = umfpack.numeric(Jc, sym)
    x = cv_matrix(rhs)
    umfpack.solve(Jc, num, x)
    return np.array(x).ravel()


def make_linear_solver(name):
    """Direct sparse factorization selected by name; "auto" prefers the
    UMFPACK binding and falls back to SuperLU."""
    if name in ("auto", "umfpack"):
        try:
            import cvxopt.umfpack  # noqa: F401

            return _umfpack_solve
        except ImportError:
            if name == "umfpack":
                raise
    return _splu_solve


@dataclass
class NewtonReport:
    converged: bool
    iterations: int
    residual: float
    message: str
    history: list = dc_field(default_factory=list)
    # history rows: dict(iteration, residual, step, cone_distance)


def _residual_and_distance(u, gf, spec, mode="solution"):
    T = operator.assemble_tensor(u, gf, spec, mode)
    lam = operator.congruent_eigenvalues(gf, T)
    flat = lam.reshape(-1, gf.n)
    dist = float(symfunc.cone_distance(flat, spec.operator.k).min())
    if dist <= 0.0:
        return None, dist, T
    Fval = symfunc.evaluate_F(spec.operator, flat, check=False).reshape(gf.grid.shape)
    f, _ = rhs_eval(spec.rhs, u)
    return Fval - np.broadcast_to(f, gf.grid.shape), dist, T


def _jacobian(u, gf, spec, lin, mode="solution"):
    """Sparse Newton matrix from the linearized coefficients.

    F^ij dT_ij(v) = PQ^ij (d_i d_j v - Gamma^m_ij d_m v)
                    +/- (2a F^ij u_i + 2b sumF g^ij u_i) d_j v,
    with + for the W branch, - for V; the zero-order term is -f_z.
    """
    grid = gf.grid
    du = geometry.grad_scalar(gf, u, mode)
    Gam = geometry.christoffel(gf)
    sign = 1.0 if spec.branch == "W" else -1.0
    c2 = lin.PQ_ij
    c1 = -np.einsum("...ij,...mij->...m", lin.PQ_ij, Gam)
    a = np.asarray(spec.a, dtype=np.float64)
    b = np.asarray(spec.b, dtype=np.float64)
    c1 = c1 + sign * 2.0 * a[..., None] * np.einsum("...ij,...i->...j", lin.F_ij, du)
    c1 = c1 + sign * 2.0 * (b * lin.sumF)[..., None] * np.einsum(
        "...ij,...i->...j", gf.g_inv, du
    )
    _, f_z = rhs_eval(spec.rhs, u)
    c0 = -np.broadcast_to(f_z, grid.shape)
    return assemble_linear_operator(grid, c2, c1, c0, mode=mode)


def newton_solve(u0, gf, spec, cfg):
    """Damped Newton for the discrete problem; returns (u, NewtonReport).

    Preconditions: u0 admissible everywhere.  Non-convergence and line
    search safeguard failures return a report with the partial state rather
    than raising.
    """
    u = np.array(u0, dtype=np.float64, copy=True)
    if u.shape != gf.grid.shape:
        raise ValueError("initial guess shape does not match grid")
    r, dist, _ = _residual_and_distance(u, gf, spec, cfg.bc_mode)
    if r is None or dist < cfg.admissibility_margin:
        raise AdmissibilityError(
            f"initial state inadmissible (min cone distance {dist:.3e})"
        )
    history = []
    solve = make_linear_solver(cfg.linear_solver)
    rnorm = float(np.abs(r).max())
    for it in range(1, cfg.max_newton_iters + 1):
        if rnorm <= cfg.residual_tol:
            return u, NewtonReport(True, it - 1, rnorm, "converged", history)
        lin = operator.linearize(u, gf, spec, cfg.bc_mode)
        J = _jacobian(u, gf, spec, lin, cfg.bc_mode)
        try:
            delta = solve(J, -r.ravel()).reshape(gf.grid.shape)
        except (RuntimeError, ArithmeticError) as exc:
            return u, NewtonReport(
                False, it, rnorm, f"singular linearized operator: {exc}", history
            )
        if not np.all(np.isfinite(delta)):
            return u, NewtonReport(
                False, it, rnorm, "singular linearized operator: non-finite step", history
            )
        step = 1.0
        accepted = False
        while step >= cfg.min_step:
            u_try = u + step * delta
            r_try, dist_try, _ = _residual_and_distance(u_try, gf, spec, cfg.bc_mode)
            if (
                r_try is not None
                and dist_try >= cfg.admissibility_margin
                and float(np.abs(r_try).max()) <= (1.0 - 1e-4 * step) * rnorm
            ):
                accepted = True
                break
            step *= cfg.shrink
        if not accepted:
            return u, NewtonReport(
                False,
                it,
                rnorm,
                "line search could not maintain admissibility and descent",
                history,
            )
        u, r, dist = u_try, r_try, dist_try
        rnorm = float(np.abs(r).max())
        history.append(
            {"iteration": it, "residual": rnorm, "step": step, "cone_distance": dist}
        )
    if rnorm <= cfg.residual_tol:
        return u, NewtonReport(True, cfg.max_newton_iters, rnorm, "converged", history)
    return u, NewtonReport(
        False, cfg.max_newton_iters, rnorm, "max iterations exceeded", history
    )


# -- boundary condition -----------------------------------------------------


def boundary_condition_residual(u, gf, tau_tilde):
    """Pointwise u_nu - (tau~ e^-u - tau) on the x_n = 0 face."""
    grid = gf.grid
    if not grid.has_boundary_face:
        raise ChartError("boundary condition residual needs a half_ball_fermi chart")
    u_n = grid.face_values(grid.d1(u, grid.normal_axis, "field"))
    _, tau, _ = geometry.second_fundamental_form(gf)
    u_face = grid.face_values(u)
    return u_n - (tau_tilde * np.exp(-u_face) - tau)


# -- continuation in t ------------------------------------------------------


@dataclass
class ContinuationState:
    t_current: float
    u_current: np.ndarray
    path: list
    success: bool
    message: str
    # path rows: dict(t, residual, sup_grad_sq, sup_hess, K_min, K_max,
    #                 cone_distance, newton_iters, step)


def choose_start_parameter(gf, candidates=(0.0, -1.0, -2.0, -4.0, -8.0, -16.0)):
    """Largest candidate a with the modified Schouten tensor A^a positive
    definite at every grid point."""
    for a in candidates:
        At = geometry.modified_schouten(gf, a)
        lam = operator.congruent_eigenvalues(gf, At)
        if lam.min() > 0.0:
            return float(a)
    raise AdmissibilityError("no candidate start parameter makes A^a positive definite")


def yamabe_family(gf, k, a_start):
    """Family builder for the sigma_k^(1/k) deformation: at parameter t the
    problem is the conformal transformation law of A^t (a = 1,
    b = -(2-t)/2, S = A^t_g) with right side f(x) e^{2u}, and f(x) is
    computed so u = 0 solves the t = a_start member exactly."""
    n = gf.n
    op = symfunc.make_operator("sigma_k_root", k, n)
    A_a = geometry.modified_schouten(gf, a_start)
    lam0 = operator.congruent_eigenvalues(gf, A_a)
    f0 = symfunc.evaluate_F(op, lam0.reshape(-1, n)).reshape(gf.grid.shape)
    rhs = operator.RhsModel(kind="exp_decay", psi=f0, k_exp=-1, Lambda=2.0)

    def family(t):
        return ProblemSpec(
            branch="W",
            t=t,
            a=1.0,
            b=-(2.0 - t) / 2.0,
            S=geometry.modified_schouten(gf, t),
            operator=op,
            rhs=rhs,
        )

    return family


def _node_stats(u, gf, spec, report, step, mode="solution"):
    du = geometry.grad_scalar(gf, u, mode)
    H = geometry.hessian_scalar(gf, u, mode, grad=du)
    nsq = np.einsum("...ij,...i,...j->...", gf.g_inv, du, du)
    lap = np.einsum("...ij,...ij->...", gf.g_inv, H)
    hnorm = geometry.tensor_frobenius_norm(gf, H)
    K = lap + np.asarray(spec.a, dtype=np.float64) * nsq
    if gf.grid.has_boundary_face:
        region = gf.grid.ball_mask(gf.grid.extent / 2.0)
    else:
        region = np.ones(gf.grid.shape, dtype=bool)
    _, dist = operator.admissibility(u, gf, spec, mode)
    return {
        "t": spec.t,
        "residual": report.residual,
        "sup_grad_sq": float(nsq[region].max()),
        "sup_hess": float(hnorm[region].max()),
        "K_min": float(K.min()),
        "K_max": float(K.max()),
        "cone_distance": dist,
        "newton_iters": report.iterations,
        "step": step,
    }


def continuation_in_t(
    gf,
    spec_family,
    cfg,
    t_start,
    t_end,
    initial_step=None,
    step_floor=None,
    u0=None,
    allow_growth=True,
):
    """March t from t_start to t_end with adaptive steps and Newton warm
    starts.  Steps halve on failure (down to the floor) and double after two
    consecutive one-shot successes (set allow_growth=False for fixed-step
    comparison runs)."""
    span = abs(t_end - t_start)
    if span == 0.0:
        raise ValueError("degenerate continuation interval")
    direction = 1.0 if t_end > t_start else -1.0
    dt = span / 20.0 if initial_step is None else abs(initial_step)
    floor = span / 2048.0 if step_floor is None else abs(step_floor)

    if gf.grid.has_boundary_face:
        _, _, geodesic = geometry.second_fundamental_form(gf)
        if not geodesic:
            raise ChartError("continuation on a half-ball needs a totally geodesic face")

    u = np.zeros(gf.grid.shape) if u0 is None else np.array(u0, dtype=np.float64)
    spec0 = spec_family(t_start)
    ok, dist = operator.admissibility(u, gf, spec0, cfg.bc_mode)
    if not ok:
        raise AdmissibilityError(
            f"start state inadmissible at t={t_start} (cone distance {dist:.3e})"
        )
    u, rep = newton_solve(u, gf, spec0, cfg)
    if not rep.converged:
        raise AdmissibilityError(f"start problem did not converge: {rep.message}")
    path = [_node_stats(u, gf, spec0, rep, dt, cfg.bc_mode)]

    t = t_start
    streak = 0
    while abs(t - t_end) > 1e-14:
        t_next = t + direction * min(dt, abs(t_end - t))
        spec = spec_family(t_next)
        try:
            u_next, rep = newton_solve(u, gf, spec, cfg)
            good = rep.converged
        except AdmissibilityError:
            good = False
        if good:
            t, u = t_next, u_next
            path.append(_node_stats(u, gf, spec, rep, dt, cfg.bc_mode))
            streak += 1
            if allow_growth and streak >= 2:
                dt *= 2.0
                streak = 0
        else:
            streak = 0
            dt *= 0.5
            if dt < floor:
                return ContinuationState(
                    t_current=t,
                    u_current=u,
                    path=path,
                    success=False,
                    message=f"step floor reached at t={t:.6f}",
                )
    return ContinuationState(
        t_current=t, u_current=u, path=path, success=True, message="reached target"
    )
