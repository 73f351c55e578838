"""Assembly of the fully nonlinear operators.

The W tensor (trace-modified Hessian with gradient terms and a background
2-form S), its V-branch mirror, pointwise evaluation of F(g^-1 W) via the
symmetric generalized eigenproblem, the linearized coefficients F^ij and
the elliptic combinations P^ij / Q^ij, and the right-hand-side models
f(x, u).
"""

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from . import symfunc
from .errors import AdmissibilityError, NumericalError
from .geometry import grad_scalar, hessian_scalar
from .symfunc import OperatorSpec

Coefficient = Union[float, np.ndarray]


# -- right-hand sides -------------------------------------------------------

RHS_TABLE: dict[str, Callable] = {
    "constant": lambda x, u, c=1.0: (
        np.full(np.shape(u), float(c)),
        np.zeros(np.shape(u)),
    ),
}


@dataclass(frozen=True)
class RhsModel:
    """f(x, u) model.

    kind "exp_decay": f = psi(x) exp(-2 k u); the continuation equations use
    k = -1.  kind "table": named entry of RHS_TABLE.  Lambda is the claimed
    bound with |grad_x f| <= Lambda f and |f_z| <= Lambda f.
    """

    kind: str
    psi: Coefficient = 1.0
    k_exp: int = 1
    Lambda: float = 0.0
    table_name: str = ""
    table_params: tuple = ()

    def __post_init__(self):
        if self.kind not in ("exp_decay", "table"):
            raise ValueError(f"unknown rhs kind {self.kind!r}")
        if self.kind == "table" and self.table_name not in RHS_TABLE:
            raise ValueError(f"unknown rhs table entry {self.table_name!r}")


def rhs_eval(model, u, grid=None, with_grad=False):
    """(f, f_z) fields at the grid points, plus grad_x f when requested.

    ``u`` may be a grid field or a scalar; psi broadcasts likewise.
    """
    u = np.asarray(u, dtype=np.float64)
    if model.kind == "exp_decay":
        psi = np.asarray(model.psi, dtype=np.float64)
        if np.any(psi <= 0.0):
            raise ValueError("rhs model requires psi > 0")
        f = psi * np.exp(-2.0 * model.k_exp * u)
        f_z = -2.0 * model.k_exp * f
        if not with_grad:
            return f, f_z
        if grid is None:
            raise ValueError("grad_x f needs the grid")
        psi_full = np.broadcast_to(psi, grid.shape)
        gradx = grid.grad(psi_full, "field") * np.exp(-2.0 * model.k_exp * u)[..., None]
        return f, f_z, gradx
    fn = RHS_TABLE[model.table_name]
    f, f_z = fn(None, u, *model.table_params)
    if np.any(f <= 0.0):
        raise ValueError("rhs model must be positive")
    if not with_grad:
        return f, f_z
    return f, f_z, np.zeros(np.shape(u) + (grid.n,))


def rhs_lambda_bound(model):
    """Smallest Lambda valid for the z-derivative: |f_z| = 2|k| f."""
    if model.kind == "exp_decay":
        return 2.0 * abs(model.k_exp)
    return 0.0


def rhs_verify_lambda(model, grid, u_samples=(-1.0, 0.0, 1.0)):
    """Measure the claimed bounds |grad_x f| <= Lambda f and |f_z| <= Lambda f
    over sampled u levels; returns the measured ratios and a pass flag."""
    worst_x, worst_z = 0.0, 0.0
    positive = True
    for u0 in u_samples:
        u = np.full(grid.shape, float(u0))
        f, f_z, gradx = rhs_eval(model, u, grid, with_grad=True)
        f = np.broadcast_to(f, grid.shape)
        positive &= bool(f.min() > 0.0)
        gnorm = np.sqrt(np.einsum("...i,...i->...", gradx, gradx))
        worst_x = max(worst_x, float((gnorm / f).max()))
        worst_z = max(worst_z, float((np.abs(f_z) / f).max()))
    return {
        "measured_lambda_x": worst_x,
        "measured_lambda_z": worst_z,
        "claimed_lambda": model.Lambda,
        "positive": positive,
        "holds": positive
        and worst_x <= model.Lambda * (1.0 + 1e-10)
        and worst_z <= model.Lambda * (1.0 + 1e-10),
    }


# -- problem specification --------------------------------------------------


@dataclass(frozen=True)
class ProblemSpec:
    """One fully nonlinear problem F(g^-1 T(u)) = f(x, u).

    branch "W": T = nabla^2 u + (1-t)/(n-2) (lap u) g + a du (x) du
                    + b |du|^2 g + S, with t <= 1.
    branch "V": T = (t-1)/(n-2) (lap u) g - nabla^2 u - a du (x) du
                    - b |du|^2 g + S, with t >= n-1.
    """

    branch: str
    t: float
    a: Coefficient
    b: Coefficient
    S: np.ndarray
    operator: OperatorSpec
    rhs: RhsModel

    def __post_init__(self):
        if self.branch not in ("W", "V"):
            raise ValueError(f"unknown branch {self.branch!r}")
        n = self.operator.n
        if self.branch == "W" and self.t > 1.0 + 1e-12:
            raise ValueError(f"W branch requires t <= 1, got t={self.t}")
        if self.branch == "V" and self.t < n - 1.0 - 1e-12:
            raise ValueError(f"V branch requires t >= n-1, got t={self.t}")


def _coef(c):
    return np.asarray(c, dtype=np.float64)[..., None, None]


def assemble_W(u, gf, spec, mode="solution"):
    """W = nabla^2 u + (1-t)/(n-2)(lap u) g + a du (x) du + b |du|^2 g + S."""
    if spec.branch != "W":
        raise ValueError("assemble_W needs a W-branch spec")
    return _assemble(u, gf, spec, mode, sign=+1.0)


def assemble_V(u, gf, spec, mode="solution"):
    """V = (t-1)/(n-2)(lap u) g - nabla^2 u - a du (x) du - b |du|^2 g + S."""
    if spec.branch != "V":
        raise ValueError("assemble_V needs a V-branch spec")
    return _assemble(u, gf, spec, mode, sign=-1.0)


def _assemble(u, gf, spec, mode, sign):
    u = np.asarray(u, dtype=np.float64)
    if u.shape != gf.grid.shape:
        raise ValueError("field shape does not match grid")
    if spec.S.shape != gf.grid.shape + (gf.n, gf.n):
        raise ValueError("S shape does not match grid")
    n = gf.n
    du = grad_scalar(gf, u, mode)
    H = hessian_scalar(gf, u, mode, grad=du)
    lap = np.einsum("...ij,...ij->...", gf.g_inv, H)
    nsq = np.einsum("...ij,...i,...j->...", gf.g_inv, du, du)
    # sign=+1: the W combination; sign=-1 flips every u-term (the V tensor).
    trace_coef = sign * (1.0 - spec.t) / (n - 2)
    T = sign * H
    T = T + trace_coef * lap[..., None, None] * gf.g
    T = T + sign * _coef(spec.a) * np.einsum("...i,...j->...ij", du, du)
    T = T + sign * _coef(spec.b) * nsq[..., None, None] * gf.g
    return T + spec.S


def assemble_tensor(u, gf, spec, mode="solution"):
    return assemble_W(u, gf, spec, mode) if spec.branch == "W" else assemble_V(u, gf, spec, mode)


# -- eigenvalues of g^-1 T via Cholesky congruence ---------------------------


def congruent_eigenvalues(gf, T, vectors=False):
    """Eigenvalues of g^-1 T through the symmetric congruent problem
    B = L^-1 T L^-T with g = L L^T; guarantees a real spectrum."""
    L = np.linalg.cholesky(gf.g)
    Linv = np.linalg.inv(L)
    B = Linv @ T @ np.swapaxes(Linv, -1, -2)
    B = 0.5 * (B + np.swapaxes(B, -1, -2))
    if vectors:
        lam, Q = np.linalg.eigh(B)
        return lam, Q, Linv
    return np.linalg.eigvalsh(B)


def evaluate_equation(u, gf, spec, mode="solution"):
    """Pointwise residual F(lambda(g^-1 T)) - f(x, u) and admissibility mask.

    Inadmissible points carry NaN residual and a False mask entry; they are
    data for the solver safeguards, not an error.
    """
    T = assemble_tensor(u, gf, spec, mode)
    lam = congruent_eigenvalues(gf, T)
    flat = lam.reshape(-1, gf.n)
    mask = symfunc.in_cone(flat, spec.operator.k)
    residual = np.full(flat.shape[0], np.nan)
    if np.any(mask):
        Fval = symfunc.evaluate_F(spec.operator, flat[mask], check=False)
        f, _ = rhs_eval(spec.rhs, u)
        residual[mask] = Fval - np.broadcast_to(f, gf.grid.shape).reshape(-1)[mask]
    return residual.reshape(gf.grid.shape), mask.reshape(gf.grid.shape)


@dataclass(frozen=True)
class LinearizedCoefficients:
    """F^ij (derivative of F in the matrix slot), the elliptic combination
    P^ij (W branch, t <= 1) or Q^ij (V branch, t >= n-1), and sum_l F^ll."""

    F_ij: np.ndarray
    PQ_ij: np.ndarray
    sumF: np.ndarray
    eigenvalues: np.ndarray
    branch: str

    @property
    def P_ij(self):
        if self.branch != "W":
            raise AttributeError("P_ij is the W-branch combination")
        return self.PQ_ij

    @property
    def Q_ij(self):
        if self.branch != "V":
            raise AttributeError("Q_ij is the V-branch combination")
        return self.PQ_ij


def linearize(u, gf, spec, mode="solution", tensor=None):
    """Spectral derivative of F at the current state; strict on admissibility.

    F^ij = L^-T Q diag(dF/dlambda) Q^T L^-1 pulled back through the
    congruence; at repeated eigenvalues the symmetric-function gradient is
    continuous across the eigenspace, so the formula needs no eigengap
    handling for this first-order derivative.
    """
    n = gf.n
    T = assemble_tensor(u, gf, spec, mode) if tensor is None else tensor
    lam, Q, Linv = congruent_eigenvalues(gf, T, vectors=True)
    flat = lam.reshape(-1, n)
    mask = symfunc.in_cone(flat, spec.operator.k)
    if not np.all(mask):
        bad = int(np.flatnonzero(~mask)[0])
        idx = np.unravel_index(bad, gf.grid.shape)
        raise AdmissibilityError(
            f"linearize: inadmissible state at grid point {idx} "
            f"(lambda={flat[bad]})"
        )
    grad = symfunc.F_gradient(spec.operator, flat, check=False).reshape(lam.shape)
    GB = np.einsum("...ik,...k,...jk->...ij", Q, grad, Q)
    F_ij = np.einsum("...ki,...kl,...lj->...ij", Linv, GB, Linv)
    sumF = grad.sum(axis=-1)
    if spec.branch == "W":
        c = (1.0 - spec.t) / (n - 2)
        PQ = F_ij + c * sumF[..., None, None] * gf.g_inv
        core_min = grad.min(axis=-1) + c * sumF
    else:
        c = (spec.t - 1.0) / (n - 2)
        PQ = c * sumF[..., None, None] * gf.g_inv - F_ij
        core_min = c * sumF - grad.max(axis=-1)
    if core_min.min() <= 0.0:
        raise NumericalError(
            f"{'P' if spec.branch == 'W' else 'Q'} lost definiteness "
            f"(min congruent eigenvalue {core_min.min():.3e})"
        )
    return LinearizedCoefficients(
        F_ij=F_ij, PQ_ij=PQ, sumF=sumF, eigenvalues=lam, branch=spec.branch
    )


def admissibility(u, gf, spec, mode="solution", tensor=None):
    """(all_admissible, min cone distance) of the state."""
    T = assemble_tensor(u, gf, spec, mode) if tensor is None else tensor
    lam = congruent_eigenvalues(gf, T)
    flat = lam.reshape(-1, gf.n)
    dist = symfunc.cone_distance(flat, spec.operator.k)
    return bool(np.all(symfunc.in_cone(flat, spec.operator.k))), float(dist.min())
