"""Discrete Riemannian geometry on chart grids.

Metric fields carry lazy Christoffel/curvature caches.  Curvature follows
the coordinate formula with Ricci contracted directly from Christoffel
symbols and their differences, so the full Riemann tensor is only
materialized on request.

Index conventions: Christoffel Gamma[k, i, j] = Gamma^k_{ij};
Riemann Riem[a, b, c, d] = R^a_{bcd}; Ric_{bd} = R^a_{bad}.  With these,
the unit round sphere has Ric = (n-1) g and R = n(n-1).
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .errors import ChartError, MetricError, NumericalError
from .grids import ChartGrid, assemble_linear_operator

GEODESIC_TOL = 1e-8  # |L| <= tol * |g| classifies a face as totally geodesic


@dataclass
class MetricField:
    """Symmetric positive-definite 2-tensor on a chart grid.

    ``fermi_form`` asserts the boundary-adapted split g_an = 0, g_nn = 1
    on the whole chart (checked on the boundary face).
    """

    grid: ChartGrid
    g: np.ndarray
    fermi_form: bool = False
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.g = np.asarray(self.g, dtype=np.float64)
        n = self.grid.n
        if self.g.shape != self.grid.shape + (n, n):
            raise ValueError(f"metric shape {self.g.shape} does not match grid")
        skew = np.abs(self.g - np.swapaxes(self.g, -1, -2)).max()
        if skew > 1e-12:
            raise MetricError(f"metric asymmetry {skew:.3e} exceeds 1e-12")
        try:
            np.linalg.cholesky(self.g)
        except np.linalg.LinAlgError:
            raise MetricError("metric is not positive definite everywhere") from None
        if self.fermi_form:
            if not self.grid.has_boundary_face:
                raise ChartError("fermi_form metric requires a half_ball_fermi chart")
            face = self.grid.face_values(self.g)
            if (
                np.abs(face[..., :-1, -1]).max() > 1e-12
                or np.abs(face[..., -1, -1] - 1.0).max() > 1e-12
            ):
                raise MetricError("fermi_form violated on the boundary face")

    @property
    def n(self):
        return self.grid.n

    def _get(self, key, builder):
        if key not in self._cache:
            self._cache[key] = builder()
        return self._cache[key]

    @property
    def g_inv(self):
        return self._get("g_inv", lambda: np.linalg.inv(self.g))

    @property
    def sqrt_det(self):
        return self._get("sqrt_det", lambda: np.sqrt(np.linalg.det(self.g)))


@dataclass
class ScalarField:
    """Named scalar field for typed export/import (u, f, eta, K, ...)."""

    grid: ChartGrid
    values: np.ndarray
    role_tag: str = ""

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != self.grid.shape:
            raise ValueError("scalar field shape does not match grid")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("scalar field contains NaN/Inf")


@dataclass
class Tensor2Field:
    """Named symmetric 2-tensor field (ricci, schouten, W, V, S, ...)."""

    grid: ChartGrid
    values: np.ndarray
    role_tag: str = ""

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        n = self.grid.n
        if self.values.shape != self.grid.shape + (n, n):
            raise ValueError("tensor field shape does not match grid")
        skew = np.abs(self.values - np.swapaxes(self.values, -1, -2)).max()
        if skew > 1e-12:
            raise ValueError(f"tensor field asymmetry {skew:.3e} exceeds 1e-12")


# -- covariant calculus of scalar fields --------------------------------


def grad_scalar(gf, u, mode="field"):
    """Coordinate gradient u_i (components of du)."""
    return gf.grid.grad(u, mode)


def grad_norm_sq(gf, u, mode="field", grad=None):
    du = grad_scalar(gf, u, mode) if grad is None else grad
    return np.einsum("...ij,...i,...j->...", gf.g_inv, du, du)


def hessian_scalar(gf, u, mode="field", grad=None):
    """Covariant Hessian (nabla^2 u)_{ij} = d_i d_j u - Gamma^k_{ij} u_k."""
    du = grad_scalar(gf, u, mode) if grad is None else grad
    dd = gf.grid.coord_hessian(u, mode)
    return dd - np.einsum("...kij,...k->...ij", christoffel(gf), du)


def laplacian(gf, u, mode="field", hess=None):
    H = hessian_scalar(gf, u, mode) if hess is None else hess
    return np.einsum("...ij,...ij->...", gf.g_inv, H)


def tensor_frobenius_norm(gf, T):
    """g-Frobenius norm of a covariant 2-tensor: (T_ij T_kl g^ik g^jl)^1/2."""
    up = np.einsum("...ik,...jl,...kl->...ij", gf.g_inv, gf.g_inv, T)
    return np.sqrt(np.abs(np.einsum("...ij,...ij->...", up, T)))


# -- Christoffel symbols and curvature -----------------------------------


def christoffel(gf):
    """Gamma^k_{ij} from central differences of the metric (cached)."""

    def build():
        grid, g, ginv = gf.grid, gf.g, gf.g_inv
        n = grid.n
        dg = np.stack([grid.d1(g, a, "field") for a in range(n)], axis=-3)
        # dg[..., l, i, j] = d_l g_ij
        low = 0.5 * (
            np.swapaxes(dg, -3, -2)  # d_i g_lj -> index [l, i, j]
            + np.einsum("...lij->...lji", np.swapaxes(dg, -3, -2))
            - dg
        )
        # low[..., l, i, j] = 1/2 (d_i g_jl + d_j g_il - d_l g_ij)
        return np.einsum("...kl,...lij->...kij", ginv, low)

    return gf._get("christoffel", build)


def _ricci_from_christoffel(gf):
    grid = gf.grid
    n = grid.n
    Gam = christoffel(gf)
    contracted = np.einsum("...aab->...b", Gam)  # C_b = Gamma^a_{ab}
    term1 = np.zeros(grid.shape + (n, n))
    for a in range(n):
        term1 += grid.d1(Gam[..., a, :, :], a, "field")
    term2 = np.stack([grid.d1(contracted, d, "field") for d in range(n)], axis=-2)
    # term2[..., d, b] = d_d C_b
    term3 = np.einsum("...e,...edb->...db", contracted, Gam)
    term4 = np.einsum("...ade,...eab->...db", Gam, Gam)
    ric = term1 - term2 + term3 - term4
    return 0.5 * (ric + np.swapaxes(ric, -1, -2))


def ricci_and_scalar(gf):
    """(Ricci, scalar) from the directly contracted formula; the lean path
    that never materializes the full Riemann tensor (cached)."""

    def build():
        ric = _ricci_from_christoffel(gf)
        scal = np.einsum("...ij,...ij->...", gf.g_inv, ric)
        return ric, scal

    return gf._get("ricci_scalar", build)


def curvature(gf, full_riemann=True):
    """(Riemann, Ricci, scalar) of the metric.

    Riemann is the memory-heavy piece (n^4 components per point); callers
    that only need Ricci/scalar pass full_riemann=False or use
    ricci_and_scalar directly.
    """
    ric, scal = ricci_and_scalar(gf)
    riem = riemann_tensor(gf) if full_riemann else None
    return riem, ric, scal


def riemann_tensor(gf):
    """Full R^a_{bcd} = d_c Gamma^a_{db} - d_d Gamma^a_{cb}
    + Gamma^a_{ce} Gamma^e_{db} - Gamma^a_{de} Gamma^e_{cb} (cached)."""

    def build():
        grid = gf.grid
        n = grid.n
        Gam = christoffel(gf)
        dGam = np.stack([grid.d1(Gam, c, "field") for c in range(n)], axis=-4)
        # dGam[..., c, a, d, b] = d_c Gamma^a_{db}
        riem = np.einsum("...cadb->...abcd", dGam) - np.einsum("...dacb->...abcd", dGam)
        riem += np.einsum("...ace,...edb->...abcd", Gam, Gam)
        riem -= np.einsum("...ade,...ecb->...abcd", Gam, Gam)
        return riem

    return gf._get("riemann", build)


def ricci(gf):
    return ricci_and_scalar(gf)[0]


def scalar_curvature(gf):
    return ricci_and_scalar(gf)[1]


# -- Schouten tensors and conformal transformation ------------------------


def modified_schouten(gf, t):
    """A^t = (Ric - t R / (2(n-1)) g) / (n-2)."""
    n = gf.n
    if n < 3:
        raise ValueError(f"modified Schouten tensor needs n >= 3, got {n}")
    ric, scal = ricci_and_scalar(gf)
    return (ric - (t * scal / (2.0 * (n - 1)))[..., None, None] * gf.g) / (n - 2)


def schouten(gf):
    return modified_schouten(gf, 1.0)


def conformal_metric(gf, u):
    """Pointwise scaling g~ = e^(-2u) g."""
    u = np.asarray(u, dtype=np.float64)
    if u.shape != gf.grid.shape:
        raise ValueError("conformal factor shape does not match grid")
    g_new = np.exp(-2.0 * u)[..., None, None] * gf.g
    return MetricField(grid=gf.grid, g=g_new, fermi_form=False)


def schouten_transform(gf, u, A):
    """Transformation law A_{g~} = nabla^2 u + du (x) du - 1/2 |du|^2 g + A_g
    for g~ = e^(-2u) g, with derivatives taken in g."""
    if np.asarray(u).shape != gf.grid.shape:
        raise ValueError("conformal factor shape does not match grid")
    du = grad_scalar(gf, u)
    H = hessian_scalar(gf, u, grad=du)
    nsq = grad_norm_sq(gf, u, grad=du)
    return H + np.einsum("...i,...j->...ij", du, du) - 0.5 * nsq[..., None, None] * gf.g + A


def modified_schouten_transform(gf, u, At, t):
    """A^t_{g~} = A^t_g + nabla^2 u + (1-t)/(n-2) (lap u) g + du (x) du
    - (2-t)/2 |du|^2 g."""
    n = gf.n
    du = grad_scalar(gf, u)
    H = hessian_scalar(gf, u, grad=du)
    lap = np.einsum("...ij,...ij->...", gf.g_inv, H)
    nsq = grad_norm_sq(gf, u, grad=du)
    return (
        At
        + H
        + ((1.0 - t) / (n - 2)) * lap[..., None, None] * gf.g
        + np.einsum("...i,...j->...ij", du, du)
        - 0.5 * (2.0 - t) * nsq[..., None, None] * gf.g
    )


# -- boundary geometry ----------------------------------------------------


def second_fundamental_form(gf, geodesic_tol=GEODESIC_TOL):
    """(L_ab, tau, totally_geodesic) on the x_n = 0 face.

    L_ab = -1/2 dg_ab/dx^n with the inner normal d/dx^n; tau is the umbilic
    factor tr(L)/(n-1) with the induced metric.
    """
    grid = gf.grid
    if not grid.has_boundary_face:
        raise ChartError("second fundamental form needs a half_ball_fermi chart")
    if not gf.fermi_form:
        raise ChartError("second fundamental form needs a fermi_form metric")
    dgn = grid.d1(gf.g, grid.normal_axis, "field")
    L = -0.5 * grid.face_values(dgn)[..., :-1, :-1]
    g_face = grid.face_values(gf.g)[..., :-1, :-1]
    tau = np.einsum("...ab,...ab->...", np.linalg.inv(g_face), L) / (grid.n - 1)
    totally_geodesic = bool(np.abs(L).max() <= geodesic_tol * np.abs(gf.g).max())
    return L, tau, totally_geodesic


def mean_curvature_face(gf):
    """h = g^ab L_ab (sum of principal curvatures) on the face."""
    _, tau, _ = second_fundamental_form(gf)
    return (gf.n - 1) * tau


# -- conformal Laplacian eigenproblem -------------------------------------


def conformal_laplacian_matrix(gf, shift_c=0.0):
    """Sparse matrix of -(L - c) with L = lap_g - (n-2)/(4(n-1)) R, and the
    homogeneous Neumann (reflection) condition on every non-periodic face."""
    grid = gf.grid
    n = grid.n
    _, scal = ricci_and_scalar(gf)
    Gam = christoffel(gf)
    c2 = -gf.g_inv
    c1 = np.einsum("...ij,...kij->...k", gf.g_inv, Gam)
    c0 = (n - 2) / (4.0 * (n - 1)) * scal + shift_c
    return assemble_linear_operator(grid, c2, c1, c0, mode="solution")


def conformal_laplacian_eigen(gf, shift_c=0.0, tol=1e-12, max_iter=400,
                              geodesic_tol=GEODESIC_TOL):
    """Smallest eigenvalue and positive first eigenfunction of the
    conformal Laplacian eigenproblem (Neumann on a totally geodesic face),
    via inverse power iteration with a direct sparse factorization.

    Returns (lambda1, phi1) with phi1 normalized to max = 1.
    """
    grid = gf.grid
    if not grid.has_boundary_face:
        raise ChartError("eigenproblem is posed on a half_ball_fermi chart")
    _, _, geodesic = second_fundamental_form(gf, geodesic_tol=geodesic_tol)
    if not geodesic:
        raise ChartError("eigenproblem requires a totally geodesic boundary face")
    A = conformal_laplacian_matrix(gf, shift_c=shift_c)
    # Gershgorin shift makes A - sigma I safely positive definite.
    diag = A.diagonal()
    row_abs = np.asarray(np.abs(A).sum(axis=1)).ravel() - np.abs(diag)
    sigma = float((diag - row_abs).min()) - 1.0
    lu = spla.splu((A - sigma * _speye(A.shape[0])).tocsc())
    x = np.ones(A.shape[0])
    x /= np.linalg.norm(x)
    lam_old = np.inf
    for _ in range(max_iter):
        x = lu.solve(x)
        x /= np.linalg.norm(x)
        lam = float(x @ (A @ x))
        if abs(lam - lam_old) <= tol * max(1.0, abs(lam)):
            break
        lam_old = lam
    else:
        raise NumericalError("inverse power iteration did not converge")
    if x[np.argmax(np.abs(x))] < 0:
        x = -x
    phi = x.reshape(grid.shape)
    phi = phi / phi.max()
    if phi.min() <= 0.0:
        raise NumericalError("first eigenfunction is not positive everywhere")
    return lam, phi


def _speye(m):
    import scipy.sparse as sp

    return sp.identity(m, format="csc")


# -- metric formula registry ----------------------------------------------


def _flat(grid):
    g = np.zeros(grid.shape + (grid.n, grid.n))
    idx = np.arange(grid.n)
    g[..., idx, idx] = 1.0
    return g, grid.has_boundary_face


def _flat_scaled(grid, c=2.0):
    g, _ = _flat(grid)
    return c * g, False


def _round_normal_block(points, eps=1e-8):
    """Round-sphere metric in geodesic normal coordinates at a pole:
    g_ij = sinc^2(rho) delta_ij + (1 - sinc^2(rho))/rho^2 x_i x_j."""
    rho2 = np.einsum("...i,...i->...", points, points)
    rho = np.sqrt(rho2)
    s = np.sinc(rho / np.pi)  # sin(rho)/rho
    s2 = s * s
    # (1 - sinc^2)/rho^2 with its rho -> 0 limit 1/3
    small = rho < eps
    coef = np.where(small, 1.0 / 3.0, (1.0 - s2) / np.where(small, 1.0, rho2))
    nloc = points.shape[-1]
    g = s2[..., None, None] * np.eye(nloc)
    g = g + coef[..., None, None] * np.einsum("...i,...j->...ij", points, points)
    return g


def _round_normal(grid):
    pts = grid.points()
    if np.sqrt(grid.n) * grid.extent >= np.pi:
        raise ValueError("chart box leaves the normal-coordinate cap (rho < pi)")
    return _round_normal_block(pts), False


def _fermi_sphere_cap(grid):
    """Unit round sphere in Fermi coordinates off a totally geodesic
    equator: g = cos^2(x_n) ghat_ab(x') + (dx_n)^2, with ghat the round
    (n-1)-sphere in normal coordinates."""
    if not grid.has_boundary_face:
        raise ChartError("fermi_sphere_cap needs a half_ball_fermi chart")
    if np.sqrt(grid.n - 1) * grid.extent >= np.pi or grid.extent >= np.pi / 2:
        raise ValueError("chart box leaves the Fermi cap")
    meshes = grid.meshes()
    tang = np.stack(meshes[:-1], axis=-1)
    xn = meshes[-1]
    ghat = _round_normal_block(tang)
    g = np.zeros(grid.shape + (grid.n, grid.n))
    g[..., :-1, :-1] = np.cos(xn)[..., None, None] ** 2 * ghat
    g[..., -1, -1] = 1.0
    return g, True


def _fermi_umbilic_expand(grid):
    """g_ab = (1 + x_n)^2 delta_ab + (dx_n)^2: umbilic face with tau = -1."""
    if not grid.has_boundary_face:
        raise ChartError("fermi_umbilic_expand needs a half_ball_fermi chart")
    xn = grid.meshes()[-1]
    g = np.zeros(grid.shape + (grid.n, grid.n))
    idx = np.arange(grid.n - 1)
    g[..., idx, idx] = ((1.0 + xn) ** 2)[..., None]
    g[..., -1, -1] = 1.0
    return g, True


def _fermi_tangential_bump(grid, eps=0.1):
    """Product metric e^(2 phi(x')) delta_ab + (dx_n)^2, independent of x_n
    (totally geodesic face with curved boundary metric)."""
    if not grid.has_boundary_face:
        raise ChartError("fermi_tangential_bump needs a half_ball_fermi chart")
    meshes = grid.meshes()
    L = grid.extent
    phi = eps * np.prod([np.cos(0.5 * np.pi * m / L) for m in meshes[:-1]], axis=0)
    g = np.zeros(grid.shape + (grid.n, grid.n))
    idx = np.arange(grid.n - 1)
    g[..., idx, idx] = np.exp(2.0 * phi)[..., None]
    g[..., -1, -1] = 1.0
    return g, True


def _torus_conformal_bump(grid, eps=0.1):
    if grid.chart_kind != "periodic_torus":
        raise ChartError("torus_conformal_bump needs a periodic_torus chart")
    meshes = grid.meshes()
    phi = eps * np.sin(meshes[0]) * np.cos(meshes[1])
    g = np.exp(2.0 * phi)[..., None, None] * np.eye(grid.n)
    g = g + np.zeros(grid.shape + (grid.n, grid.n))
    return g, False


METRIC_FORMULAS = {
    "flat": _flat,
    "flat_scaled": _flat_scaled,
    "round_normal": _round_normal,
    "fermi_sphere_cap": _fermi_sphere_cap,
    "fermi_umbilic_expand": _fermi_umbilic_expand,
    "fermi_tangential_bump": _fermi_tangential_bump,
    "torus_conformal_bump": _torus_conformal_bump,
}


def make_metric(grid, formula, **params):
    if formula not in METRIC_FORMULAS:
        raise ValueError(f"unknown metric formula {formula!r}")
    g, fermi = METRIC_FORMULAS[formula](grid, **params)
    return MetricField(grid=grid, g=g, fermi_form=fermi)
