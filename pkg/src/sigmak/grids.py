"""Structured chart grids and finite-difference machinery.

Three chart kinds:

* ``periodic_torus``   -- axes [0, 2pi), periodic wrap.
* ``sphere_chart``     -- box [-extent, extent]^n carrying a closed-form
                          round metric (normal coordinates at a pole).
* ``half_ball_fermi``  -- box [-extent, extent]^(n-1) x [0, extent]; the
                          face x_n = 0 is the boundary segment.

Three derivative modes:

* ``field``     -- central differences, second-order one-sided stencils at
                   non-periodic faces; for evaluating general data (metrics,
                   curvature, manufactured fields).
* ``solution``  -- ghost-point reflection at every non-periodic face,
                   realizing the homogeneous Neumann condition of global
                   discrete problems (box = manifold).
* ``face_only`` -- reflection on the boundary face x_n = 0 only, one-sided
                   elsewhere; the discrete shape of the local problems,
                   where the Neumann condition lives on the face and the
                   other box faces are chart cutoffs, not boundary.
"""

from dataclasses import dataclass
from functools import lru_cache, reduce

import numpy as np
import scipy.sparse as sp

CHART_KINDS = ("periodic_torus", "sphere_chart", "half_ball_fermi")


@dataclass(frozen=True)
class ChartGrid:
    chart_kind: str
    n: int
    resolution: int
    extent: float = 1.0

    def __post_init__(self):
        if self.chart_kind not in CHART_KINDS:
            raise ValueError(f"unknown chart kind {self.chart_kind!r}")
        if self.n < 3:
            raise ValueError(f"dimension n={self.n} must be >= 3")
        if self.resolution < 5:
            raise ValueError(f"resolution {self.resolution} below stencil width 5")
        if self.extent <= 0:
            raise ValueError("extent must be positive")

    # -- geometry of the index box ------------------------------------

    @property
    def shape(self):
        return (self.resolution,) * self.n

    @property
    def num_points(self):
        return self.resolution ** self.n

    @property
    def periodic(self):
        return (self.chart_kind == "periodic_torus",) * self.n

    @property
    def has_boundary_face(self):
        return self.chart_kind == "half_ball_fermi"

    @property
    def normal_axis(self):
        return self.n - 1

    def axis_coords(self, axis):
        N = self.resolution
        if self.chart_kind == "periodic_torus":
            return np.arange(N) * (2.0 * np.pi / N)
        if self.chart_kind == "half_ball_fermi" and axis == self.normal_axis:
            return np.linspace(0.0, self.extent, N)
        return np.linspace(-self.extent, self.extent, N)

    def spacing(self, axis):
        c = self.axis_coords(axis)
        if self.chart_kind == "periodic_torus":
            return 2.0 * np.pi / self.resolution
        return float(c[1] - c[0])

    def meshes(self):
        return np.meshgrid(*(self.axis_coords(a) for a in range(self.n)), indexing="ij")

    def points(self):
        """Coordinates as one array of shape (*shape, n)."""
        return np.stack(self.meshes(), axis=-1)

    def ball_mask(self, radius):
        """Coordinate ball |x| <= radius (centered in the fundamental domain
        for periodic charts)."""
        shift = np.pi if self.chart_kind == "periodic_torus" else 0.0
        rr = sum((m - shift) ** 2 for m in self.meshes())
        return rr <= radius * radius + 1e-14

    # -- finite differences on ndarray fields -------------------------
    #
    # Fields have the grid axes first; trailing axes hold tensor
    # components and are untouched.

    def end_treatments(self, axis, mode):
        """(low, high) stencil choice at the two ends of a non-periodic
        axis: "reflect" or "one_sided"."""
        if mode == "field":
            return "one_sided", "one_sided"
        if mode == "solution":
            return "reflect", "reflect"
        if mode == "face_only":
            if not self.has_boundary_face:
                raise ValueError("face_only mode needs a half_ball_fermi chart")
            if axis == self.normal_axis:
                return "reflect", "one_sided"
            return "one_sided", "one_sided"
        raise ValueError(f"unknown derivative mode {mode!r}")

    def d1(self, f, axis, mode="field"):
        h = self.spacing(axis)
        if self.periodic[axis]:
            return (np.roll(f, -1, axis=axis) - np.roll(f, 1, axis=axis)) / (2.0 * h)
        lo, hi = self.end_treatments(axis, mode)
        out = np.empty_like(np.asarray(f, dtype=np.float64))
        sl = _axis_slicer(f, axis)
        out[sl(1, -1)] = (f[sl(2, None)] - f[sl(None, -2)]) / (2.0 * h)
        if lo == "reflect":
            out[sl(0, 1)] = 0.0
        else:
            out[sl(0, 1)] = (-3.0 * f[sl(0, 1)] + 4.0 * f[sl(1, 2)] - f[sl(2, 3)]) / (2.0 * h)
        if hi == "reflect":
            out[sl(-1, None)] = 0.0
        else:
            out[sl(-1, None)] = (
                3.0 * f[sl(-1, None)] - 4.0 * f[sl(-2, -1)] + f[sl(-3, -2)]
            ) / (2.0 * h)
        return out

    def d2(self, f, axis, mode="field"):
        h = self.spacing(axis)
        h2 = h * h
        if self.periodic[axis]:
            return (np.roll(f, -1, axis=axis) - 2.0 * f + np.roll(f, 1, axis=axis)) / h2
        lo, hi = self.end_treatments(axis, mode)
        out = np.empty_like(np.asarray(f, dtype=np.float64))
        sl = _axis_slicer(f, axis)
        out[sl(1, -1)] = (f[sl(2, None)] - 2.0 * f[sl(1, -1)] + f[sl(None, -2)]) / h2
        if lo == "reflect":
            out[sl(0, 1)] = 2.0 * (f[sl(1, 2)] - f[sl(0, 1)]) / h2
        else:
            out[sl(0, 1)] = (
                2.0 * f[sl(0, 1)] - 5.0 * f[sl(1, 2)] + 4.0 * f[sl(2, 3)] - f[sl(3, 4)]
            ) / h2
        if hi == "reflect":
            out[sl(-1, None)] = 2.0 * (f[sl(-2, -1)] - f[sl(-1, None)]) / h2
        else:
            out[sl(-1, None)] = (
                2.0 * f[sl(-1, None)]
                - 5.0 * f[sl(-2, -1)]
                + 4.0 * f[sl(-3, -2)]
                - f[sl(-4, -3)]
            ) / h2
        return out

    def grad(self, f, mode="field"):
        """Coordinate partials of a scalar field, stacked on a new last axis."""
        return np.stack([self.d1(f, a, mode) for a in range(self.n)], axis=-1)

    def coord_hessian(self, f, mode="field"):
        """Matrix of coordinate second partials d_i d_j f, symmetrized."""
        n = self.n
        out = np.empty(f.shape + (n, n))
        firsts = [self.d1(f, a, mode) for a in range(n)]
        for i in range(n):
            out[..., i, i] = self.d2(f, i, mode)
            for j in range(i + 1, n):
                mixed = 0.5 * (self.d1(firsts[j], i, mode) + self.d1(firsts[i], j, mode))
                out[..., i, j] = mixed
                out[..., j, i] = mixed
        return out

    def d3_face_normal(self, f):
        """Third normal derivative on the x_n = 0 face, one-sided O(h^2)."""
        if not self.has_boundary_face:
            raise ValueError("third normal derivative needs a boundary face")
        h = self.spacing(self.normal_axis)
        sl = _axis_slicer(f, self.normal_axis)
        rows = [f[sl(i, i + 1)] for i in range(5)]
        out = (
            -5.0 * rows[0] + 18.0 * rows[1] - 24.0 * rows[2] + 14.0 * rows[3] - 3.0 * rows[4]
        ) / (2.0 * h ** 3)
        return np.squeeze(out, axis=self.normal_axis)

    # -- face helpers (half_ball_fermi) --------------------------------

    def face_values(self, f):
        """Restrict a field to the boundary face x_n = 0."""
        if not self.has_boundary_face:
            raise ValueError("chart has no boundary face")
        return np.take(f, 0, axis=self.normal_axis)

    def face_shape(self):
        return (self.resolution,) * (self.n - 1)

    def face_mask_in_full(self):
        """Boolean mask over the full grid selecting the boundary face."""
        m = np.zeros(self.shape, dtype=bool)
        m[(slice(None),) * (self.n - 1) + (0,)] = True
        return m

    # -- quadrature -----------------------------------------------------

    def quad_weights(self):
        """Trapezoid product weights including the volume element is the
        caller's job; these are pure coordinate-cell weights."""
        ws = []
        for a in range(self.n):
            h = self.spacing(a)
            w = np.full(self.resolution, h)
            if not self.periodic[a]:
                w[0] *= 0.5
                w[-1] *= 0.5
            ws.append(w)
        out = reduce(np.multiply.outer, ws)
        return out

    def face_quad_weights(self):
        ws = []
        for a in range(self.n - 1):
            h = self.spacing(a)
            w = np.full(self.resolution, h)
            if not self.periodic[a]:
                w[0] *= 0.5
                w[-1] *= 0.5
            ws.append(w)
        return reduce(np.multiply.outer, ws) if ws else np.array(1.0)


def _axis_slicer(f, axis):
    nd = np.ndim(f)

    def sl(a, b):
        out = [slice(None)] * nd
        out[axis] = slice(a, b)
        return tuple(out)

    return sl


def make_grid(chart_kind, n, resolution, extent=None):
    if extent is None:
        extent = 1.0
    return ChartGrid(chart_kind=chart_kind, n=n, resolution=resolution, extent=float(extent))


# -- sparse difference operators (for Jacobians and eigenproblems) -----


def _d1_1d(N, h, periodic, ends):
    if periodic:
        D = sp.lil_matrix((N, N))
        for i in range(N):
            D[i, (i + 1) % N] = 1.0 / (2 * h)
            D[i, (i - 1) % N] = -1.0 / (2 * h)
        return D.tocsr()
    lo, hi = ends
    D = sp.lil_matrix((N, N))
    for i in range(1, N - 1):
        D[i, i + 1] = 1.0 / (2 * h)
        D[i, i - 1] = -1.0 / (2 * h)
    # reflect: mirror ghost makes the odd difference vanish at the face
    if lo == "one_sided":
        D[0, 0], D[0, 1], D[0, 2] = -3.0 / (2 * h), 4.0 / (2 * h), -1.0 / (2 * h)
    if hi == "one_sided":
        D[N - 1, N - 1], D[N - 1, N - 2], D[N - 1, N - 3] = (
            3.0 / (2 * h),
            -4.0 / (2 * h),
            1.0 / (2 * h),
        )
    return D.tocsr()


def _d2_1d(N, h, periodic, ends):
    h2 = h * h
    D = sp.lil_matrix((N, N))
    if periodic:
        for i in range(N):
            D[i, i] = -2.0 / h2
            D[i, (i + 1) % N] = 1.0 / h2
            D[i, (i - 1) % N] = 1.0 / h2
        return D.tocsr()
    lo, hi = ends
    for i in range(1, N - 1):
        D[i, i] = -2.0 / h2
        D[i, i + 1] = 1.0 / h2
        D[i, i - 1] = 1.0 / h2
    if lo == "reflect":
        D[0, 0], D[0, 1] = -2.0 / h2, 2.0 / h2
    else:
        D[0, 0], D[0, 1], D[0, 2], D[0, 3] = 2.0 / h2, -5.0 / h2, 4.0 / h2, -1.0 / h2
    if hi == "reflect":
        D[N - 1, N - 1], D[N - 1, N - 2] = -2.0 / h2, 2.0 / h2
    else:
        D[N - 1, N - 1], D[N - 1, N - 2], D[N - 1, N - 3], D[N - 1, N - 4] = (
            2.0 / h2,
            -5.0 / h2,
            4.0 / h2,
            -1.0 / h2,
        )
    return D.tocsr()


def _kron_embed(grid, mat1d, axis):
    mats = [sp.identity(grid.resolution, format="csr")] * grid.n
    mats[axis] = mat1d
    return reduce(lambda a, b: sp.kron(a, b, format="csr"), mats)


@lru_cache(maxsize=128)
def diff_matrix(grid, axis, order, mode):
    """Full-grid sparse matrix of the order-1 or order-2 derivative along
    one axis, with the grid's boundary treatment for the given mode."""
    N, h = grid.resolution, grid.spacing(axis)
    per = grid.periodic[axis]
    ends = None if per else grid.end_treatments(axis, mode)
    m1d = _d1_1d(N, h, per, ends) if order == 1 else _d2_1d(N, h, per, ends)
    return _kron_embed(grid, m1d, axis)


@lru_cache(maxsize=128)
def mixed_diff_matrix(grid, ax_i, ax_j, mode):
    return diff_matrix(grid, ax_i, 1, mode) @ diff_matrix(grid, ax_j, 1, mode)


def assemble_linear_operator(grid, c2, c1, c0, mode="solution"):
    """Sparse matrix of v -> c2_ij d_i d_j v + c1_i d_i v + c0 v.

    c2: (*shape, n, n) symmetric coefficients; c1: (*shape, n); c0: (*shape).
    """
    n = grid.n
    A = sp.diags(np.asarray(c0, dtype=np.float64).ravel(), format="csr")
    for i in range(n):
        coef = np.asarray(c1[..., i], dtype=np.float64).ravel()
        if np.any(coef):
            A = A + sp.diags(coef) @ diff_matrix(grid, i, 1, mode)
    for i in range(n):
        for j in range(i, n):
            coef = c2[..., i, j] if i == j else c2[..., i, j] + c2[..., j, i]
            coef = np.asarray(coef, dtype=np.float64).ravel()
            if not np.any(coef):
                continue
            D = (
                diff_matrix(grid, i, 2, mode)
                if i == j
                else mixed_diff_matrix(grid, i, j, mode)
            )
            A = A + sp.diags(coef) @ D
    return A.tocsc()
