"""Elementary symmetric functions on eigenvalue vectors, Garding cones,
the normalized sigma_k-root and quotient operators, their derivatives, and
structure-condition checks.

Eigenvalue batches are plain float arrays of shape (..., n); scalar entry
points accept 1-D vectors.  All functions are pure.
"""

from dataclasses import dataclass, field, asdict
import json
import math

import numpy as np

from . import _kernels
from .errors import AdmissibilityError


def _as_batch(lam):
    """View lam as (m, n); return (batch, original shape, scalar flag)."""
    lam = np.asarray(lam, dtype=np.float64)
    if lam.ndim == 0:
        raise ValueError("eigenvalue vector must have at least one axis")
    if not np.all(np.isfinite(lam)):
        raise ValueError("eigenvalue vector contains NaN/Inf")
    single = lam.ndim == 1
    batch = lam.reshape(-1, lam.shape[-1])
    return batch, lam.shape, single


def sigma_all(lam):
    """All elementary symmetric polynomials e_0..e_n; shape (..., n+1)."""
    batch, shape, single = _as_batch(lam)
    table = _kernels.esp_table(batch)
    return table[0] if single else table.reshape(shape[:-1] + (shape[-1] + 1,))


def sigma(lam, k):
    """k-th elementary symmetric polynomial, k in 0..n."""
    batch, shape, single = _as_batch(lam)
    n = shape[-1]
    if not 0 <= k <= n:
        raise ValueError(f"sigma_k order k={k} out of range 0..{n}")
    table = _kernels.esp_table(batch)
    out = table[:, k]
    return float(out[0]) if single else out.reshape(shape[:-1])


def sigma_gradient(lam, k):
    """Gradient of sigma_k: component i is sigma_{k-1}(lam with entry i removed)."""
    batch, shape, single = _as_batch(lam)
    n = shape[-1]
    if not 1 <= k <= n:
        raise ValueError(f"sigma_k gradient order k={k} out of range 1..{n}")
    deleted = _kernels.esp_deleted_table(batch)
    out = deleted[:, :, k - 1]
    return out[0] if single else out.reshape(shape)


def sigma_hessian(lam, k):
    """Analytic Hessian of sigma_k: entry (i,j) is sigma_{k-2} of lam with
    entries i and j removed (zero on the diagonal and for k < 2)."""
    batch, shape, single = _as_batch(lam)
    m, n = batch.shape
    if not 1 <= k <= n:
        raise ValueError(f"sigma_k hessian order k={k} out of range 1..{n}")
    out = np.zeros((m, n, n))
    if k >= 2:
        keep = np.arange(n)
        for i in range(n):
            sub = batch[:, keep != i]
            sub_deleted = _kernels.esp_deleted_table(sub)
            out[:, i, keep != i] = sub_deleted[:, :, k - 2]
    return out[0] if single else out.reshape(shape + (n,))


@dataclass(frozen=True)
class ConeLabel:
    """Garding cone Gamma_k, or its negative branch -Gamma_k."""

    k: int
    negative: bool = False

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"cone order k={self.k} must be >= 1")


def in_cone(lam, cone, negative=False):
    """True iff sigma_j(lam) > 0 for all 1 <= j <= k (strict).

    The negative branch tests -lam instead.  ``cone`` may be a ConeLabel or
    a plain integer k.
    """
    if isinstance(cone, ConeLabel):
        k, negative = cone.k, cone.negative
    else:
        k = int(cone)
    batch, shape, single = _as_batch(lam)
    n = shape[-1]
    if not 1 <= k <= n:
        raise ValueError(f"cone order k={k} out of range 1..{n}")
    if negative:
        batch = -batch
    table = _kernels.esp_table(batch)
    ok = np.all(table[:, 1 : k + 1] > 0.0, axis=1)
    return bool(ok[0]) if single else ok.reshape(shape[:-1])


def cone_distance(lam, cone, negative=False):
    """Diagnostic distance to the cone boundary: min_j sigma_j(lam)/C(n,j)
    over 1 <= j <= k.  Positive inside the cone, <= 0 outside."""
    if isinstance(cone, ConeLabel):
        k, negative = cone.k, cone.negative
    else:
        k = int(cone)
    batch, shape, single = _as_batch(lam)
    n = shape[-1]
    if negative:
        batch = -batch
    table = _kernels.esp_table(batch)
    binom = np.array([math.comb(n, j) for j in range(1, k + 1)], dtype=np.float64)
    d = np.min(table[:, 1 : k + 1] / binom, axis=1)
    return float(d[0]) if single else d.reshape(shape[:-1])


@dataclass(frozen=True)
class OperatorSpec:
    """Normalized degree-one operator F on eigenvalue vectors.

    kind "sigma_k_root": F = c0 * sigma_k^(1/k).
    kind "quotient":     F = c0 * (sigma_k/sigma_l)^(1/(k-l)), 0 <= l < k.
    c0 is fixed so that F(1,...,1) = 1.
    """

    kind: str
    k: int
    n: int
    l: int = 0
    c0: float = field(default=0.0)

    def __post_init__(self):
        if self.kind not in ("sigma_k_root", "quotient"):
            raise ValueError(f"unknown operator kind {self.kind!r}")
        if not 1 <= self.k <= self.n:
            raise ValueError(f"operator order k={self.k} out of range 1..{self.n}")
        if self.kind == "sigma_k_root" and self.l != 0:
            raise ValueError("sigma_k_root operator takes l=0")
        if not 0 <= self.l < self.k:
            raise ValueError(f"quotient order l={self.l} out of range 0..{self.k - 1}")
        if self.c0 == 0.0:
            ratio_at_e = math.comb(self.n, self.k) / math.comb(self.n, self.l)
            object.__setattr__(self, "c0", ratio_at_e ** (-1.0 / (self.k - self.l)))

    @property
    def cone(self):
        return ConeLabel(self.k)


def make_operator(kind, k, n, l=0):
    return OperatorSpec(kind=kind, k=k, n=n, l=l)


def _require_cone(table, k, context):
    bad = ~np.all(table[:, 1 : k + 1] > 0.0, axis=1)
    if np.any(bad):
        raise AdmissibilityError(
            f"{context}: {int(bad.sum())} of {bad.size} eigenvalue vectors "
            f"outside Gamma_{k}"
        )


def _F_from_table(spec, table):
    num = table[:, spec.k]
    den = table[:, spec.l]  # sigma_0 = 1 for the root kind
    if np.any(den <= 0.0):
        raise AdmissibilityError(f"degenerate quotient: sigma_{spec.l} <= 0")
    return spec.c0 * (num / den) ** (1.0 / (spec.k - spec.l))


def evaluate_F(spec, lam, check=True):
    """F(lam) for admissible lam; raises AdmissibilityError outside Gamma_k."""
    batch, shape, single = _as_batch(lam)
    if shape[-1] != spec.n:
        raise ValueError(f"eigenvalue vector has n={shape[-1]}, operator has n={spec.n}")
    table = _kernels.esp_table(batch)
    if check:
        _require_cone(table, spec.k, "evaluate_F")
    out = _F_from_table(spec, table)
    return float(out[0]) if single else out.reshape(shape[:-1])


def F_gradient(spec, lam, check=True):
    """Analytic gradient dF/dlam_i; strictly positive in Gamma_k.

    dF/dlam_i = F/(k-l) * (sigma_{k-1}(lam_-i)/sigma_k - sigma_{l-1}(lam_-i)/sigma_l),
    with the l=0 term absent for the root kind.
    """
    batch, shape, single = _as_batch(lam)
    if shape[-1] != spec.n:
        raise ValueError(f"eigenvalue vector has n={shape[-1]}, operator has n={spec.n}")
    table = _kernels.esp_table(batch)
    if check:
        _require_cone(table, spec.k, "F_gradient")
    F = _F_from_table(spec, table)
    deleted = _kernels.esp_deleted_table(batch)
    term = deleted[:, :, spec.k - 1] / table[:, None, spec.k]
    if spec.l >= 1:
        term = term - deleted[:, :, spec.l - 1] / table[:, None, spec.l]
    grad = F[:, None] / (spec.k - spec.l) * term
    return grad[0] if single else grad.reshape(shape)


def newton_maclaurin_residual(lam, k, l):
    """RHS - LHS of the Newton-Maclaurin inequality
    k(n-l+1) sigma_{l-1} sigma_k <= l(n-k+1) sigma_l sigma_{k-1};
    nonnegative (up to rounding) for lam in Gamma_k."""
    batch, shape, single = _as_batch(lam)
    n = shape[-1]
    if not 1 <= l < k <= n:
        raise ValueError(f"need 1 <= l < k <= n, got k={k}, l={l}, n={n}")
    table = _kernels.esp_table(batch)
    _require_cone(table, k, "newton_maclaurin_residual")
    lhs = k * (n - l + 1) * table[:, l - 1] * table[:, k]
    rhs = l * (n - k + 1) * table[:, l] * table[:, k - 1]
    out = rhs - lhs
    return float(out[0]) if single else out.reshape(shape[:-1])


def newton_maclaurin_scale(lam, k, l):
    """Magnitude scale of the two sides, for relative tolerances."""
    batch, shape, single = _as_batch(lam)
    n = shape[-1]
    table = _kernels.esp_table(batch)
    lhs = np.abs(k * (n - l + 1) * table[:, l - 1] * table[:, k])
    rhs = np.abs(l * (n - k + 1) * table[:, l] * table[:, k - 1])
    out = np.maximum(lhs, rhs)
    return float(out[0]) if single else out.reshape(shape[:-1])


@dataclass
class StructureReport:
    """Per-condition outcome of the (A1)-(A4) checks on a sample set."""

    operator: dict
    n_samples: int
    epsilon_supplied: float
    positivity_pass: bool
    min_F: float
    concavity_pass: bool
    worst_midpoint_defect: float
    monotonicity_pass: bool
    min_gradient_component: float
    ratio_bound_pass: bool
    epsilon_max: float

    @property
    def all_pass(self):
        return (
            self.positivity_pass
            and self.concavity_pass
            and self.monotonicity_pass
            and self.ratio_bound_pass
        )

    def to_json(self, **kwargs):
        d = asdict(self)
        d["all_pass"] = self.all_pass
        return json.dumps(d, **kwargs)


def check_structure_conditions(spec, samples, epsilon, concavity_tol=1e-10):
    """Check positivity, midpoint concavity, monotonicity, and the
    gradient/F ratio bound with the supplied epsilon on cone samples.

    Midpoint pairs are formed by a cyclic shift of the sample set, so the
    check is deterministic.  Also records the largest epsilon that would
    pass (min over samples of min_i dF/dlam_i * sigma_1 / F); the supplied
    epsilon is compared with one-rounding relative slack so exactly-tight
    cases (the linear operator at epsilon = 1) are not failed by an ulp.
    """
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 2 or samples.shape[0] == 0:
        raise ValueError("samples must be a nonempty (m, n) array")
    table = _kernels.esp_table(samples)
    _require_cone(table, spec.k, "check_structure_conditions")

    F = evaluate_F(spec, samples, check=False)
    grad = F_gradient(spec, samples, check=False)

    min_F = float(F.min())
    mid = 0.5 * (samples + np.roll(samples, 1, axis=0))
    F_mid = evaluate_F(spec, mid, check=False)
    defect = 0.5 * (F + np.roll(F, 1)) - F_mid
    worst_defect = float(defect.max())
    scale = float(np.abs(F).max())

    min_grad = float(grad.min())
    sigma1 = table[:, 1]
    ratios = grad.min(axis=1) * sigma1 / F
    eps_max = float(ratios.min())

    return StructureReport(
        operator={"kind": spec.kind, "k": spec.k, "l": spec.l, "n": spec.n},
        n_samples=samples.shape[0],
        epsilon_supplied=float(epsilon),
        positivity_pass=min_F > 0.0,
        min_F=min_F,
        concavity_pass=worst_defect <= concavity_tol * max(scale, 1.0),
        worst_midpoint_defect=worst_defect,
        monotonicity_pass=min_grad > 0.0,
        min_gradient_component=min_grad,
        ratio_bound_pass=eps_max >= epsilon * (1.0 - 1e-12),
        epsilon_max=eps_max,
    )


def sample_cone(n, k, m, rng, scale=1.0):
    """Draw m eigenvalue vectors from Gamma_k by rejection.

    Half the draws sit safely inside (positive entries), half are shifted
    gaussians filtered by cone membership, so the boundary region is seen.
    """
    out = np.empty((m, n))
    got = 0
    while got < m:
        want = m - got
        block = max(2 * want, 64)
        center = rng.uniform(0.2, 2.0, size=(block, 1)) * scale
        cand = center + rng.normal(size=(block, n)) * (0.6 * scale)
        safe = np.abs(rng.normal(size=(block // 2, n))) * scale + 0.05 * scale
        cand = np.concatenate([cand, safe], axis=0)
        keep = in_cone(cand, k)
        cand = cand[keep][:want]
        out[got : got + cand.shape[0]] = cand
        got += cand.shape[0]
    return out
