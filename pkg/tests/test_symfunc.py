import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sigmak import _kernels, symfunc as sf
from sigmak.errors import AdmissibilityError


def sigma_enum(lam, k):
    """Brute-force subset-enumeration oracle (n <= 8 in tests)."""
    lam = np.asarray(lam, dtype=np.float64)
    if k == 0:
        return 1.0
    return float(
        sum(math.prod(combo) for combo in itertools.combinations(lam, k))
    )


def central_diff_gradient(f, lam, h=1e-6):
    lam = np.asarray(lam, dtype=np.float64)
    out = np.empty_like(lam)
    for i in range(lam.size):
        lp, lm = lam.copy(), lam.copy()
        lp[i] += h
        lm[i] -= h
        out[i] = (f(lp) - f(lm)) / (2 * h)
    return out


# -- sigma ------------------------------------------------------------------


def test_sigma_k0_is_one():
    assert sf.sigma(np.array([3.0, -1.0, 7.0]), 0) == 1.0


def test_sigma_unit_vector():
    assert sf.sigma(np.array([1.0, 1.0, 1.0]), 2) == 3.0


def test_sigma_against_enumeration_oracle():
    lam = np.array([1.0, 2.0, 3.0])
    assert sf.sigma(lam, 2) == pytest.approx(sigma_enum(lam, 2), rel=1e-14)


def test_sigma_out_of_range():
    with pytest.raises(ValueError):
        sf.sigma(np.array([1.0, 2.0]), 3)
    with pytest.raises(ValueError):
        sf.sigma(np.array([1.0, 2.0]), -1)


def test_sigma_rejects_nan():
    with pytest.raises(ValueError):
        sf.sigma(np.array([1.0, np.nan]), 1)


@pytest.mark.parametrize("n", [3, 4, 5, 6])
def test_sigma_random_vs_enumeration(n):
    rng = np.random.default_rng(n)
    lam = rng.standard_normal((50, n)) * 2.0
    for k in range(n + 1):
        got = sf.sigma(lam, k)
        want = np.array([sigma_enum(row, k) for row in lam])
        scale = np.maximum(np.abs(want), 1.0)
        assert np.all(np.abs(got - want) <= 1e-12 * scale)


def test_kernel_paths_agree():
    rng = np.random.default_rng(1)
    lam = rng.standard_normal((200, 5))
    np.testing.assert_allclose(
        _kernels.esp_table_numpy(lam), _kernels.esp_table(lam), rtol=0, atol=1e-13
    )
    np.testing.assert_allclose(
        _kernels.esp_deleted_table_numpy(lam),
        _kernels.esp_deleted_table(lam),
        rtol=0,
        atol=1e-13,
    )


# -- sigma gradient / hessian --------------------------------------------------


def test_sigma_gradient_linear_case():
    np.testing.assert_array_equal(
        sf.sigma_gradient(np.array([1.0, 1.0, 1.0]), 1), np.ones(3)
    )


def test_sigma_gradient_two_by_two():
    np.testing.assert_allclose(
        sf.sigma_gradient(np.array([2.0, 2.0]), 2), np.array([2.0, 2.0])
    )


def test_sigma_gradient_finite_difference():
    lam = np.array([1.0, 2.0, 3.0])
    got = sf.sigma_gradient(lam, 2)
    want = central_diff_gradient(lambda x: sf.sigma(x, 2), lam)
    np.testing.assert_allclose(got, want, rtol=1e-6)


def test_sigma_hessian_matches_gradient_differences():
    lam = np.array([0.7, 1.4, 2.2, 0.9])
    H = sf.sigma_hessian(lam, 3)
    for j in range(4):
        fd = central_diff_gradient(lambda x: sf.sigma_gradient(x, 3)[j], lam)
        np.testing.assert_allclose(H[j], fd, rtol=1e-5, atol=1e-8)
    assert np.all(np.diag(H) == 0.0)


# -- cones ---------------------------------------------------------------------


def test_in_cone_identity_all_orders():
    e = np.ones(4)
    for k in range(1, 5):
        assert sf.in_cone(e, k)


def test_in_cone_negative_sigma1():
    assert not sf.in_cone(np.array([1.0, -2.0, 0.0]), 1)


def test_in_cone_decided_by_direct_evaluation():
    lam = np.array([3.0, 1.0, -0.5])
    expect = sigma_enum(lam, 1) > 0 and sigma_enum(lam, 2) > 0
    assert sf.in_cone(lam, 2) == expect


def test_negative_branch():
    lam = -np.ones(3)
    assert not sf.in_cone(lam, 1)
    assert sf.in_cone(lam, sf.ConeLabel(3, negative=True))


def test_cone_nesting():
    rng = np.random.default_rng(5)
    lam = sf.sample_cone(4, 3, 200, rng)
    for j in (1, 2):
        assert np.all(sf.in_cone(lam, j))


def test_cone_distance_sign():
    assert sf.cone_distance(np.ones(3), 2) > 0
    assert sf.cone_distance(np.array([1.0, -2.0, 0.0]), 1) <= 0


# -- operator F -----------------------------------------------------------------


@pytest.mark.parametrize(
    "kind,k,l", [("sigma_k_root", 2, 0), ("sigma_k_root", 3, 0), ("quotient", 3, 1)]
)
def test_F_normalized_at_identity(kind, k, l):
    spec = sf.make_operator(kind, k, 4, l)
    assert sf.evaluate_F(spec, np.ones(4)) == pytest.approx(1.0, abs=1e-14)


def test_F_homogeneous_degree_one():
    spec = sf.make_operator("sigma_k_root", 2, 3)
    assert sf.evaluate_F(spec, 2.0 * np.ones(3)) == pytest.approx(2.0, abs=1e-14)


def test_F_quotient_value_from_enumeration():
    spec = sf.make_operator("sigma_k_root", 2, 3)
    lam = np.array([1.0, 2.0, 3.0])
    want = (sigma_enum(lam, 2) / 3.0) ** 0.5  # sigma_2(e) = C(3,2) = 3
    assert sf.evaluate_F(spec, lam) == pytest.approx(want, rel=1e-14)


def test_F_outside_cone_raises():
    spec = sf.make_operator("sigma_k_root", 2, 3)
    with pytest.raises(AdmissibilityError):
        sf.evaluate_F(spec, np.array([1.0, -2.0, 0.1]))


def test_F_gradient_linear_operator():
    spec = sf.make_operator("sigma_k_root", 1, 4)
    lam = np.array([0.3, 2.0, 1.0, 0.5])
    np.testing.assert_allclose(sf.F_gradient(spec, lam), np.full(4, 0.25), rtol=1e-14)


@pytest.mark.parametrize(
    "kind,k,l", [("sigma_k_root", 2, 0), ("quotient", 2, 1), ("quotient", 3, 1)]
)
def test_F_gradient_euler_and_fd(kind, k, l):
    rng = np.random.default_rng(17)
    spec = sf.make_operator(kind, k, 4, l)
    lam = sf.sample_cone(4, k, 100, rng)
    F = sf.evaluate_F(spec, lam)
    grad = sf.F_gradient(spec, lam)
    assert np.all(grad > 0)
    euler = np.abs((lam * grad).sum(axis=1) - F)
    assert np.all(euler <= 1e-10 * np.abs(F))
    for row in lam[:10]:
        fd = central_diff_gradient(lambda x: sf.evaluate_F(spec, x, check=False), row)
        np.testing.assert_allclose(sf.F_gradient(spec, row), fd, rtol=1e-6)


def test_gradient_sum_bound():
    rng = np.random.default_rng(23)
    for kind, k, l in [("sigma_k_root", 2, 0), ("quotient", 3, 2)]:
        spec = sf.make_operator(kind, k, 5, l)
        lam = sf.sample_cone(5, k, 500, rng)
        gsum = sf.F_gradient(spec, lam).sum(axis=1)
        assert gsum.min() >= 1.0 - 1e-10


# -- Newton-Maclaurin -------------------------------------------------------------


def test_newton_maclaurin_equality_at_identity():
    # both sides equal 18 at e for n=3, k=2, l=1
    lam = np.ones(3)
    lhs = 2 * 3 * sigma_enum(lam, 0) * sigma_enum(lam, 2)
    rhs = 1 * 2 * sigma_enum(lam, 1) * sigma_enum(lam, 1)
    assert lhs == rhs == 18.0
    assert sf.newton_maclaurin_residual(lam, 2, 1) == pytest.approx(0.0, abs=1e-14)


def test_newton_maclaurin_nonnegative_random():
    rng = np.random.default_rng(11)
    lam = sf.sample_cone(4, 2, 2000, rng)
    res = sf.newton_maclaurin_residual(lam, 2, 1)
    scale = sf.newton_maclaurin_scale(lam, 2, 1)
    assert np.all(res >= -1e-12 * scale)


def test_newton_maclaurin_oracle_value():
    lam = np.array([1.0, 2.0, 3.0])
    lhs = 3 * 2 * sigma_enum(lam, 1) * sigma_enum(lam, 3)
    rhs = 2 * 1 * sigma_enum(lam, 2) * sigma_enum(lam, 2)
    want = rhs - lhs
    assert want >= 0
    assert sf.newton_maclaurin_residual(lam, 3, 2) == pytest.approx(want, rel=1e-13)


def test_newton_maclaurin_requires_cone():
    with pytest.raises(AdmissibilityError):
        sf.newton_maclaurin_residual(np.array([1.0, -3.0, 0.2]), 2, 1)


# -- structure conditions ----------------------------------------------------------


def test_structure_conditions_linear_case():
    rng = np.random.default_rng(2)
    spec = sf.make_operator("sigma_k_root", 1, 3)
    samples = sf.sample_cone(3, 1, 200, rng)
    report = sf.check_structure_conditions(spec, samples, epsilon=1.0)
    assert report.all_pass
    assert report.epsilon_max == pytest.approx(1.0, abs=1e-12)


def test_structure_conditions_sigma2_root():
    rng = np.random.default_rng(3)
    spec = sf.make_operator("sigma_k_root", 2, 4)
    samples = sf.sample_cone(4, 2, 1000, rng)
    report = sf.check_structure_conditions(spec, samples, epsilon=1e-6)
    assert report.positivity_pass and report.concavity_pass and report.monotonicity_pass
    assert report.epsilon_max > 0


def test_structure_conditions_reject_outside_cone():
    spec = sf.make_operator("sigma_k_root", 2, 3)
    samples = np.array([[1.0, 1.0, 1.0], [-1.0, -1.0, -1.0]])
    with pytest.raises(AdmissibilityError):
        sf.check_structure_conditions(spec, samples, epsilon=0.1)


def test_structure_report_serializes():
    rng = np.random.default_rng(4)
    spec = sf.make_operator("quotient", 2, 3, 1)
    samples = sf.sample_cone(3, 2, 100, rng)
    report = sf.check_structure_conditions(spec, samples, epsilon=0.01)
    data = json.loads(report.to_json())
    assert data["n_samples"] == 100
    assert "epsilon_max" in data and "all_pass" in data


def test_empty_samples_rejected():
    spec = sf.make_operator("sigma_k_root", 2, 3)
    with pytest.raises(ValueError):
        sf.check_structure_conditions(spec, np.empty((0, 3)), epsilon=0.1)


# -- property tests -----------------------------------------------------------------


@settings(max_examples=200, deadline=None)
@given(
    st.lists(st.floats(min_value=0.05, max_value=50.0), min_size=3, max_size=6),
    st.floats(min_value=0.1, max_value=10.0),
)
def test_homogeneity_property(values, s):
    lam = np.array(values)
    n = lam.size
    spec = sf.make_operator("sigma_k_root", min(2, n), n)
    F = sf.evaluate_F(spec, lam, check=False)
    Fs = sf.evaluate_F(spec, s * lam, check=False)
    assert abs(Fs - s * F) <= 1e-10 * abs(F) * max(s, 1.0)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(min_value=-10, max_value=10), min_size=3, max_size=6))
def test_cone_nesting_property(values):
    lam = np.array(values)
    n = lam.size
    for k in range(n, 1, -1):
        if sf.in_cone(lam, k):
            assert sf.in_cone(lam, k - 1)
