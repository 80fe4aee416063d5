import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import double_factorial_odd, qp_projection
from tvarch.exceptions import AssumptionViolation, InfeasibleOmega, NotDifferentiable
from tvarch.model import (
    InnovationLaw,
    LagWeights,
    OmegaSpace,
    ParameterCurve,
    Regularity,
    TvArchSpec,
    assumption_report,
    build_spec,
    eval_coefficients,
    omega_project,
    validate_moment_conditions,
)


# -- build_spec -----------------------------------------------------------------


def test_constant_arch1_is_valid():
    spec = build_spec(
        [ParameterCurve.constant(0.5), ParameterCurve.constant(0.4)], "gaussian", Regularity(0.1, 0.5, 0.2, 1.0)
    )
    assert spec.p == 1
    assert spec.lag_bound_sum() == 0.5


def test_coefficient_above_q_is_rejected():
    with pytest.raises(AssumptionViolation) as exc:
        build_spec([ParameterCurve.constant(0.5), ParameterCurve.constant(1.0)], "gaussian", Regularity(0.1, 0.5, 0.2, 1.0))
    assert "sup_u a_1(u) <= Q/ell(1)" in str(exc.value)
    assert exc.value.lhs == 1.0 and exc.value.rhs == 0.5


def test_cosine_intercept_valid_with_grid_minimum():
    spec = build_spec([ParameterCurve.sinusoid(2, 1, 0, 1)], "gaussian", Regularity(0.5, 0.5, 0.2, 10.0))
    check = next(c for c in assumption_report(spec) if c.name.startswith("inf_u a_0"))
    dense = np.linspace(0, 1, 200001)
    assert check.lhs == pytest.approx(float(np.min(2 + np.cos(2 * np.pi * dense))), abs=1e-12)
    assert check.lhs == pytest.approx(1.0)


def test_intercept_must_exceed_rho_strictly():
    with pytest.raises(AssumptionViolation, match="inf_u a_0"):
        build_spec([ParameterCurve.constant(0.1)], "gaussian", Regularity(0.1, 0.5, 0.2, 1.0))


def test_lipschitz_violation_reports_location():
    with pytest.raises(AssumptionViolation, match=r"\|a_1") as exc:
        build_spec([ParameterCurve.constant(1.0), ParameterCurve.polynomial(0.0, 0.4)], "gaussian", Regularity(0.1, 0.5, 0.2, 0.1))
    assert exc.value.u is not None


def test_negative_lag_coefficient_rejected():
    with pytest.raises(AssumptionViolation, match="a_1"):
        build_spec([ParameterCurve.constant(1.0), ParameterCurve.sinusoid(0.0, 0.1)], "gaussian", Regularity(0.1, 0.5, 0.2, 5.0))


def test_failing_spec_fails_on_denser_grids():
    # 0.05 + 0.95 * cos^2 dips to 0.05 < rho at u = 0.25 and 0.75, both on every grid containing quarters
    curve = ParameterCurve.sinusoid(0.525, 0.475, 0.0, 2.0)
    spec = TvArchSpec((curve,), InnovationLaw(), Regularity(0.1, 0.5, 0.2, 100.0))
    for n in (1001, 2001, 4001):
        assert not all(c.passed for c in assumption_report(spec, n))


@given(st.floats(0.001, 0.1))
def test_grid_failure_is_monotone_in_density(depth):
    curve = ParameterCurve.sinusoid(0.2, 0.2 - depth, 0.0, 1.0)  # minimum 'depth' at u = 0.5
    spec = TvArchSpec((curve,), InnovationLaw(), Regularity(0.1, 0.5, 0.2, 100.0))
    coarse = all(c.passed for c in assumption_report(spec, 1001))
    fine = all(c.passed for c in assumption_report(spec, 2001))
    assert coarse == fine == (depth > 0.1)


# -- moment conditions -----------------------------------------------------------


def test_gaussian_moments_match_double_factorial():
    law = InnovationLaw("gaussian")
    for k in range(1, 7):
        assert law.abs_moment(2 * k) == pytest.approx(double_factorial_odd(k), rel=1e-12)


def _p1(q_sum: float, nu: float = 0.2, law="gaussian"):
    return build_spec([ParameterCurve.constant(1.0), ParameterCurve.constant(q_sum / 2)], law, Regularity(0.1, q_sum, nu, 1.0))


def test_bias_level_fails_for_large_lag_mass():
    checks = validate_moment_conditions(_p1(0.2), "bias")
    assert checks[1].lhs == pytest.approx(10395 ** (1 / 6) * 0.2, rel=1e-12)
    assert checks[1].lhs == pytest.approx(0.9343, abs=1e-4)  # 10395**(1/6) = 4.6717
    assert not checks[1].passed


def test_bias_level_passes_for_small_lag_mass():
    checks = validate_moment_conditions(_p1(0.15), "bias")
    assert checks[1].lhs == pytest.approx(0.7008, abs=1e-4)
    assert all(c.passed for c in checks)


def test_two_point_passes_everywhere():
    spec = _p1(0.8, law="two-point")
    assert all(c.passed for lvl in ("clt", "bias") for c in validate_moment_conditions(spec, lvl))
    assert InnovationLaw("two-point").abs_moment(12) == 1.0


def test_student_t_moments():
    law = InnovationLaw("student-t", 10)
    assert law.abs_moment(2) == pytest.approx(1.0, rel=1e-12)
    assert law.abs_moment(4) == pytest.approx(3 * 8 / 6, rel=1e-12)
    assert law.var_z2 == pytest.approx(3 * 8 / 6 - 1)
    assert math.isinf(law.abs_moment(12))
    with pytest.raises(ValueError):
        InnovationLaw("student-t", 6)


def test_clt_level_student_t():
    spec = build_spec([ParameterCurve.constant(1.0)], InnovationLaw("student-t", 9), Regularity(0.1, 0.5, 0.2, 1.0))
    assert all(c.passed for c in validate_moment_conditions(spec, "clt"))


def test_innovation_draws_are_standardised():
    gen = np.random.default_rng(0)
    for law in (InnovationLaw("gaussian"), InnovationLaw("student-t", 12), InnovationLaw("two-point")):
        z = law.draw(gen, 400000)
        assert abs(z.mean()) < 0.01
        assert abs((z * z).mean() - 1) < 0.02


# -- coefficients ----------------------------------------------------------------


def test_constant_curve_derivatives_vanish(arch1_const):
    for u in (0.0, 0.3, 1.0):
        assert np.all(eval_coefficients(arch1_const, u, 1) == 0)


def test_cosine_second_derivative(cos_spec):
    assert eval_coefficients(cos_spec, 0.5, 2)[0] == pytest.approx(4 * math.pi**2, rel=1e-14)


def test_negative_u_conventions(arch1_tv):
    assert np.all(eval_coefficients(arch1_tv, -0.1, 0, "paper-exact") == 0)
    assert np.array_equal(eval_coefficients(arch1_tv, -0.1, 0, "clamped"), eval_coefficients(arch1_tv, 0.0))


def test_piecewise_linear_not_twice_differentiable():
    c = ParameterCurve.piecewise_linear([0, 0.5, 1], [1, 2, 1])
    assert c.d1(0.25) == pytest.approx(2.0)
    spec = build_spec([c], "gaussian", Regularity(0.1, 0.5, 0.2, 5.0))
    with pytest.raises(NotDifferentiable):
        eval_coefficients(spec, 0.3, 2)


CURVES = st.one_of(
    st.builds(ParameterCurve.polynomial, st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2)),
    st.builds(ParameterCurve.sinusoid, st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2), st.sampled_from([0.5, 1.0, 2.0])),
)


@given(CURVES, st.floats(0.05, 0.95))
def test_derivatives_match_finite_differences(curve, u):
    h = 1e-5
    for order in (1, 2, 3):
        fd = (curve.evaluate(u + h, order - 1) - curve.evaluate(u - h, order - 1)) / (2 * h)
        exact = curve.evaluate(u, order)
        scale = max(1.0, abs(curve.evaluate(u, order - 1)), abs(exact))
        assert abs(fd - exact) <= 1e-6 * scale


def test_curve_roundtrip_dict():
    c = ParameterCurve.piecewise_linear([0, 1], [0.1, 0.2])
    assert ParameterCurve(**c.to_dict()) == c


# -- Omega ----------------------------------------------------------------------


def test_projection_examples():
    om = OmegaSpace(1, 0.1, 5.0)
    assert np.array_equal(omega_project([0.5, 0.3], om), [0.5, 0.3])
    assert np.allclose(omega_project([-0.1, 0.5], om), [0.1, 0.5])
    out = omega_project([0.5, 0.8, 0.8], OmegaSpace(2, 0.1, 5.0))
    assert out[1] + out[2] == pytest.approx(1.0, abs=1e-15)
    assert out[1] == pytest.approx(0.5) and out[2] == pytest.approx(0.5)
    assert np.allclose(out, qp_projection([0.5, 0.8, 0.8], 0.1, 5.0), atol=1e-7)


def test_infeasible_omega():
    with pytest.raises(InfeasibleOmega):
        OmegaSpace(3, 0.4, 1.0)
    with pytest.raises(InfeasibleOmega):
        OmegaSpace(1, 0.5, 0.1)


def test_kappa():
    assert OmegaSpace(1, 0.1, 4.0).kappa == pytest.approx(50.0)


VEC = st.lists(st.floats(-3, 3, allow_nan=False), min_size=1, max_size=4)


@given(VEC, st.floats(0.001, 0.2), st.floats(0.5, 5))
def test_projection_idempotent_and_feasible(v, rho1, rho2):
    om = OmegaSpace(len(v) - 1, rho1, rho2)
    once = omega_project(v, om)
    assert om.contains(once)
    assert np.array_equal(omega_project(once, om), once)


@given(VEC, st.floats(0.01, 0.2), st.floats(0.5, 5))
def test_projection_matches_qp_oracle(v, rho1, rho2):
    om = OmegaSpace(len(v) - 1, rho1, rho2)
    assert np.allclose(omega_project(v, om), qp_projection(v, rho1, rho2), atol=1e-6)


def test_projection_thousand_random_points_idempotent():
    gen = np.random.default_rng(5)
    om = OmegaSpace(3, 0.05, 2.0)
    for _ in range(1000):
        once = omega_project(gen.normal(0, 2, 4), om)
        assert np.array_equal(omega_project(once, om), once)


def test_active_constraints_and_interior(arch1_tv):
    om = OmegaSpace(1, 0.01, 10.0)
    assert om.active_constraints([0.01, 0.5]) == ["alpha_0 >= rho1"]
    assert om.active_constraints([1.0, 1.0]) == ["sum alpha_i <= 1"]
    assert om.interior_report(arch1_tv).passed
    assert not OmegaSpace(1, 0.2, 10.0).interior_report(arch1_tv).passed


def test_lag_weights():
    assert LagWeights("geometric", 2.0)(3) == 8.0
    assert LagWeights("log", 0.5)(1) == 1.0
    assert LagWeights("log", 0.5)(3) == pytest.approx(9 * math.log(3) ** 1.5)
    with pytest.raises(ValueError):
        LagWeights("geometric", 1.0)
