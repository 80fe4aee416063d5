import math

import numpy as np
import pytest
from scipy.optimize import minimize_scalar
from scipy.stats import norm

from tvarch.asymptotics import (
    MCSettings,
    asymptotics_report,
    bias_mu,
    confidence_intervals,
    mse_objective,
    optimal_bandwidth,
    sigma_of_u,
)
from tvarch.estimate import FitResult
from tvarch.exceptions import StencilOutOfRange
from tvarch.kernel import KernelSpec
from tvarch.model import ParameterCurve, Regularity, build_spec

REG = Regularity(0.1, 0.6, 0.3, 20.0)
RECT = KernelSpec("rectangular", 0.1)


def _spec(*curves, law="gaussian"):
    return build_spec(list(curves), law, REG)


def _p1(c=0.2):
    return _spec(ParameterCurve.sinusoid(1.0, 0.3, c, 1.0), ParameterCurve.polynomial(0.1, 0.2))


# -- Sigma -----------------------------------------------------------------------


def test_sigma_closed_form_p0():
    assert sigma_of_u(_spec(ParameterCurve.constant(1.0)), 0.5).matrix[0, 0] == 0.5
    assert sigma_of_u(_spec(ParameterCurve.constant(2.0)), 0.5).matrix[0, 0] == 0.125


def _joint_z(a, b):
    d = a.matrix - b.matrix
    se = np.sqrt(a.stderr**2 + b.stderr**2)
    return np.max(np.abs(d) / se)


def test_sigma_p1_stable_across_seeds():
    s = _p1()
    a = sigma_of_u(s, 0.4, MCSettings(50000, 20, 1))
    b = sigma_of_u(s, 0.4, MCSettings(50000, 20, 2))
    assert _joint_z(a, b) < 3
    assert np.all(a.eigenvalues > 0)
    assert np.array_equal(a.matrix, a.matrix.T)


def test_sigma_converges_with_more_reps():
    s = _p1()
    a = sigma_of_u(s, 0.4, MCSettings(20000, 10, 3))
    b = sigma_of_u(s, 0.4, MCSettings(20000, 40, 3))
    assert _joint_z(a, b) < 3


def test_sigma_mc_matches_closed_form_p0():
    s = _spec(ParameterCurve.sinusoid(2.0, 1.0, 0.0, 1.0))
    est = sigma_of_u(s, 0.5, MCSettings(50000, 20, 4), closed_form=False)
    assert est.method == "monte-carlo"
    assert abs(est.matrix[0, 0] - 0.5) <= 3 * est.stderr[0, 0]


# -- mu --------------------------------------------------------------------------


def test_mu_closed_form_cosine(cos_spec):
    mu = bias_mu(cos_spec, 0.5, RECT)
    assert mu.mu[0] == pytest.approx(-0.5 / 12 * 4 * math.pi**2, rel=1e-12)
    assert mu.mu[0] == pytest.approx(-1.6449, abs=1e-4)


def test_mu_mc_matches_closed_form_p0(cos_spec):
    est = bias_mu(cos_spec, 0.5, RECT, MCSettings(20000, 20, 5), closed_form=False)
    err = math.hypot(est.stderr[0], est.stencil_error[0])
    assert abs(est.mu[0] + math.pi**2 / 6) <= 3 * err


def test_mu_zero_for_constant_curves():
    s = _spec(ParameterCurve.constant(1.0), ParameterCurve.constant(0.3))
    est = bias_mu(s, 0.5, RECT, MCSettings(2000, 4, 6))
    assert np.all(est.mu == 0.0)


def test_mu_continuous_in_vanishing_lag(cos_spec):
    s = _spec(ParameterCurve.sinusoid(2.0, 1.0, 0.0, 1.0), ParameterCurve.constant(1e-3))
    est = bias_mu(s, 0.5, RECT, MCSettings(20000, 20, 7))
    ref = bias_mu(cos_spec, 0.5, RECT).mu[0]
    assert abs(est.mu[0] - ref) <= 0.1 * abs(ref)


def test_mu_invariant_under_reflection():
    # reflecting about u0 = 0.5 flips the sine weight and the slope
    mc = MCSettings(20000, 20, 8)
    a = bias_mu(_p1(0.2), 0.5, RECT, mc)
    refl = _spec(ParameterCurve.sinusoid(1.0, 0.3, -0.2, 1.0), ParameterCurve.polynomial(0.3, -0.2))
    b = bias_mu(refl, 0.5, RECT, mc)
    se = np.sqrt(a.stderr**2 + b.stderr**2)
    assert np.all(np.abs(a.mu - b.mu) < 3 * se)


def test_stencil_out_of_range(cos_spec):
    with pytest.raises(StencilOutOfRange):
        bias_mu(cos_spec, 0.02, RECT)
    with pytest.raises(StencilOutOfRange):
        bias_mu(cos_spec, 0.95, RECT, du=0.03)


# -- bandwidth -------------------------------------------------------------------


def _b_opt(spec, N):
    return optimal_bandwidth(spec, 0.5, N, RECT, sigma_of_u(spec, 0.5), bias_mu(spec, 0.5, RECT))


def test_optimal_bandwidth_cosine(cos_spec):
    oracle = (2 * 144) ** 0.2 * 4000**-0.2 * (1 / (4 * math.pi**2)) ** 0.4
    res = _b_opt(cos_spec, 4000)
    assert res.b == pytest.approx(oracle, rel=1e-12)
    assert res.b == pytest.approx(0.1358, abs=1e-4)
    assert res.label == "conjectured"
    assert _b_opt(cos_spec, 128000).b == pytest.approx(0.5 * res.b, rel=1e-12)
    assert _b_opt(cos_spec, 128000).b == pytest.approx(0.0679, abs=1e-4)


@pytest.mark.parametrize("N", [1000, 4000, 50000])
def test_bandwidth_matches_numeric_minimum(cos_spec, N):
    sigma, mu = sigma_of_u(cos_spec, 0.5).matrix, bias_mu(cos_spec, 0.5, RECT).mu
    res = minimize_scalar(lambda b: mse_objective(b, N, RECT, sigma, mu, 2.0), bounds=(1e-4, 0.5), method="bounded", options={"xatol": 1e-12})
    assert _b_opt(cos_spec, N).b == pytest.approx(res.x, rel=1e-6)


def test_bandwidth_matches_numeric_minimum_p1():
    s = _p1()
    sig = sigma_of_u(s, 0.4, MCSettings(5000, 4, 9))
    mu = bias_mu(s, 0.4, RECT, MCSettings(5000, 4, 9), sigma=sig)
    res = minimize_scalar(lambda b: mse_objective(b, 4000, RECT, sig.matrix, mu.mu, 2.0), bounds=(1e-4, 0.5), method="bounded", options={"xatol": 1e-12})
    got = optimal_bandwidth(s, 0.4, 4000, RECT, sig, mu)
    assert not got.clipped
    assert got.b == pytest.approx(res.x, rel=1e-6)


def test_zero_bias_flag():
    s = _spec(ParameterCurve.constant(1.0))
    res = _b_opt(s, 4000)
    assert res.zero_bias and res.b == 0.5


# -- intervals -------------------------------------------------------------------


def _fit(est, se):
    m = len(est)
    return FitResult(2000, 0.5, 0.1, np.array(est), 0.0, 0.0, np.eye(m), 3, True, stderr=None if se is None else np.array(se))


def test_interval_quantile():
    ci = confidence_intervals(_fit([1.0], [1.0]), 0.95)
    assert ci[0, 1] - 1.0 == pytest.approx(1.959964, abs=1e-6)
    assert ci[0, 1] - 1.0 == pytest.approx(norm.ppf(0.975), rel=1e-15)


def test_interval_degenerate_stderr():
    ci = confidence_intervals(_fit([1.3, 0.2], [0.0, 0.0]), 0.9)
    assert np.array_equal(ci, [[1.3, 1.3], [0.2, 0.2]])


def test_interval_bias_correction():
    ci = confidence_intervals(_fit([1.0], [0.1]), 0.95, mu=[-2.0], b=0.1)
    assert np.mean(ci[0]) == pytest.approx(1.0 - 0.02)
    with pytest.raises(ValueError):
        confidence_intervals(_fit([1.0], None))
    with pytest.raises(ValueError):
        confidence_intervals(_fit([1.0], [0.1]), 0.4)


# -- report ----------------------------------------------------------------------


def test_report_text_and_csv(cos_spec):
    rep = asymptotics_report(cos_spec, 0.5, 4000, RECT)
    kv = dict(line.split(" = ") for line in rep.to_text().splitlines())
    assert float(kv["sigma_00"]) == 0.5
    assert float(kv["mu_0"]) == pytest.approx(-math.pi**2 / 6, rel=1e-12)
    assert float(kv["b_opt"]) == pytest.approx(0.1358, abs=1e-4)
    assert kv["b_opt_label"] == "conjectured"
    head, row = rep.to_csv().splitlines()
    assert dict(zip(head.split(","), row.split(","))) == kv
