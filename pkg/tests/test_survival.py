import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from jointdisp.errors import DomainError, InvalidArgument
from jointdisp.longitudinal import long_loglik, residual_variance
from jointdisp.model import Baseline, Dataset, Linking, ModelSpec, VarianceModel, enumerate_models, zero_state
from jointdisp.quadrature import GK15_NODES, GK15_WEIGHTS
from jointdisp.splines import eval_spline
from jointdisp.survival import (
    SurvivalDesign, hazard_ratio, linking_predictor, log_baseline_hazard, surv_loglik_pspline,
    surv_loglik_piecewise, surv_loglik_subject, surv_loglik_weibull,
)

from conftest import make_subject, random_state
import oracles

V, L, B = VarianceModel, Linking, Baseline


def test_linking_predictor_zero():
    for spec in enumerate_models():
        st_ = zero_state(spec, 1)
        assert linking_predictor(st_, spec, make_subject(gender=1, age=1, prevoi=1), 0, 1.3) == 0.0


def test_linking_constant_traditional():
    spec = ModelSpec(V.COMMON, L.CONSTANT_TRADITIONAL, B.PSPLINE)
    st_ = zero_state(spec, 1)
    st_.g_const = np.array([-0.21, -0.54])
    st_.b[0] = [1.5, -0.4]
    value = linking_predictor(st_, spec, make_subject(), 0, 2.0)
    assert value == pytest.approx(-0.21 * 1.5 + 0.54 * 0.4, abs=1e-15)


def test_linking_shared_sigma_constant_g3():
    spec = ModelSpec(V.EXCHANGEABLE, L.SHARED_SIGMA, B.PSPLINE)
    st_ = zero_state(spec, 1)
    st_.gamma[3] = np.full(spec.basis.Q, math.log(2))
    for t in np.linspace(0, 5, 11):
        assert linking_predictor(st_, spec, make_subject(), 0, t) == pytest.approx(math.log(2), abs=1e-14)


def test_linking_forms_against_oracle():
    rng = np.random.default_rng(3)
    for spec in enumerate_models():
        st_ = random_state(spec, 2, rng)
        s = make_subject(gender=1, prevoi=1)
        for t in (0.0, 1.1, 4.9):
            x = s.covariates
            b = st_.b[1]
            expected = x @ st_.beta3
            if spec.linking is L.CONSTANT_TRADITIONAL:
                expected += st_.g_const @ b[:2]
            else:
                g = lambda l: oracles.spline_value(0, 5, 20, st_.gamma[l], t)
                expected += g(1) * b[0] + g(2) * b[1]
                if spec.linking is L.SHARED_B2:
                    expected += g(3) * b[2]
                elif spec.linking is L.SHARED_SIGMA:
                    expected += g(3) * math.sqrt(residual_variance(spec, st_, 1, s))
            assert linking_predictor(st_, spec, s, 1, t) == pytest.approx(expected, abs=1e-12)


def test_log_baseline_hazard():
    spec = ModelSpec(V.COMMON, L.SLOPES_ONLY, B.WEIBULL)
    st_ = zero_state(spec, 1)
    for t in (0.0, 0.5, 3.0):
        assert log_baseline_hazard(st_, spec, t) == 0.0
    st_.rho = 2.0
    assert log_baseline_hazard(st_, spec, 3.0) == pytest.approx(math.log(2) + math.log(3))
    with pytest.raises(DomainError):
        log_baseline_hazard(st_, spec, 0.0)

    spec = ModelSpec(V.COMMON, L.SLOPES_ONLY, B.PSPLINE)
    st_ = zero_state(spec, 1)
    st_.gamma[0] = np.full(23, -1.7)
    assert log_baseline_hazard(st_, spec, 2.2) == pytest.approx(-1.7, abs=1e-14)

    spec = ModelSpec(V.COMMON, L.SLOPES_ONLY, B.PIECEWISE, piecewise_edges=(0, 1, math.inf))
    st_ = zero_state(spec, 1)
    st_.lam = np.array([2.0, 4.0])
    assert log_baseline_hazard(st_, spec, 1.5) == math.log(4)
    assert log_baseline_hazard(st_, spec, 0.5) == math.log(2)


def _const_state(spec, varrho_const=0.0):
    st_ = zero_state(spec, 1)
    st_.beta3 = np.array([varrho_const, 0, 0])
    return st_


def test_weibull_examples():
    spec = ModelSpec(V.COMMON, L.SLOPES_ONLY, B.WEIBULL)
    st_ = zero_state(spec, 1)
    assert surv_loglik_weibull(make_subject(T=2.0, event=1), st_, spec) == -2.0
    st_.rho = 2.0
    assert surv_loglik_weibull(make_subject(T=3.0, event=0), st_, spec) == -9.0
    st_ = _const_state(spec, math.log(0.5))
    st_.rho = 2.0
    val = surv_loglik_weibull(make_subject(T=1.0, event=1, gender=1), st_, spec)
    assert val == pytest.approx(-0.5, abs=1e-15)


def test_piecewise_examples():
    spec = ModelSpec(V.COMMON, L.SLOPES_ONLY, B.PIECEWISE)
    st_ = zero_state(spec, 1)
    assert surv_loglik_piecewise(make_subject(T=1.0, event=0), st_, spec) == -1.0
    st_.lam = np.array([2.0, 4.0] + [1.0] * 18)
    val = surv_loglik_piecewise(make_subject(T=0.5, event=0), st_, spec)
    assert val == pytest.approx(-1.5, abs=1e-15)
    assert val == -(2 * 0.25 + 4 * 0.25)


def test_piecewise_grid_must_cover_T():
    spec = ModelSpec(V.COMMON, L.SLOPES_ONLY, B.PIECEWISE, piecewise_edges=(0.0, 1.0, 2.0))
    st_ = zero_state(spec, 1)
    with pytest.raises(InvalidArgument):
        surv_loglik_piecewise(make_subject(T=2.5), st_, spec)


@settings(max_examples=100, deadline=None)
@given(T=st.floats(0.01, 5.0), c=st.floats(-3, 1), lam=st.floats(0.01, 3), event=st.integers(0, 1))
def test_piecewise_equals_exponential_weibull(T, c, lam, event):
    pw = ModelSpec(V.COMMON, L.SLOPES_ONLY, B.PIECEWISE)
    wb = ModelSpec(V.COMMON, L.SLOPES_ONLY, B.WEIBULL)
    s = make_subject(T=T, event=event, gender=1)
    a = _const_state(pw, c)
    a.lam = np.full(20, lam)
    b = _const_state(wb, c + math.log(lam))
    b.rho = 1.0
    assert surv_loglik_piecewise(s, a, pw) == pytest.approx(surv_loglik_weibull(s, b, wb), abs=1e-12)


def test_pspline_closed_form_constant_hazard():
    spec = ModelSpec(V.COMMON, L.SLOPES_ONLY, B.PSPLINE)
    st_ = zero_state(spec, 1)
    assert surv_loglik_pspline(make_subject(T=2.0, event=0), st_, spec) == pytest.approx(-2.0, abs=1e-8)
    rng = np.random.default_rng(0)
    for T, c in zip(rng.uniform(0.001, 5.0, 200), rng.uniform(-5, 2, 200)):
        st_.gamma[0] = np.full(23, c)
        s0 = make_subject(T=T, event=0)
        s1 = make_subject(T=T, event=1)
        v0 = surv_loglik_pspline(s0, st_, spec)
        assert v0 == pytest.approx(-math.exp(c) * T, abs=1e-8)
        assert surv_loglik_pspline(s1, st_, spec) - v0 == pytest.approx(c, abs=1e-12)


def test_pspline_varying_baseline_matches_fine_quadrature():
    # GK15 on [0, T] against scipy's adaptive integrator for a smooth log-spline baseline
    spec = ModelSpec(V.COMMON, L.SLOPES_ONLY, B.PSPLINE, num_intervals=4)
    st_ = zero_state(spec, 1)
    st_.gamma[0] = np.array([-2.0, -1.8, -1.5, -1.4, -1.5, -1.7, -2.0])
    T = 4.3
    ref, _ = quad(lambda u: math.exp(oracles.spline_value(0, 5, 4, st_.gamma[0], u)), 0, T,
                  points=[1.25, 2.5, 3.75], epsabs=1e-13)
    val = surv_loglik_pspline(make_subject(T=T, event=0), st_, spec)
    assert val == pytest.approx(-ref, rel=1e-5)


def test_hazard_ratio():
    spec = ModelSpec(V.EXCHANGEABLE, L.SHARED_SIGMA, B.PSPLINE)
    st_ = zero_state(spec, 1)
    assert hazard_ratio(st_, spec, 2.0) == 1.0
    st_.gamma[3] = np.full(23, math.log(2))
    for t in np.linspace(0, 5, 7):
        assert hazard_ratio(st_, spec, t) == pytest.approx(2.0, rel=1e-14)
    rng = np.random.default_rng(2)
    st_.gamma[3] = rng.normal(size=23)
    for t in rng.uniform(0, 5, 10):
        assert abs(math.log(hazard_ratio(st_, spec, t)) - eval_spline(spec.basis, st_.gamma[3], t)) < 1e-14
    with pytest.raises(InvalidArgument):
        hazard_ratio(zero_state(ModelSpec(V.COMMON, L.SLOPES_ONLY, B.PSPLINE), 1),
                     ModelSpec(V.COMMON, L.SLOPES_ONLY, B.PSPLINE), 1.0)


def test_censored_contribution_nonpositive_and_monotone():
    rng = np.random.default_rng(4)
    for spec in enumerate_models():
        st_ = random_state(spec, 1, rng)
        s = make_subject(T=float(rng.uniform(0.1, 5)), event=0, gender=1)
        v0 = surv_loglik_subject(s, st_, spec)
        assert v0 <= 0
        st_.beta3 = st_.beta3 + np.array([0.5, 0, 0])
        assert surv_loglik_subject(s, st_, spec) < v0


def test_design_matches_scalar_reference():
    rng = np.random.default_rng(9)
    subjects = [
        make_subject(str(i), times=[0.0, 0.7], y=rng.normal(size=2), T=float(rng.uniform(0.05, 5.0)),
                     event=int(rng.integers(2)), gender=int(rng.integers(2)), age=int(rng.integers(2)),
                     prevoi=int(rng.integers(2)))
        for i in range(7)
    ]
    data = Dataset(subjects)
    for spec in enumerate_models():
        st_ = random_state(spec, 7, rng)
        design = SurvivalDesign(data, spec)
        ref = [surv_loglik_subject(s, st_, spec, i) for i, s in enumerate(subjects)]
        np.testing.assert_allclose(design.loglik(st_), ref, rtol=1e-11, atol=1e-12)


def test_design_matches_clean_room():
    rng = np.random.default_rng(10)
    for spec in enumerate_models():
        st_ = random_state(spec, 3, rng)
        subjects = [make_subject(str(i), times=[0.0, 1.0], y=rng.normal(size=2), T=float(rng.uniform(0.1, 5)),
                                 event=i % 2, gender=1, prevoi=i % 2) for i in range(3)]
        data = Dataset(subjects)
        total = long_loglik(data, st_, spec) + SurvivalDesign(data, spec).loglik(st_)
        ref = [oracles.clean_room_loglik(s, st_, spec, i, GK15_NODES, GK15_WEIGHTS) for i, s in enumerate(subjects)]
        np.testing.assert_allclose(total, ref, rtol=1e-10, atol=1e-10)
