import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jointdisp.errors import InvalidArgument, NumericError
from jointdisp.longitudinal import (
    ClampCounter, clamped_exp, long_loglik, long_loglik_subject, mean_trajectory,
    residual_variance, residual_variances,
)
from jointdisp.model import Baseline, Dataset, Linking, ModelSpec, VarianceModel, zero_state

from conftest import make_subject, random_state
import oracles

V, L, B = VarianceModel, Linking, Baseline


def spec_for(vm):
    link = L.SHARED_SIGMA
    return ModelSpec(vm, link, B.WEIBULL)


def test_mean_trajectory_zero():
    s = make_subject(gender=1, age=1, prevoi=1)
    assert mean_trajectory(np.zeros(5), np.zeros(2), s, 3.3) == 0.0


def test_mean_trajectory_sum_of_coefficients():
    s = make_subject(gender=1, age=1, prevoi=1)
    beta1 = [17.26, 1.74, -0.66, -1.34, -1.62]
    assert mean_trajectory(beta1, [0.0, 0.0], s, 0.0) == pytest.approx(13.64, abs=1e-12)


def test_mean_trajectory_slope():
    s = make_subject(gender=0, age=1, prevoi=0)
    beta1 = np.array([1.0, 0.7, 2.0, 3.0, 4.0])
    b = np.array([0.3, -0.2])
    diff = mean_trajectory(beta1, b, s, 1.0) - mean_trajectory(beta1, b, s, 0.0)
    assert diff == pytest.approx(0.7 - 0.2, abs=1e-14)


def test_residual_variance_models():
    s = make_subject(gender=1)
    spec = spec_for(V.COVARIATE_DISPERSION)
    st_ = zero_state(spec, 1)
    st_.log_sigma0 = math.log(1.7)
    # eta = 0 gives the baseline variance
    assert residual_variance(spec, st_, 0, s) == pytest.approx(1.7 ** 2, rel=1e-14)
    st_.log_sigma0 = 0.0
    st_.beta2 = np.array([math.log(2), 0.0, 0.0])
    assert residual_variance(spec, st_, 0, s) == pytest.approx(2.0, rel=1e-14)

    spec = spec_for(V.COMMON)
    st_ = zero_state(spec, 1)
    st_.log_sigma0 = math.log(2.59)
    assert residual_variance(spec, st_, 0) == pytest.approx(6.7081, rel=1e-12)

    spec = spec_for(V.RANDOM_INTERCEPT_DISPERSION)
    st_ = zero_state(spec, 2)
    st_.b[1, 2] = math.log(3)
    assert residual_variance(spec, st_, 1) == pytest.approx(3.0, rel=1e-14)

    spec = spec_for(V.EXCHANGEABLE)
    st_ = zero_state(spec, 2)
    st_.log_sigma = np.array([0.0, math.log(0.5)])
    assert residual_variance(spec, st_, 1) == pytest.approx(0.25, rel=1e-14)
    with pytest.raises(InvalidArgument):
        residual_variance(spec, st_, 2)
    with pytest.raises(InvalidArgument):
        residual_variance(spec, st_, -1)


def test_vector_and_scalar_variances_agree():
    rng = np.random.default_rng(5)
    subjects = [make_subject(str(i), gender=i % 2, age=(i // 2) % 2, prevoi=(i // 4) % 2) for i in range(8)]
    data = Dataset(subjects)
    for vm in V:
        spec = spec_for(vm)
        st_ = random_state(spec, 8, rng)
        vec = residual_variances(spec, st_, data.X)
        scal = [residual_variance(spec, st_, i, s) for i, s in enumerate(subjects)]
        np.testing.assert_allclose(vec, scal, rtol=1e-14)


def test_dispersion_exponent_clamp():
    spec = spec_for(V.RANDOM_INTERCEPT_DISPERSION)
    st_ = zero_state(spec, 3)
    st_.b[:, 2] = [-80.0, 0.0, 80.0]
    counter = ClampCounter()
    s2 = residual_variances(spec, st_, np.zeros((3, 3)), counter)
    assert counter.count == 2
    np.testing.assert_allclose(s2, [math.exp(-50), 1.0, math.exp(50)])
    assert clamped_exp(1000.0) == math.exp(50)


def test_single_observation_at_mean():
    spec = spec_for(V.COMMON)
    st_ = zero_state(spec, 1)
    s = make_subject(times=[0.0], y=[0.0])
    assert long_loglik_subject(s, st_, spec) == pytest.approx(-0.918938533204673, abs=1e-12)


def test_additivity_over_observations():
    spec = spec_for(V.COMMON)
    st_ = zero_state(spec, 1)
    st_.beta1 = np.array([1.0, 0.5, 0, 0, 0])
    st_.log_sigma0 = 0.3
    one = long_loglik_subject(make_subject(times=[0.0], y=[1.4]), st_, spec)
    two = long_loglik_subject(make_subject(times=[2.0], y=[1.1]), st_, spec)
    both = long_loglik_subject(make_subject(times=[0.0, 2.0], y=[1.4, 1.1]), st_, spec)
    assert both == pytest.approx(one + two, abs=1e-13)


def test_matches_gaussian_product_oracle():
    rng = np.random.default_rng(6)
    for vm in V:
        spec = spec_for(vm)
        for _ in range(20):
            n = int(rng.integers(1, 8))
            times = np.sort(rng.uniform(0, 5, n))
            s = make_subject(times=times, y=rng.normal(10, 2, n), gender=int(rng.integers(2)),
                             age=int(rng.integers(2)), prevoi=int(rng.integers(2)))
            st_ = random_state(spec, 1, rng)
            st_.beta1[0] = 10.0
            var = residual_variance(spec, st_, 0, s)
            m = mean_trajectory(st_.beta1, st_.b[0, :2], s, s.times)
            ref = oracles.gaussian_product_log(s.y, m, var)
            assert long_loglik_subject(s, st_, spec) == pytest.approx(ref, abs=1e-10)


def test_vectorized_matches_subject_loop():
    rng = np.random.default_rng(7)
    subjects = [make_subject(str(i), times=np.sort(rng.uniform(0, 5, 4)), y=rng.normal(size=4),
                             gender=i % 2, prevoi=1 - i % 2) for i in range(6)]
    data = Dataset(subjects)
    for vm in V:
        spec = spec_for(vm)
        st_ = random_state(spec, 6, rng)
        ref = [long_loglik_subject(s, st_, spec, i) for i, s in enumerate(subjects)]
        np.testing.assert_allclose(long_loglik(data, st_, spec), ref, rtol=1e-12)


@settings(max_examples=100, deadline=None)
@given(c=st.floats(-1e3, 1e3), seed=st.integers(0, 2 ** 32 - 1))
def test_location_invariance(c, seed):
    rng = np.random.default_rng(seed)
    spec = spec_for(V.COMMON)
    st_ = random_state(spec, 1, rng)
    times = np.sort(rng.uniform(0, 5, 5))
    y = rng.normal(size=5)
    base = long_loglik_subject(make_subject(times=times, y=y), st_, spec)
    st_.beta1 = st_.beta1 + np.array([c, 0, 0, 0, 0])
    shifted = long_loglik_subject(make_subject(times=times, y=y + c), st_, spec)
    assert shifted == pytest.approx(base, abs=1e-12 * max(1.0, abs(c)) * 100)


def test_unimodal_in_variance():
    spec = spec_for(V.COMMON)
    st_ = zero_state(spec, 1)
    y = np.array([1.0, -2.0, 0.5, 3.0])
    s = make_subject(times=[0, 1, 2, 3], y=y)
    mse = float(np.mean(y ** 2))
    grid = np.linspace(0.05, 20.0, 400)
    vals = []
    for v in grid:
        st_.log_sigma0 = 0.5 * math.log(v)
        vals.append(long_loglik_subject(s, st_, spec))
    vals = np.array(vals)
    peak = int(np.argmax(vals))
    assert abs(grid[peak] - mse) < grid[1] - grid[0]
    assert np.all(np.diff(vals[:peak + 1]) > 0)
    assert np.all(np.diff(vals[peak:]) < 0)


def test_common_and_exchangeable_agree():
    rng = np.random.default_rng(8)
    s = make_subject(times=[0, 1, 2], y=rng.normal(size=3))
    common = spec_for(V.COMMON)
    exch = spec_for(V.EXCHANGEABLE)
    a = zero_state(common, 1)
    a.log_sigma0 = 0.4
    b = zero_state(exch, 1)
    b.log_sigma = np.array([0.4])
    assert long_loglik_subject(s, a, common) == long_loglik_subject(s, b, exch)


def test_nonpositive_variance_is_numeric_error():
    spec = spec_for(V.EXCHANGEABLE)
    st_ = zero_state(spec, 1)
    st_.log_sigma = np.array([-1e6])
    with pytest.raises(NumericError):
        long_loglik_subject(make_subject(), st_, spec)
