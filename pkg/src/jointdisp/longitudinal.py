"""Mean trajectory, dispersion models and the Gaussian longitudinal likelihood."""

from __future__ import annotations

import math

import numpy as np

from .errors import InvalidArgument, NumericError
from .model import Dataset, ModelSpec, ParameterState, Subject, VarianceModel

EXP_CLAMP = 50.0
_LOG_2PI = math.log(2.0 * math.pi)


class ClampCounter:
    """Counts how often an exponent hit the +/-50 guard."""

    def __init__(self):
        self.count = 0

    def clip(self, x):
        x = np.asarray(x, dtype=float)
        hits = np.count_nonzero(np.abs(x) > EXP_CLAMP)
        if hits:
            self.count += int(hits)
            x = np.clip(x, -EXP_CLAMP, EXP_CLAMP)
        return x


def clamped_exp(x, clamp: ClampCounter | None = None):
    if clamp is None:
        return np.exp(np.clip(x, -EXP_CLAMP, EXP_CLAMP))
    return np.exp(clamp.clip(x))


def mean_trajectory(beta1, b1i, subject: Subject, t):
    """Population line plus covariate shifts plus the subject's own line."""
    beta1 = np.asarray(beta1, dtype=float)
    b1i = np.asarray(b1i, dtype=float)
    fixed = beta1[0] + beta1[1] * np.asarray(t, dtype=float) + subject.covariates @ beta1[2:5]
    return fixed + b1i[0] + b1i[1] * np.asarray(t, dtype=float)


def residual_variances(spec: ModelSpec, state: ParameterState, X: np.ndarray,
                       clamp: ClampCounter | None = None) -> np.ndarray:
    """Within-subject variances for every subject; ``X`` is the N x 3 covariate matrix."""
    vm = spec.variance_model
    N = state.N
    if vm is VarianceModel.EXCHANGEABLE:
        return np.exp(2.0 * np.asarray(state.log_sigma, dtype=float))
    if vm is VarianceModel.COMMON:
        eta = np.zeros(N)
    elif vm is VarianceModel.RANDOM_INTERCEPT_DISPERSION:
        eta = state.b[:, 2]
    else:
        eta = np.asarray(X) @ state.beta2 + state.b[:, 2]
    return math.exp(2.0 * state.log_sigma0) * clamped_exp(eta, clamp)


def residual_variance(spec: ModelSpec, state: ParameterState, subject_index: int,
                      subject: Subject | None = None) -> float:
    """Residual variance of one subject.

    ``subject`` supplies the dispersion covariates and is only needed under
    COVARIATE_DISPERSION.
    """
    if not 0 <= subject_index < state.N:
        raise InvalidArgument(f"subject index {subject_index} out of range for N={state.N}")
    vm = spec.variance_model
    if vm is VarianceModel.EXCHANGEABLE:
        return float(np.exp(2.0 * state.log_sigma[subject_index]))
    sigma0_sq = math.exp(2.0 * state.log_sigma0)
    if vm is VarianceModel.COMMON:
        return sigma0_sq
    eta = state.b[subject_index, 2]
    if vm is VarianceModel.COVARIATE_DISPERSION:
        if subject is None:
            raise InvalidArgument("COVARIATE_DISPERSION needs the subject's covariates")
        eta += float(subject.covariates @ state.beta2)
    eta = min(max(eta, -EXP_CLAMP), EXP_CLAMP)
    return sigma0_sq * math.exp(eta)


def long_loglik_subject(subject: Subject, state: ParameterState, spec: ModelSpec,
                        subject_index: int = 0) -> float:
    """Sum of Gaussian log densities of one subject's exams."""
    sigma2 = residual_variance(spec, state, subject_index, subject)
    if not (sigma2 > 0 and math.isfinite(sigma2)):
        raise NumericError(f"residual variance {sigma2} is not positive")
    m = mean_trajectory(state.beta1, state.b[subject_index, :2], subject, subject.times)
    r = subject.y - m
    return float(-0.5 * subject.n * (_LOG_2PI + math.log(sigma2)) - 0.5 * np.sum(r * r) / sigma2)


def long_loglik(data: Dataset, state: ParameterState, spec: ModelSpec,
                sigma2: np.ndarray | None = None, clamp: ClampCounter | None = None) -> np.ndarray:
    """Per-subject longitudinal log-likelihood as a length-N vector."""
    if sigma2 is None:
        sigma2 = residual_variances(spec, state, data.X, clamp)
    s = data.obs_subject
    fixed = data.X @ state.beta1[2:5] + state.beta1[0] + state.b[:, 0]
    m = fixed[s] + (state.beta1[1] + state.b[s, 1]) * data.obs_time
    r = data.obs_y - m
    ss = np.bincount(s, weights=r * r, minlength=data.N)
    return -0.5 * data.n_obs * (_LOG_2PI + np.log(sigma2)) - 0.5 * ss / sigma2
