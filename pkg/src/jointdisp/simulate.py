"""Synthetic cohorts from a model spec with known parameters."""

from __future__ import annotations

import math

import numpy as np

from .errors import InvalidArgument
from .longitudinal import clamped_exp, residual_variances
from .model import (
    Baseline, Dataset, Linking, ModelSpec, ParameterState, Subject, VarianceModel,
    check_spec, zero_state,
)
from .quadrature import GK15_WEIGHTS, gk15_nodes
from .splines import eval_basis

# male, age >= 50, previous opportunistic infection
DEFAULT_COVARIATE_PREVALENCE = (0.596, 0.12, 0.396)


def _log_hazard_fn(state: ParameterState, spec: ModelSpec, x: np.ndarray, b: np.ndarray, z):
    """Vectorized ``u -> log h0(u) + varrho(u)`` for one subject."""
    lin = float(x @ state.beta3)
    base = spec.baseline
    edges = np.asarray(spec.piecewise_edges)

    def fn(u):
        u = np.asarray(u, dtype=float)
        if spec.linking is Linking.CONSTANT_TRADITIONAL:
            varrho = lin + state.g_const[0] * b[0] + state.g_const[1] * b[1] + 0.0 * u
        else:
            B = eval_basis(spec.basis, u)
            varrho = lin + (B @ state.gamma[1]) * b[0] + (B @ state.gamma[2]) * b[1]
            if z is not None:
                varrho = varrho + (B @ state.gamma[3]) * z
        if base is Baseline.WEIBULL:
            log_h0 = math.log(state.rho) + (state.rho - 1.0) * np.log(u)
        elif base is Baseline.PSPLINE:
            log_h0 = eval_basis(spec.basis, u) @ state.gamma[0]
        else:
            k = np.clip(np.searchsorted(edges, u, side="right") - 1, 0, len(edges) - 2)
            log_h0 = np.log(state.lam[k])
        return log_h0 + varrho

    return fn


def _panel_edges(spec: ModelSpec, t: float) -> np.ndarray:
    edges = np.linspace(0.0, t, max(1, math.ceil(t)) + 1)
    if spec.baseline is Baseline.PIECEWISE:
        # split at the hazard's jump points so each panel integrates a constant
        inner = [a for a in spec.piecewise_edges if 0.0 < a < t]
        edges = np.union1d(edges, inner)
    return edges


def cumulative_hazard(log_hazard, spec: ModelSpec, t: float) -> float:
    """GK15 integral of ``exp(log_hazard)`` over ``[0, t]`` with ceil(t) panels."""
    if t <= 0:
        return 0.0
    edges = _panel_edges(spec, t)
    lo, hi = edges[:-1], edges[1:]
    nodes = gk15_nodes(lo, hi)
    vals = clamped_exp(log_hazard(nodes.reshape(-1))).reshape(nodes.shape)
    return float(np.sum(0.5 * (hi - lo) * (vals @ GK15_WEIGHTS)))


def invert_cumulative_hazard(log_hazard, spec: ModelSpec, target: float, t_max: float,
                             tol: float = 1e-8):
    """Smallest ``T`` in ``[0, t_max]`` with ``H(T) = target``; ``None`` if ``H(t_max) < target``."""
    if not tol > 0:
        raise InvalidArgument(f"tol must be positive, got {tol}")
    if not target > 0:
        raise InvalidArgument(f"target must be positive, got {target}")
    if cumulative_hazard(log_hazard, spec, t_max) < target:
        return None
    lo, hi = 0.0, float(t_max)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if cumulative_hazard(log_hazard, spec, mid) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def invert_survival_time(state: ParameterState, spec: ModelSpec, subject: Subject | None,
                         subject_index: int, target: float, t_max: float, tol: float = 1e-8):
    """Event time whose cumulative hazard equals ``target`` (an Exp(1) draw).

    ``subject`` supplies covariates; ``None`` means all covariates are zero.
    Returns ``None`` (censored) when the hazard accumulated by ``t_max``
    falls short of ``target``.
    """
    x = np.zeros(3) if subject is None else subject.covariates
    sigma2 = residual_variances(spec, state, x[None, :].repeat(state.N, axis=0))
    z = _shared(state, spec, subject_index, sigma2)
    fn = _log_hazard_fn(state, spec, x, state.b[subject_index], z)
    return invert_cumulative_hazard(fn, spec, target, t_max, tol)


def _shared(state, spec, i, sigma2):
    if spec.linking is Linking.SHARED_B2:
        return float(state.b[i, 2])
    if spec.linking is Linking.SHARED_SIGMA:
        return math.sqrt(sigma2[i])
    return None


def simulate_dataset(true_state: ParameterState, spec: ModelSpec, N: int, exam_schedule,
                     censor_time: float, seed: int, *,
                     covariate_prevalence=DEFAULT_COVARIATE_PREVALENCE,
                     jitter: float = 0.0, log_sigma_sd: float = 0.0, tol: float = 1e-8):
    """Draw a cohort of ``N`` subjects.

    Population parameters come from ``true_state`` (its ``b`` and per-subject
    variances are ignored and redrawn). Under EXCHANGEABLE the per-subject
    log standard deviations are ``N(true_state.log_sigma0, log_sigma_sd^2)``;
    ``true_state.log_sigma0`` must then be set.

    Returns ``(dataset, realized_state)``; the realized state carries the
    drawn random effects and variances and is what a recovery check should
    score against.
    """
    check_spec(spec)
    schedule = np.sort(np.asarray(exam_schedule, dtype=float))
    if schedule.size == 0:
        raise InvalidArgument("exam schedule is empty")
    if schedule[0] < 0 or schedule[-1] > censor_time:
        raise InvalidArgument("exam schedule must lie within [0, censor_time]")
    if N < 1:
        raise InvalidArgument("N must be positive")
    rng = np.random.default_rng(seed)
    realized = zero_state(spec, N)
    for name in ("beta1", "beta2", "beta3", "sigma_inv", "varpi", "lam", "rho", "g_const"):
        setattr(realized, name, getattr(true_state, name))
    realized.gamma = {l: np.asarray(g, dtype=float) for l, g in true_state.gamma.items()}
    realized.tau2 = dict(true_state.tau2)
    Sigma = np.linalg.inv(true_state.sigma_inv)
    realized.b = rng.multivariate_normal(np.zeros(spec.p), Sigma, size=N, method="cholesky")
    if spec.variance_model is VarianceModel.EXCHANGEABLE:
        if true_state.log_sigma0 is None:
            raise InvalidArgument("EXCHANGEABLE simulation needs true_state.log_sigma0 as the log-sd centre")
        realized.log_sigma = true_state.log_sigma0 + log_sigma_sd * rng.standard_normal(N)
        realized.log_sigma0 = None
    else:
        realized.log_sigma0 = true_state.log_sigma0
    X = (rng.uniform(size=(N, 3)) < np.asarray(covariate_prevalence)).astype(int)
    sigma2 = residual_variances(spec, realized, X)
    targets = rng.exponential(size=N)
    subjects = []
    for i in range(N):
        times = schedule.copy()
        if jitter > 0 and times.size > 1:
            times[1:] = np.clip(times[1:] + rng.uniform(-jitter, jitter, times.size - 1), 0.0, censor_time)
            times = np.sort(times)
        fn = _log_hazard_fn(realized, spec, X[i].astype(float), realized.b[i], _shared(realized, spec, i, sigma2))
        T = invert_cumulative_hazard(fn, spec, targets[i], censor_time, tol)
        event = 1
        if T is None:
            T, event = float(censor_time), 0
        keep = times <= T
        keep[0] = True
        times = times[keep]
        b = realized.b[i]
        mean = (realized.beta1[0] + realized.beta1[1] * times + X[i] @ realized.beta1[2:5]
                + b[0] + b[1] * times)
        y = mean + math.sqrt(sigma2[i]) * rng.standard_normal(times.size)
        subjects.append(Subject(
            id=f"s{i + 1:05d}", times=times, y=y, event_time=T, event=event,
            gender=int(X[i, 0]), age=int(X[i, 1]), prevoi=int(X[i, 2]),
        ))
    return Dataset(subjects), realized


def default_true_state(spec: ModelSpec) -> ParameterState:
    """Plausible population values for quick simulations.

    Loosely shaped after a square-root CD4 cohort: intercept near 17,
    covariates lowering the trajectory and raising the hazard. The baseline
    hazard sits near 0.08 per year.
    """
    st = zero_state(spec, 1)
    st.beta1 = np.array([17.0, 1.0, -0.7, -1.3, -1.6])
    st.beta3 = np.array([0.3, 0.5, 0.6])
    p = spec.p
    cov = np.diag([4.0, 0.25, 0.3][:p])
    cov[0, 1] = cov[1, 0] = 0.1
    st.sigma_inv = np.linalg.inv(cov)
    if spec.has_beta2:
        st.beta2 = np.array([0.2, -0.1, 0.3])
    st.log_sigma0 = math.log(1.5)
    st.log_sigma = None
    if st.varpi is not None:
        st.varpi = 1.5
    Q = spec.basis.Q
    levels = {0: math.log(0.08), 1: -0.2, 2: -0.5, 3: 0.3}
    st.gamma = {l: np.full(Q, levels[l]) for l in spec.spline_indices}
    st.tau2 = {l: 0.01 for l in spec.spline_indices}
    if spec.baseline is Baseline.WEIBULL:
        st.rho = 1.1
    if spec.baseline is Baseline.PIECEWISE:
        st.lam = np.full(spec.num_pieces, 0.08)
    if spec.linking is Linking.CONSTANT_TRADITIONAL:
        st.g_const = np.array([-0.2, -0.5])
    return st
