"""Linking predictor, baseline hazards and survival log-likelihoods.

Scalar functions take one subject and are the readable reference forms.
:class:`SurvivalDesign` precomputes basis evaluations for a whole dataset and
returns per-subject log-likelihood vectors; the sampler uses it.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DomainError, InvalidArgument
from .longitudinal import ClampCounter, clamped_exp, residual_variance, residual_variances
from .model import Baseline, Dataset, Linking, ModelSpec, ParameterState, Subject
from .quadrature import GK15_NODES, GK15_WEIGHTS, gk15_integrate
from .splines import eval_basis, eval_spline


def _g(state: ParameterState, spec: ModelSpec, l: int, t):
    return eval_spline(spec.basis, state.gamma[l], t)


def shared_quantity(state: ParameterState, spec: ModelSpec, subject: Subject | None, subject_index: int):
    """The subject-level quantity multiplied by g3: b2i or sigma_i (None if unused)."""
    if spec.linking is Linking.SHARED_B2:
        return float(state.b[subject_index, 2])
    if spec.linking is Linking.SHARED_SIGMA:
        return math.sqrt(residual_variance(spec, state, subject_index, subject))
    return None


def linking_predictor(state: ParameterState, spec: ModelSpec, subject: Subject,
                      subject_index: int, t: float) -> float:
    """Covariate effects plus the shared longitudinal terms at time ``t``."""
    b = state.b[subject_index]
    value = float(subject.covariates @ state.beta3)
    if spec.linking is Linking.CONSTANT_TRADITIONAL:
        return value + state.g_const[0] * b[0] + state.g_const[1] * b[1]
    value += _g(state, spec, 1, t) * b[0] + _g(state, spec, 2, t) * b[1]
    z = shared_quantity(state, spec, subject, subject_index)
    if z is not None:
        value += _g(state, spec, 3, t) * z
    return float(value)


def _piece_index(edges, t: float) -> int:
    k = int(np.searchsorted(edges, t, side="right")) - 1
    if k < 0 or t >= edges[-1]:
        raise InvalidArgument(f"t={t} is not covered by the piecewise grid ending at {edges[-1]}")
    return k


def log_baseline_hazard(state: ParameterState, spec: ModelSpec, t: float) -> float:
    if spec.baseline is Baseline.WEIBULL:
        rho = state.rho
        if rho == 1.0:
            return 0.0
        if t <= 0:
            raise DomainError(f"Weibull log-hazard undefined at t={t} for rho={rho}")
        return math.log(rho) + (rho - 1.0) * math.log(t)
    if spec.baseline is Baseline.PSPLINE:
        return _g(state, spec, 0, t)
    return math.log(state.lam[_piece_index(spec.piecewise_edges, t)])


def surv_loglik_weibull(subject: Subject, state: ParameterState, spec: ModelSpec,
                        subject_index: int = 0) -> float:
    """Weibull contribution with the linking predictor taken at the event time."""
    T = subject.event_time
    if T <= 0:
        raise DomainError(f"subject {subject.id}: Weibull likelihood needs T > 0")
    rho = state.rho
    varrho = linking_predictor(state, spec, subject, subject_index, T)
    log_h = math.log(rho) + (rho - 1.0) * math.log(T) + varrho
    return subject.event * log_h - float(clamped_exp(varrho)) * T ** rho


def surv_loglik_pspline(subject: Subject, state: ParameterState, spec: ModelSpec,
                        subject_index: int = 0) -> float:
    """Log-spline baseline; the cumulative hazard is a single GK15 panel on [0, T]."""
    T = subject.event_time

    def integrand(u):
        g0 = eval_spline(spec.basis, state.gamma[0], u)
        varrho = np.array([linking_predictor(state, spec, subject, subject_index, ui) for ui in u])
        return clamped_exp(g0 + varrho)

    cum_hazard = gk15_integrate(integrand, 0.0, T)
    event_term = 0.0
    if subject.event:
        event_term = _g(state, spec, 0, T) + linking_predictor(state, spec, subject, subject_index, T)
    return event_term - cum_hazard


def surv_loglik_piecewise(subject: Subject, state: ParameterState, spec: ModelSpec,
                          subject_index: int = 0) -> float:
    T = subject.event_time
    edges = spec.piecewise_edges
    k = _piece_index(edges, T)
    lam = state.lam
    cum_base = lam[k] * (T - edges[k]) + sum(lam[j] * (edges[j + 1] - edges[j]) for j in range(k))
    varrho = linking_predictor(state, spec, subject, subject_index, T)
    event_term = subject.event * (math.log(lam[k]) + varrho) if subject.event else 0.0
    return event_term - cum_base * float(clamped_exp(varrho))


def surv_loglik_subject(subject: Subject, state: ParameterState, spec: ModelSpec,
                        subject_index: int = 0) -> float:
    fn = {
        Baseline.WEIBULL: surv_loglik_weibull,
        Baseline.PSPLINE: surv_loglik_pspline,
        Baseline.PIECEWISE: surv_loglik_piecewise,
    }[spec.baseline]
    return fn(subject, state, spec, subject_index)


def hazard_ratio(state: ParameterState, spec: ModelSpec, t):
    """exp(g3(t)): hazard multiplier per unit of the quantity linked through g3."""
    if 3 not in spec.spline_indices:
        raise InvalidArgument(f"{spec.label} has no g3 term")
    return np.exp(_g(state, spec, 3, t))


class SurvivalDesign:
    """Basis evaluations at event times and quadrature nodes for one dataset."""

    def __init__(self, data: Dataset, spec: ModelSpec):
        self.spec = spec
        self.N = data.N
        self.T = np.asarray(data.T, dtype=float)
        self.delta = np.asarray(data.delta, dtype=float)
        self.X = data.X
        base = spec.baseline
        if base is Baseline.WEIBULL and np.any(self.T <= 0):
            raise DomainError("Weibull likelihood needs every event time > 0")
        self.log_T = np.log(np.where(self.T > 0, self.T, 1.0))
        self.spline = bool(spec.spline_indices)
        if self.spline:
            self.BT = eval_basis(spec.basis, self.T)
        if base is Baseline.PSPLINE:
            self.half_T = 0.5 * self.T
            self.nodes = self.half_T[:, None] * (GK15_NODES + 1.0)
            self.BU = eval_basis(spec.basis, self.nodes)
            self.w_half_T = self.half_T[:, None] * GK15_WEIGHTS
        if base is Baseline.PIECEWISE:
            edges = np.asarray(spec.piecewise_edges)
            if np.any(self.T >= edges[-1]):
                raise InvalidArgument("event times beyond the last finite piecewise edge")
            self.piece = np.searchsorted(edges, self.T, side="right") - 1
            lo, hi = edges[:-1], edges[1:]
            self.exposure = np.clip(self.T[:, None] - lo, 0.0, hi - lo)
            K = len(lo)
            self.events_per_piece = np.bincount(self.piece, weights=self.delta, minlength=K)

    def shared(self, state: ParameterState, sigma2: np.ndarray | None):
        link = self.spec.linking
        if link is Linking.SHARED_B2:
            return state.b[:, 2]
        if link is Linking.SHARED_SIGMA:
            if sigma2 is None:
                sigma2 = residual_variances(self.spec, state, self.X)
            return np.sqrt(sigma2)
        return None

    def varrho(self, state: ParameterState, sigma2=None):
        """Linking predictor at T (length N) and, for PSPLINE, at the nodes (N x 15)."""
        spec = self.spec
        lin = self.X @ state.beta3
        b = state.b
        if spec.linking is Linking.CONSTANT_TRADITIONAL:
            v = lin + state.g_const[0] * b[:, 0] + state.g_const[1] * b[:, 1]
            return v, (v[:, None] if spec.baseline is Baseline.PSPLINE else None)
        z = self.shared(state, sigma2)
        gam = state.gamma
        at_T = lin + (self.BT @ gam[1]) * b[:, 0] + (self.BT @ gam[2]) * b[:, 1]
        if z is not None:
            at_T = at_T + (self.BT @ gam[3]) * z
        at_nodes = None
        if spec.baseline is Baseline.PSPLINE:
            at_nodes = lin[:, None] + (self.BU @ gam[1]) * b[:, :1] + (self.BU @ gam[2]) * b[:, 1:2]
            if z is not None:
                at_nodes = at_nodes + (self.BU @ gam[3]) * z[:, None]
        return at_T, at_nodes

    def cumulative_baseline(self, state: ParameterState):
        """Baseline cumulative hazard at T (WEIBULL / PIECEWISE only)."""
        if self.spec.baseline is Baseline.WEIBULL:
            return np.exp(state.rho * self.log_T) * (self.T > 0)
        return self.exposure @ state.lam

    def loglik(self, state: ParameterState, sigma2=None, clamp: ClampCounter | None = None) -> np.ndarray:
        base = self.spec.baseline
        at_T, at_nodes = self.varrho(state, sigma2)
        if base is Baseline.PSPLINE:
            g0 = state.gamma[0]
            log_h = self.BT @ g0 + at_T
            expo = self.BU @ g0 + at_nodes
            cum = np.sum(self.w_half_T * clamped_exp(expo, clamp), axis=1)
            return self.delta * log_h - cum
        if base is Baseline.WEIBULL:
            rho = state.rho
            log_h = math.log(rho) + (rho - 1.0) * self.log_T + at_T
        else:
            log_h = np.log(state.lam[self.piece]) + at_T
        return np.where(self.delta > 0, log_h, 0.0) - self.cumulative_baseline(state) * clamped_exp(at_T, clamp)
