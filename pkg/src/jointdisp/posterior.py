"""Log-prior, log-posterior and the adaptive Metropolis-within-Gibbs sampler.

Prior densities are expressed on the scale each prior is stated on:
precisions for the smoothing variances, ``log sigma`` for the log-uniform
family, ``1/sigma^2`` for the inverse-gamma family and ``sigma`` for the
half-Cauchy family. Samplers that move on a log scale add the Jacobian
themselves.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import gammaln, multigammaln

from .errors import FitError, InvalidArgument
from .longitudinal import ClampCounter, clamped_exp, long_loglik, residual_variances
from .model import (
    Baseline, Dataset, Linking, ModelSpec, ParameterState, SigmaPrior, VarianceModel,
    check_spec, check_state, parameter_names, state_from_vector, state_to_vector, zero_state,
)
from .splines import log_rw1_prior
from .survival import SurvivalDesign

log = logging.getLogger(__name__)

_LOG_2PI = math.log(2.0 * math.pi)
_TINY = np.finfo(float).tiny


# ---------------------------------------------------------------------------
# prior densities

def _log_normal(x, var):
    x = np.asarray(x, dtype=float)
    return float(np.sum(-0.5 * (_LOG_2PI + math.log(var)) - 0.5 * x * x / var))


def _log_gamma_pdf(x, shape, rate):
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        return -math.inf
    return float(np.sum(shape * math.log(rate) - gammaln(shape) + (shape - 1.0) * np.log(x) - rate * x))


def log_wishart_pdf(W, R, df) -> float:
    """Wishart density parameterized so that E[W] = df * inv(R)."""
    p = W.shape[0]
    sign_w, logdet_w = np.linalg.slogdet(W)
    if sign_w <= 0:
        return -math.inf
    _, logdet_r = np.linalg.slogdet(R)
    return float(
        0.5 * (df - p - 1.0) * logdet_w - 0.5 * np.trace(R @ W)
        + 0.5 * df * logdet_r - 0.5 * df * p * math.log(2.0) - multigammaln(0.5 * df, p)
    )


def _log_sigma_prior(log_sd, spec: ModelSpec, varpi) -> np.ndarray:
    """Elementwise prior log density for log standard deviations, on the stated scale."""
    pr = spec.priors
    x = np.asarray(log_sd, dtype=float)
    fam = pr.sigma_prior
    if fam is SigmaPrior.LOG_UNIFORM:
        A = pr.log_uniform_bound
        return np.where(np.abs(x) <= A, -math.log(2.0 * A), -np.inf)
    if fam is SigmaPrior.INV_GAMMA:
        eps = pr.inv_gamma_eps
        prec = np.exp(-2.0 * x)
        return eps * math.log(eps) - gammaln(eps) + (eps - 1.0) * np.log(prec) - eps * prec
    if varpi is None or not 0.0 < varpi < pr.half_cauchy_upper:
        return np.full(x.shape, -np.inf)
    sd = np.exp(x)
    return math.log(2.0 / math.pi) - math.log(varpi) - np.log1p((sd / varpi) ** 2)


def _log_sigma_jacobian(log_sd, spec: ModelSpec) -> np.ndarray:
    x = np.asarray(log_sd, dtype=float)
    fam = spec.priors.sigma_prior
    if fam is SigmaPrior.LOG_UNIFORM:
        return np.zeros_like(x)
    if fam is SigmaPrior.INV_GAMMA:
        return math.log(2.0) - 2.0 * x
    return x


def _log_b_prior_rows(b, sigma_inv) -> np.ndarray:
    p = sigma_inv.shape[0]
    sign, logdet = np.linalg.slogdet(sigma_inv)
    if sign <= 0:
        return np.full(b.shape[0], -np.inf)
    quad = np.einsum("ij,jk,ik->i", b, sigma_inv, b)
    return -0.5 * p * _LOG_2PI + 0.5 * logdet - 0.5 * quad


def log_prior(state: ParameterState, spec: ModelSpec) -> float:
    """Sum of every prior log density present in ``spec``, random effects included.

    Returns ``-inf`` when a bounded prior's support is violated.
    """
    pr = spec.priors
    p = spec.p
    total = _log_normal(state.beta1, pr.beta_variance) + _log_normal(state.beta3, pr.beta_variance)
    if spec.has_beta2:
        total += _log_normal(state.beta2, pr.beta_variance)
    total += float(np.sum(_log_b_prior_rows(state.b, state.sigma_inv)))
    total += log_wishart_pdf(state.sigma_inv, pr.wishart_R(p), pr.wishart_df)
    if spec.variance_model is VarianceModel.EXCHANGEABLE:
        total += float(np.sum(_log_sigma_prior(state.log_sigma, spec, state.varpi)))
    else:
        total += float(np.sum(_log_sigma_prior(state.log_sigma0, spec, state.varpi)))
    if pr.sigma_prior is SigmaPrior.HALF_CAUCHY:
        if not 0.0 < state.varpi < pr.half_cauchy_upper:
            return -math.inf
        total -= math.log(pr.half_cauchy_upper)
    a, r = pr.gamma_smooth
    for l in spec.spline_indices:
        tau2 = state.tau2[l]
        if not tau2 > 0:
            return -math.inf
        total += log_rw1_prior(state.gamma[l], tau2, pr.first_coef_variance)
        total += _log_gamma_pdf(1.0 / tau2, a, r)
    if spec.baseline is Baseline.WEIBULL:
        total += _log_gamma_pdf(state.rho, *pr.weibull_rho)
    if spec.baseline is Baseline.PIECEWISE:
        total += _log_gamma_pdf(state.lam, *pr.gamma_lambda)
    if spec.linking is Linking.CONSTANT_TRADITIONAL:
        total += _log_normal(state.g_const, pr.beta_variance)
    return float(total) if not math.isnan(total) else -math.inf


def pointwise_loglik(state: ParameterState, data: Dataset, spec: ModelSpec,
                     design: SurvivalDesign | None = None) -> np.ndarray:
    """Per-subject ``log f(D_i | theta)`` (longitudinal plus survival)."""
    if design is None:
        design = SurvivalDesign(data, spec)
    sigma2 = residual_variances(spec, state, data.X)
    return long_loglik(data, state, spec, sigma2) + design.loglik(state, sigma2)


def log_posterior(state: ParameterState, data: Dataset, spec: ModelSpec) -> float:
    """Unnormalized log posterior: prior plus the summed per-subject likelihood."""
    lp = log_prior(state, spec)
    if lp == -math.inf:
        return lp
    return lp + float(np.sum(pointwise_loglik(state, data, spec)))


# ---------------------------------------------------------------------------
# sampler configuration and output

@dataclass(frozen=True)
class SamplerConfig:
    iterations: int = 500_000
    burn_in: int = 250_000
    thin: int = 25
    seed: int = 0
    adaptation_window: int = 100
    # None: 0.234 for vector blocks, 0.44 for scalar blocks
    target_acceptance: float | None = None
    # names of blocks held at their initial values
    fixed_blocks: frozenset = frozenset()

    def __post_init__(self):
        if self.iterations < 1 or self.thin < 1 or self.adaptation_window < 1:
            raise InvalidArgument("iterations, thin and adaptation_window must be positive")
        if not 0 <= self.burn_in < self.iterations:
            raise InvalidArgument("burn_in must satisfy 0 <= burn_in < iterations")
        if self.target_acceptance is not None and not 0 < self.target_acceptance < 1:
            raise InvalidArgument("target_acceptance must lie in (0, 1)")
        object.__setattr__(self, "fixed_blocks", frozenset(self.fixed_blocks))

    @property
    def n_draws(self) -> int:
        return (self.iterations - self.burn_in) // self.thin


@dataclass
class PosteriorChain:
    """Thinned post-burn-in draws with their pointwise log-likelihoods."""

    spec: ModelSpec
    N: int
    draws: np.ndarray
    pointwise_loglik: np.ndarray
    acceptance: dict = field(default_factory=dict)
    clamp_count: int = 0
    chain_id: int = 0
    iterations: np.ndarray | None = None

    @property
    def S(self) -> int:
        return self.draws.shape[0]

    @property
    def names(self) -> list[str]:
        return parameter_names(self.spec, self.N)

    def state(self, s: int) -> ParameterState:
        return state_from_vector(self.draws[s], self.spec, self.N)

    @property
    def states(self) -> list[ParameterState]:
        return [self.state(s) for s in range(self.S)]

    def column(self, name: str) -> np.ndarray:
        return self.draws[:, self.names.index(name)]


# ---------------------------------------------------------------------------
# adaptive random-walk proposals

class _Proposal:
    """Random-walk proposal whose scale and shape adapt during burn-in."""

    def __init__(self, dim: int, init_sd, target: float, window: int):
        self.dim = dim
        self.L = np.diag(np.broadcast_to(np.asarray(init_sd, dtype=float), (dim,)).copy())
        self.log_scale = 0.0
        self.target = target
        self.window = window
        self.learned = False
        self._reset_stats()
        self.accepted = 0
        self.proposed = 0

    def _reset_stats(self):
        self.n = 0
        self.mean = np.zeros(self.dim)
        self.m2 = np.zeros((self.dim, self.dim))

    def propose(self, x, rng):
        return x + math.exp(self.log_scale) * (self.L @ rng.standard_normal(self.dim))

    def record(self, accept_prob, x, k, adapting):
        if not adapting:
            return
        gain = (1.0 + k / self.window) ** -0.6
        self.log_scale += gain * (accept_prob - self.target)
        self.n += 1
        d = x - self.mean
        self.mean += d / self.n
        self.m2 += np.outer(d, x - self.mean)
        if k > 0 and k % self.window == 0 and (k // self.window) & (k // self.window - 1) == 0:
            if self.n > 2 * self.dim + 10:
                cov = self.m2 / (self.n - 1)
                cov += 1e-10 * np.eye(self.dim) * max(np.trace(cov) / self.dim, 1e-12)
                try:
                    self.L = np.linalg.cholesky(cov) * (2.38 / math.sqrt(self.dim))
                    if not self.learned:
                        self.log_scale = 0.0
                        self.learned = True
                except np.linalg.LinAlgError:
                    pass
            self._reset_stats()


class _RowProposal:
    """Independent random-walk proposals for N exchangeable rows sharing one shape."""

    def __init__(self, N: int, dim: int, init_sd, target: float, window: int):
        self.N, self.dim = N, dim
        self.L = np.diag(np.broadcast_to(np.asarray(init_sd, dtype=float), (dim,)).copy())
        self.log_scale = np.zeros(N)
        self.target = target
        self.window = window
        self.learned = False
        self._reset_stats()
        self.accepted = 0
        self.proposed = 0

    def _reset_stats(self):
        self.n = 0
        self.mean = np.zeros((self.N, self.dim))
        self.m2 = np.zeros((self.dim, self.dim))

    def propose(self, x, rng):
        z = rng.standard_normal((self.N, self.dim)) @ self.L.T
        return x + np.exp(self.log_scale)[:, None] * z

    def record(self, accept_prob, x, k, adapting):
        if not adapting:
            return
        gain = (1.0 + k / self.window) ** -0.6
        self.log_scale += gain * (accept_prob - self.target)
        self.n += 1
        d = x - self.mean
        self.mean += d / self.n
        self.m2 += d.T @ (x - self.mean)
        if k > 0 and k % self.window == 0 and (k // self.window) & (k // self.window - 1) == 0:
            if self.n > 10:
                cov = self.m2 / (self.N * (self.n - 1))
                cov += 1e-10 * np.eye(self.dim) * max(np.trace(cov) / self.dim, 1e-12)
                try:
                    self.L = np.linalg.cholesky(cov) * (2.38 / math.sqrt(self.dim))
                    if not self.learned:
                        self.log_scale[:] = 0.0
                        self.learned = True
                except np.linalg.LinAlgError:
                    pass
            self._reset_stats()


def _wishart_draw(rng, df, scale_chol, p):
    """Bartlett draw from Wishart(df, scale) given the Cholesky factor of ``scale``."""
    A = np.zeros((p, p))
    A[np.diag_indices(p)] = np.sqrt(rng.chisquare(df - np.arange(p)))
    il = np.tril_indices(p, -1)
    A[il] = rng.standard_normal(len(il[0]))
    LA = scale_chol @ A
    return LA @ LA.T


def _accept_log_prob(logr):
    return np.minimum(1.0, np.exp(np.minimum(logr, 0.0)))


# ---------------------------------------------------------------------------
# the sampler

class _Sampler:
    def __init__(self, data: Dataset | None, spec: ModelSpec, config: SamplerConfig,
                 rng: np.random.Generator, state: ParameterState):
        self.data = data
        self.spec = spec
        self.config = config
        self.rng = rng
        self.state = state
        self.N = state.N
        self.use_lik = data is not None
        self.clamp = ClampCounter()
        self.design = SurvivalDesign(data, spec) if self.use_lik else None
        self.fixed = config.fixed_blocks
        self._build_proposals()
        self.refresh()

    # -- bookkeeping ---------------------------------------------------------

    def _target(self, dim):
        if self.config.target_acceptance is not None:
            return self.config.target_acceptance
        return 0.44 if dim == 1 else 0.234

    def _build_proposals(self):
        spec, w = self.spec, self.config.adaptation_window
        prop = {}
        prop["beta1"] = _Proposal(5, 0.1, self._target(5), w)
        if spec.has_beta2:
            prop["beta2"] = _Proposal(3, 0.1, self._target(3), w)
        prop["beta3"] = _Proposal(3, 0.1, self._target(3), w)
        prop["b"] = _RowProposal(self.N, spec.p, 0.3, self._target(spec.p), w)
        if spec.variance_model is VarianceModel.EXCHANGEABLE:
            prop["log_sigma"] = _RowProposal(self.N, 1, 0.1, self._target(1), w)
        else:
            prop["log_sigma0"] = _Proposal(1, 0.05, self._target(1), w)
        if spec.priors.sigma_prior is SigmaPrior.HALF_CAUCHY:
            prop["varpi"] = _Proposal(1, 1.0, self._target(1), w)
        if spec.baseline is Baseline.WEIBULL:
            prop["rho"] = _Proposal(1, 0.05, self._target(1), w)
        if spec.linking is Linking.CONSTANT_TRADITIONAL:
            prop["g_const"] = _Proposal(2, 0.05, self._target(2), w)
        Q = spec.basis.Q
        for l in spec.spline_indices:
            prop[f"gamma{l}"] = _Proposal(Q, 0.02, self._target(Q), w)
            prop[f"gamma{l}_level"] = _Proposal(1, 0.1, self._target(1), w)
            prop[f"gamma{l}_scale"] = _Proposal(1, 0.1, self._target(1), w)
        self.prop = prop
        self.gibbs_counts = {}

    def refresh(self):
        s = self.state
        if self.use_lik:
            self.sigma2 = residual_variances(self.spec, s, self.data.X, self.clamp)
            self.ll_long = long_loglik(self.data, s, self.spec, self.sigma2)
            self.ll_surv = self.design.loglik(s, self.sigma2, self.clamp)
        else:
            self.sigma2 = None
            self.ll_long = np.zeros(self.N)
            self.ll_surv = np.zeros(self.N)

    def _long(self, state, sigma2):
        return long_loglik(self.data, state, self.spec, sigma2)

    def _surv(self, state, sigma2):
        return self.design.loglik(state, sigma2, self.clamp)

    def _sigma_in_surv(self):
        return self.spec.linking is Linking.SHARED_SIGMA

    def _mh_global(self, name, current, make_state, prior_fn, k, adapting,
                   long_changes: bool, surv_changes: bool, sigma_changes: bool = False):
        """Metropolis step for a block shared by all subjects."""
        prop = self.prop[name]
        x0 = np.atleast_1d(np.asarray(current, dtype=float))
        x1 = prop.propose(x0, self.rng)
        lp1 = prior_fn(x1)
        new_state = make_state(x1)
        logr = lp1 - prior_fn(x0)
        if self.use_lik and lp1 > -math.inf:
            sigma2 = residual_variances(self.spec, new_state, self.data.X, self.clamp) if sigma_changes else self.sigma2
            ll_long = self._long(new_state, sigma2) if long_changes else self.ll_long
            ll_surv = self._surv(new_state, sigma2) if surv_changes else self.ll_surv
            logr += float(np.sum(ll_long) - np.sum(self.ll_long)) + float(np.sum(ll_surv) - np.sum(self.ll_surv))
        if math.isnan(logr):
            logr = -math.inf
        accepted = math.log(self.rng.uniform()) < logr
        if accepted:
            self.state = new_state
            if self.use_lik:
                self.sigma2, self.ll_long, self.ll_surv = sigma2, ll_long, ll_surv
        if not adapting:
            prop.proposed += 1
            prop.accepted += int(accepted)
        prop.record(float(_accept_log_prob(logr)), x1 if accepted else x0, k, adapting)

    # -- blocks --------------------------------------------------------------

    def update_beta(self, name, k, adapting):
        var = self.spec.priors.beta_variance
        field_name = name
        long_changes = name in ("beta1", "beta2")
        surv_changes = name in ("beta3", "g_const") or (name == "beta2" and self._sigma_in_surv())
        sigma_changes = name == "beta2"
        self._mh_global(
            name, getattr(self.state, field_name),
            lambda x: replace(self.state, **{field_name: x}),
            lambda x: _log_normal(x, var),
            k, adapting, long_changes, surv_changes, sigma_changes,
        )

    def update_log_sigma0(self, k, adapting):
        spec = self.spec

        def prior(x):
            v = float(_log_sigma_prior(x[0], spec, self.state.varpi) + _log_sigma_jacobian(x[0], spec))
            return v

        self._mh_global(
            "log_sigma0", self.state.log_sigma0,
            lambda x: replace(self.state, log_sigma0=float(x[0])),
            prior, k, adapting, True, self._sigma_in_surv(), True,
        )

    def update_log_sigma(self, k, adapting):
        spec, s = self.spec, self.state
        prop = self.prop["log_sigma"]
        x0 = s.log_sigma
        x1 = prop.propose(x0[:, None], self.rng)[:, 0]
        pr0 = _log_sigma_prior(x0, spec, s.varpi) + _log_sigma_jacobian(x0, spec)
        pr1 = _log_sigma_prior(x1, spec, s.varpi) + _log_sigma_jacobian(x1, spec)
        new_state = replace(s, log_sigma=x1)
        logr = pr1 - pr0
        if self.use_lik:
            sigma2 = residual_variances(spec, new_state, self.data.X)
            ll_long = self._long(new_state, sigma2)
            ll_surv = self._surv(new_state, sigma2) if self._sigma_in_surv() else self.ll_surv
            logr = logr + (ll_long - self.ll_long) + (ll_surv - self.ll_surv)
        self._accept_rows(prop, logr, x0[:, None], x1[:, None], k, adapting)
        acc = self._last_accept
        s.log_sigma = np.where(acc, x1, x0)
        if self.use_lik:
            self.sigma2 = np.where(acc, sigma2, self.sigma2)
            self.ll_long = np.where(acc, ll_long, self.ll_long)
            self.ll_surv = np.where(acc, ll_surv, self.ll_surv)

    def _accept_rows(self, prop, logr, x0, x1, k, adapting):
        logr = np.where(np.isnan(logr), -np.inf, logr)
        acc = np.log(self.rng.uniform(size=self.N)) < logr
        self._last_accept = acc
        if not adapting:
            prop.proposed += self.N
            prop.accepted += int(np.count_nonzero(acc))
        prop.record(_accept_log_prob(logr), np.where(acc[:, None], x1, x0), k, adapting)

    def update_b(self, k, adapting):
        spec, s = self.spec, self.state
        prop = self.prop["b"]
        b0 = s.b
        b1 = prop.propose(b0, self.rng)
        logr = _log_b_prior_rows(b1, s.sigma_inv) - _log_b_prior_rows(b0, s.sigma_inv)
        new_state = replace(s, b=b1)
        if self.use_lik:
            sigma_changes = spec.variance_model.has_b2
            sigma2 = residual_variances(spec, new_state, self.data.X, self.clamp) if sigma_changes else self.sigma2
            ll_long = self._long(new_state, sigma2)
            ll_surv = self._surv(new_state, sigma2)
            logr = logr + (ll_long - self.ll_long) + (ll_surv - self.ll_surv)
        self._accept_rows(prop, logr, b0, b1, k, adapting)
        acc = self._last_accept
        s.b = np.where(acc[:, None], b1, b0)
        if self.use_lik:
            self.sigma2 = np.where(acc, sigma2, self.sigma2)
            self.ll_long = np.where(acc, ll_long, self.ll_long)
            self.ll_surv = np.where(acc, ll_surv, self.ll_surv)

    def update_sigma_inv(self):
        pr = self.spec.priors
        p = self.spec.p
        b = self.state.b
        S = pr.wishart_R(p) + b.T @ b
        scale_chol = np.linalg.cholesky(np.linalg.inv(S))
        self.state.sigma_inv = _wishart_draw(self.rng, pr.wishart_df + self.N, scale_chol, p)

    def update_varpi(self, k, adapting):
        spec = self.spec
        upper = spec.priors.half_cauchy_upper
        log_sd = self.state.log_sigma if self.state.log_sigma is not None else np.array([self.state.log_sigma0])

        def prior(x):
            if not 0.0 < x[0] < upper:
                return -math.inf
            return float(np.sum(_log_sigma_prior(log_sd, spec, float(x[0]))))

        self._mh_global(
            "varpi", self.state.varpi, lambda x: replace(self.state, varpi=float(x[0])),
            prior, k, adapting, False, False,
        )

    def update_rho(self, k, adapting):
        shape, rate = self.spec.priors.weibull_rho

        def prior(x):
            # proposal moves log(rho); x holds log(rho)
            return _log_gamma_pdf(math.exp(x[0]), shape, rate) + x[0]

        self._mh_global(
            "rho", math.log(self.state.rho), lambda x: replace(self.state, rho=math.exp(x[0])),
            prior, k, adapting, False, True,
        )

    def update_gamma(self, l, k, adapting):
        pr = self.spec.priors
        tau2 = self.state.tau2[l]

        def make_state(x):
            gamma = dict(self.state.gamma)
            gamma[l] = x
            return replace(self.state, gamma=gamma)

        self._mh_global(
            f"gamma{l}", self.state.gamma[l], make_state,
            lambda x: log_rw1_prior(x, tau2, pr.first_coef_variance),
            k, adapting, False, True,
        )

    def _gamma_move(self, name, l, gamma_new, tau2_new, logr, track, k, adapting):
        """Accept or reject a joint move of one spline and its smoothing variance."""
        new_state = replace(self.state, gamma={**self.state.gamma, l: gamma_new},
                            tau2={**self.state.tau2, l: tau2_new})
        if self.use_lik and logr > -math.inf:
            ll_surv = self._surv(new_state, self.sigma2)
            logr += float(np.sum(ll_surv) - np.sum(self.ll_surv))
        if math.isnan(logr):
            logr = -math.inf
        prop = self.prop[name]
        accepted = math.log(self.rng.uniform()) < logr
        if accepted:
            self.state = new_state
            if self.use_lik:
                self.ll_surv = ll_surv
        if not adapting:
            prop.proposed += 1
            prop.accepted += int(accepted)
        prop.record(float(_accept_log_prob(logr)), np.array([track(self.state)]), k, adapting)

    def update_gamma_level(self, l, k, adapting):
        """Shift every coefficient of one spline by a common amount."""
        name = f"gamma{l}_level"
        g = self.state.gamma[l]
        c = float(self.prop[name].propose(np.zeros(1), self.rng)[0])
        var = self.spec.priors.first_coef_variance
        logr = -0.5 * ((g[0] + c) ** 2 - g[0] ** 2) / var
        self._gamma_move(name, l, g + c, self.state.tau2[l], logr,
                         lambda s: s.gamma[l][0], k, adapting)

    def update_gamma_scale(self, l, k, adapting):
        """Rescale the increments of one spline together with its smoothing SD.

        The increment quadratic form is invariant and the Jacobian cancels the
        normal normalizing constants, so only the precision prior enters.
        """
        name = f"gamma{l}_scale"
        a, r = self.spec.priors.gamma_smooth
        g, tau2 = self.state.gamma[l], self.state.tau2[l]
        u = float(self.prop[name].propose(np.zeros(1), self.rng)[0])
        g_new = g[0] + np.concatenate(([0.0], np.cumsum(np.diff(g) * math.exp(u))))
        tau2_new = tau2 * math.exp(2.0 * u)
        logr = -2.0 * a * u - r * (1.0 / tau2_new - 1.0 / tau2)
        self._gamma_move(name, l, g_new, tau2_new, logr,
                         lambda s: 0.5 * math.log(s.tau2[l]), k, adapting)

    def update_tau2(self, l):
        a, r = self.spec.priors.gamma_smooth
        inc = np.diff(self.state.gamma[l])
        shape = a + 0.5 * inc.size
        rate = r + 0.5 * float(inc @ inc)
        prec = max(self.rng.gamma(shape, 1.0 / rate), _TINY)
        self.state.tau2 = dict(self.state.tau2)
        self.state.tau2[l] = 1.0 / prec

    def update_lambda(self):
        a, r = self.spec.priors.gamma_lambda
        K = self.spec.num_pieces
        if self.use_lik:
            at_T, _ = self.design.varrho(self.state, self.sigma2)
            weight = clamped_exp(at_T)
            rate = r + self.design.exposure.T @ weight
            shape = a + self.design.events_per_piece
        else:
            rate = np.full(K, r)
            shape = np.full(K, a)
        lam = np.maximum(self.rng.gamma(shape, 1.0 / rate), _TINY)
        self.state.lam = lam
        if self.use_lik:
            self.ll_surv = self._surv(self.state, self.sigma2)

    def sweep(self, k, adapting):
        spec, fixed = self.spec, self.fixed
        if "beta1" not in fixed:
            self.update_beta("beta1", k, adapting)
        if spec.has_beta2 and "beta2" not in fixed:
            self.update_beta("beta2", k, adapting)
        if spec.variance_model is VarianceModel.EXCHANGEABLE:
            if "log_sigma" not in fixed:
                self.update_log_sigma(k, adapting)
        elif "log_sigma0" not in fixed:
            self.update_log_sigma0(k, adapting)
        if spec.priors.sigma_prior is SigmaPrior.HALF_CAUCHY and "varpi" not in fixed:
            self.update_varpi(k, adapting)
        if "b" not in fixed:
            self.update_b(k, adapting)
        if "sigma_inv" not in fixed:
            self.update_sigma_inv()
        if "beta3" not in fixed:
            self.update_beta("beta3", k, adapting)
        if spec.linking is Linking.CONSTANT_TRADITIONAL and "g_const" not in fixed:
            self.update_beta("g_const", k, adapting)
        for l in spec.spline_indices:
            if f"gamma{l}" not in fixed:
                self.update_gamma(l, k, adapting)
            if f"tau2_{l}" not in fixed:
                self.update_tau2(l)
            if f"gamma{l}" not in fixed:
                self.update_gamma_level(l, k, adapting)
                if f"tau2_{l}" not in fixed:
                    self.update_gamma_scale(l, k, adapting)
        if spec.baseline is Baseline.WEIBULL and "rho" not in fixed:
            self.update_rho(k, adapting)
        if spec.baseline is Baseline.PIECEWISE and "lambda" not in fixed:
            self.update_lambda()

    def run(self, chain_id=0) -> PosteriorChain:
        cfg = self.config
        S = cfg.n_draws
        spec = self.spec
        n_par = len(parameter_names(spec, self.N))
        draws = np.empty((S, n_par))
        ll = np.empty((S, self.N))
        its = np.empty(S, dtype=np.int64)
        s = 0
        for it in range(1, cfg.iterations + 1):
            adapting = it <= cfg.burn_in
            self.sweep(it, adapting)
            if not adapting and (it - cfg.burn_in) % cfg.thin == 0 and s < S:
                draws[s] = state_to_vector(self.state, spec)
                ll[s] = self.ll_long + self.ll_surv
                its[s] = it
                s += 1
        acceptance = {
            name: (p.accepted / p.proposed if p.proposed else float("nan"))
            for name, p in self.prop.items()
            if name not in self.fixed and name.split("_")[0] not in self.fixed
        }
        return PosteriorChain(spec=spec, N=self.N, draws=draws, pointwise_loglik=ll,
                              acceptance=acceptance, clamp_count=self.clamp.count,
                              chain_id=chain_id, iterations=its)


# ---------------------------------------------------------------------------
# initialization and entry points

def initial_state(data: Dataset, spec: ModelSpec) -> ParameterState:
    """Cheap starting point inside every prior's support."""
    state = zero_state(spec, data.N)
    X = np.column_stack([
        np.ones(data.obs_y.size), data.obs_time, data.X[data.obs_subject],
    ])
    beta1, *_ = np.linalg.lstsq(X, data.obs_y, rcond=None)
    state.beta1 = beta1
    resid = data.obs_y - X @ beta1
    pooled_sd = max(float(np.std(resid)), 1e-3)
    if spec.variance_model is VarianceModel.EXCHANGEABLE:
        n = data.n_obs
        ss = np.bincount(data.obs_subject, weights=resid * resid, minlength=data.N)
        sub_sd = np.sqrt(ss / np.maximum(n, 1))
        sd = np.where(n >= 2, np.clip(sub_sd, 0.1 * pooled_sd, 10 * pooled_sd), pooled_sd)
        state.log_sigma = np.log(sd)
    else:
        state.log_sigma0 = math.log(pooled_sd)
    if state.varpi is not None:
        state.varpi = min(max(pooled_sd, 1e-3), 0.5 * spec.priors.half_cauchy_upper)
    pr = spec.priors
    state.sigma_inv = pr.wishart_df * np.linalg.inv(pr.wishart_R(spec.p))
    if spec.baseline is Baseline.PSPLINE:
        exposure = float(np.sum(data.T))
        events = float(np.sum(data.delta))
        rate = max(events, 0.5) / max(exposure, 1e-8)
        state.gamma[0] = np.full(spec.basis.Q, math.log(rate))
    return state


def _jitter(state: ParameterState, rng: np.random.Generator, scale: float) -> ParameterState:
    out = state.copy()
    out.beta1 = out.beta1 + scale * rng.standard_normal(5)
    out.beta3 = out.beta3 + scale * rng.standard_normal(3)
    if out.log_sigma0 is not None:
        out.log_sigma0 += scale * rng.standard_normal()
    if out.log_sigma is not None:
        out.log_sigma = out.log_sigma + scale * rng.standard_normal(out.log_sigma.size)
    for l in out.gamma:
        out.gamma[l] = out.gamma[l] + scale * rng.standard_normal()
    return out


def run_chain(data: Dataset, spec: ModelSpec, config: SamplerConfig,
              init_state: ParameterState | None = None, chain_id: int = 0,
              rng: np.random.Generator | None = None) -> PosteriorChain:
    """Sample the joint posterior; identical inputs and seed give identical draws."""
    check_spec(spec)
    if data is None or data.N == 0:
        raise FitError("run_chain needs a nonempty dataset; use sample_prior for prior-only runs")
    if rng is None:
        rng = np.random.default_rng(config.seed)
    state = initial_state(data, spec) if init_state is None else init_state.copy()
    check_state(state, spec)
    if state.N != data.N:
        raise InvalidArgument(f"state has {state.N} subjects, data has {data.N}")
    design = SurvivalDesign(data, spec)
    start = state
    for attempt in range(101):
        lp = log_prior(start, spec)
        if math.isfinite(lp):
            lp += float(np.sum(pointwise_loglik(start, data, spec, design)))
        if math.isfinite(lp):
            break
        if attempt == 100:
            raise FitError("could not find a starting state with finite log posterior after 100 attempts")
        start = _jitter(state, rng, 0.1 * (attempt + 1))
    sampler = _Sampler(data, spec, config, rng, start)
    return sampler.run(chain_id)


def sample_prior(spec: ModelSpec, config: SamplerConfig, n_subjects: int = 1,
                 init_state: ParameterState | None = None) -> PosteriorChain:
    """Run the same transition kernels with the likelihood switched off.

    ``n_subjects`` sets how many random-effect rows (and per-subject
    variances) are carried. Used to check the kernels against the analytic
    prior moments.
    """
    check_spec(spec)
    rng = np.random.default_rng(config.seed)
    if init_state is None:
        state = zero_state(spec, n_subjects)
        state.sigma_inv = spec.priors.wishart_df * np.linalg.inv(spec.priors.wishart_R(spec.p))
    else:
        state = init_state.copy()
    check_state(state, spec)
    sampler = _Sampler(None, spec, config, rng, state)
    chain = sampler.run()
    return chain


def chain_seeds(seed: int, chains: int) -> list[np.random.Generator]:
    """Independent generators for ``chains`` parallel chains derived from one seed."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(chains)]
