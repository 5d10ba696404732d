"""Subjects, datasets, the model lattice, priors and parameter states."""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field, fields, replace
from enum import Enum
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidArgument
from .splines import FIRST_COEF_VARIANCE, SplineBasis, build_basis


class VarianceModel(str, Enum):
    COVARIATE_DISPERSION = "COVARIATE_DISPERSION"
    RANDOM_INTERCEPT_DISPERSION = "RANDOM_INTERCEPT_DISPERSION"
    EXCHANGEABLE = "EXCHANGEABLE"
    COMMON = "COMMON"

    @property
    def has_b2(self) -> bool:
        return self in (VarianceModel.COVARIATE_DISPERSION, VarianceModel.RANDOM_INTERCEPT_DISPERSION)


class Linking(str, Enum):
    SHARED_B2 = "SHARED_B2"
    SHARED_SIGMA = "SHARED_SIGMA"
    SLOPES_ONLY = "SLOPES_ONLY"
    CONSTANT_TRADITIONAL = "CONSTANT_TRADITIONAL"


class Baseline(str, Enum):
    WEIBULL = "WEIBULL"
    PSPLINE = "PSPLINE"
    PIECEWISE = "PIECEWISE"


class SigmaPrior(str, Enum):
    LOG_UNIFORM = "LOG_UNIFORM"
    INV_GAMMA = "INV_GAMMA"
    HALF_CAUCHY = "HALF_CAUCHY"


# 20 quarter-year pieces, the last one open-ended
DEFAULT_PIECEWISE_EDGES = tuple(0.25 * k for k in range(20)) + (math.inf,)


@dataclass(frozen=True)
class PriorConfig:
    """Prior hyperparameters. Gamma distributions use shape-rate."""

    beta_variance: float = 100.0
    # scalar c means R = c * I
    wishart_scale: float | tuple = 100.0
    wishart_df: float = 25.0
    gamma_smooth: tuple[float, float] = (0.001, 0.001)
    gamma_lambda: tuple[float, float] = (0.001, 0.001)
    sigma_prior: SigmaPrior = SigmaPrior.LOG_UNIFORM
    log_uniform_bound: float = 100.0
    inv_gamma_eps: float = 0.001
    half_cauchy_upper: float = 100.0
    first_coef_variance: float = FIRST_COEF_VARIANCE
    weibull_rho: tuple[float, float] = (0.01, 0.01)

    def wishart_R(self, p: int) -> np.ndarray:
        if np.ndim(self.wishart_scale) == 0:
            return float(self.wishart_scale) * np.eye(p)
        R = np.array(self.wishart_scale, dtype=float)
        if R.ndim == 1:
            R = np.diag(R)
        if R.shape != (p, p):
            raise InvalidArgument(f"Wishart scale must be {p}x{p}, got {R.shape}")
        return R

    def violations(self, p: int) -> list[str]:
        out = []
        for name in ("beta_variance", "wishart_df", "log_uniform_bound", "inv_gamma_eps",
                     "half_cauchy_upper", "first_coef_variance"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                out.append(f"{name} must be positive and finite")
        for name in ("gamma_smooth", "gamma_lambda", "weibull_rho"):
            pair = getattr(self, name)
            if len(pair) != 2 or not all(math.isfinite(v) and v > 0 for v in pair):
                out.append(f"{name} must be a (shape, rate) pair of positive reals")
        if self.wishart_df <= p - 1:
            out.append(f"wishart_df must exceed p - 1 = {p - 1}")
        try:
            R = self.wishart_R(p)
            if not np.allclose(R, R.T) or np.any(np.linalg.eigvalsh(R) <= 0):
                out.append("Wishart scale must be symmetric positive-definite")
        except InvalidArgument as exc:
            out.append(str(exc))
        return out


@dataclass(frozen=True)
class ModelSpec:
    variance_model: VarianceModel
    linking: Linking
    baseline: Baseline
    t_min: float = 0.0
    t_max: float = 5.0
    num_intervals: int = 20
    piecewise_edges: tuple = DEFAULT_PIECEWISE_EDGES
    priors: PriorConfig = field(default_factory=PriorConfig)

    def __post_init__(self):
        object.__setattr__(self, "variance_model", VarianceModel(self.variance_model))
        object.__setattr__(self, "linking", Linking(self.linking))
        object.__setattr__(self, "baseline", Baseline(self.baseline))
        object.__setattr__(self, "piecewise_edges", tuple(float(a) for a in self.piecewise_edges))

    @property
    def label(self) -> str:
        return f"{self.variance_model.value}+{self.linking.value}+{self.baseline.value}"

    @property
    def p(self) -> int:
        """Dimension of each subject's random-effect vector."""
        return 3 if self.variance_model.has_b2 else 2

    @property
    def has_beta2(self) -> bool:
        return self.variance_model is VarianceModel.COVARIATE_DISPERSION

    @property
    def spline_indices(self) -> tuple[int, ...]:
        """Which of g0..g3 are P-spline functions of time."""
        idx = []
        if self.baseline is Baseline.PSPLINE:
            idx.append(0)
        if self.linking is not Linking.CONSTANT_TRADITIONAL:
            idx += [1, 2]
        if self.linking in (Linking.SHARED_B2, Linking.SHARED_SIGMA):
            idx.append(3)
        return tuple(idx)

    @property
    def num_pieces(self) -> int:
        return len(self.piecewise_edges) - 1

    @cached_property
    def basis(self) -> SplineBasis:
        return build_basis(self.t_min, self.t_max, self.num_intervals)

    def with_priors(self, **kwargs) -> "ModelSpec":
        return replace(self, priors=replace(self.priors, **kwargs))


def validate_spec(spec: ModelSpec) -> list[str]:
    """Return every violation found in ``spec``; an empty list means valid."""
    out = []
    vm, link = spec.variance_model, spec.linking
    if link is Linking.SHARED_B2 and not vm.has_b2:
        out.append(f"SHARED_B2 requires b2i, which {vm.value} does not define")
    if link is Linking.CONSTANT_TRADITIONAL and vm is not VarianceModel.COMMON:
        out.append(f"CONSTANT_TRADITIONAL requires COMMON variance, got {vm.value}")
    try:
        spec.basis
    except InvalidArgument as exc:
        out.append(f"spline configuration: {exc}")
    edges = spec.piecewise_edges
    if len(edges) < 2:
        out.append("piecewise grid needs at least two edges")
    else:
        if edges[0] != 0.0:
            out.append("piecewise grid must start at 0")
        if any(not b > a for a, b in zip(edges, edges[1:])):
            out.append("piecewise grid must be strictly increasing")
        if any(math.isinf(a) for a in edges[:-1]):
            out.append("only the last piecewise edge may be infinite")
    out += spec.priors.violations(spec.p)
    return out


def check_spec(spec: ModelSpec) -> None:
    problems = validate_spec(spec)
    if problems:
        raise InvalidArgument("invalid model spec: " + "; ".join(problems))


def enumerate_models(**spec_kwargs) -> list[ModelSpec]:
    """The 33 feasible cells of the model lattice, in table order."""
    groups = [
        (Linking.SHARED_B2, [VarianceModel.COVARIATE_DISPERSION, VarianceModel.RANDOM_INTERCEPT_DISPERSION]),
        (Linking.SHARED_SIGMA, list(VarianceModel)),
        (Linking.SLOPES_ONLY, list(VarianceModel)),
        (Linking.CONSTANT_TRADITIONAL, [VarianceModel.COMMON]),
    ]
    return [
        ModelSpec(vm, link, base, **spec_kwargs)
        for link, vms in groups
        for vm in vms
        for base in Baseline
    ]


# ---------------------------------------------------------------------------
# spec configuration files

def _fmt(x: float) -> str:
    return repr(float(x))


def write_spec(spec: ModelSpec, path) -> None:
    cfg = configparser.ConfigParser()
    cfg["model"] = {
        "variance_model": spec.variance_model.value,
        "linking": spec.linking.value,
        "baseline": spec.baseline.value,
        "t_min": _fmt(spec.t_min),
        "t_max": _fmt(spec.t_max),
        "num_intervals": str(spec.num_intervals),
        "piecewise_edges": ", ".join(_fmt(a) for a in spec.piecewise_edges),
    }
    pr = spec.priors
    R = pr.wishart_scale
    cfg["priors"] = {
        "beta_variance": _fmt(pr.beta_variance),
        "wishart_scale": _fmt(R) if np.ndim(R) == 0 else "; ".join(
            ", ".join(_fmt(v) for v in np.atleast_1d(row)) for row in np.atleast_2d(R)
        ),
        "wishart_df": _fmt(pr.wishart_df),
        "gamma_smooth": ", ".join(_fmt(v) for v in pr.gamma_smooth),
        "gamma_lambda": ", ".join(_fmt(v) for v in pr.gamma_lambda),
        "sigma_prior": pr.sigma_prior.value,
        "log_uniform_bound": _fmt(pr.log_uniform_bound),
        "inv_gamma_eps": _fmt(pr.inv_gamma_eps),
        "half_cauchy_upper": _fmt(pr.half_cauchy_upper),
        "first_coef_variance": _fmt(pr.first_coef_variance),
        "weibull_rho": ", ".join(_fmt(v) for v in pr.weibull_rho),
    }
    with open(path, "w", newline="\n") as fh:
        cfg.write(fh)


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.replace(";", ",").split(",") if v.strip())


def read_spec(path) -> ModelSpec:
    """Read a spec file written by :func:`write_spec` (or by hand)."""
    cfg = configparser.ConfigParser()
    if not cfg.read(path):
        raise InvalidArgument(f"cannot read spec file {path}")
    try:
        m = cfg["model"]
        kwargs = dict(
            variance_model=VarianceModel(m["variance_model"].strip()),
            linking=Linking(m["linking"].strip()),
            baseline=Baseline(m["baseline"].strip()),
        )
    except (KeyError, ValueError) as exc:
        raise InvalidArgument(f"{path}: bad or missing [model] entry: {exc}") from None
    try:
        for key in ("t_min", "t_max"):
            if key in m:
                kwargs[key] = float(m[key])
        if "num_intervals" in m:
            kwargs["num_intervals"] = int(m["num_intervals"])
        if "piecewise_edges" in m:
            kwargs["piecewise_edges"] = _floats(m["piecewise_edges"])
    except ValueError as exc:
        raise InvalidArgument(f"{path}: bad [model] entry: {exc}") from None
    prior_kwargs = {}
    if cfg.has_section("priors"):
        pr = cfg["priors"]
        try:
            for f in fields(PriorConfig):
                if f.name not in pr:
                    continue
                raw = pr[f.name].strip()
                if f.name == "sigma_prior":
                    prior_kwargs[f.name] = SigmaPrior(raw)
                elif f.name == "wishart_scale":
                    if ";" in raw:
                        prior_kwargs[f.name] = tuple(_floats(row) for row in raw.split(";"))
                    else:
                        vals = _floats(raw)
                        prior_kwargs[f.name] = vals[0] if len(vals) == 1 else vals
                elif f.name in ("gamma_smooth", "gamma_lambda", "weibull_rho"):
                    prior_kwargs[f.name] = _floats(raw)
                else:
                    prior_kwargs[f.name] = float(raw)
        except ValueError as exc:
            raise InvalidArgument(f"{path}: bad [priors] entry {f.name}: {exc}") from None
    spec = ModelSpec(**kwargs, priors=PriorConfig(**prior_kwargs))
    check_spec(spec)
    return spec


# ---------------------------------------------------------------------------
# data

@dataclass(frozen=True, eq=False)
class Subject:
    """One individual's exams, event time and binary baseline covariates."""

    id: str
    times: np.ndarray
    y: np.ndarray
    event_time: float
    event: int
    gender: int
    age: int
    prevoi: int

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float).copy()
        y = np.asarray(self.y, dtype=float).copy()
        if times.ndim != 1 or times.size < 1:
            raise InvalidArgument(f"subject {self.id}: needs at least one exam")
        if y.shape != times.shape:
            raise InvalidArgument(f"subject {self.id}: times and y differ in length")
        if np.any(~np.isfinite(times)) or np.any(~np.isfinite(y)):
            raise InvalidArgument(f"subject {self.id}: non-finite exam data")
        if np.any(times < 0) or np.any(np.diff(times) < 0):
            raise InvalidArgument(f"subject {self.id}: exam times must be nonnegative and ordered")
        if not (math.isfinite(self.event_time) and self.event_time >= 0):
            raise InvalidArgument(f"subject {self.id}: event time must be finite and nonnegative")
        for name in ("event", "gender", "age", "prevoi"):
            if getattr(self, name) not in (0, 1):
                raise InvalidArgument(f"subject {self.id}: {name} must be 0 or 1")
            object.__setattr__(self, name, int(getattr(self, name)))
        times.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "event_time", float(self.event_time))
        object.__setattr__(self, "id", str(self.id))

    @property
    def n(self) -> int:
        return self.times.size

    @property
    def covariates(self) -> np.ndarray:
        """``(gender, age, prevoi)``, shared by the mean, dispersion and hazard parts."""
        return np.array([self.gender, self.age, self.prevoi], dtype=float)

    def __eq__(self, other):
        if not isinstance(other, Subject):
            return NotImplemented
        return (
            self.id == other.id
            and np.array_equal(self.times, other.times)
            and np.array_equal(self.y, other.y)
            and (self.event_time, self.event, self.gender, self.age, self.prevoi)
            == (other.event_time, other.event, other.gender, other.age, other.prevoi)
        )


class Dataset:
    """Immutable collection of subjects plus flattened arrays for vectorized work."""

    def __init__(self, subjects: Iterable[Subject]):
        self.subjects = tuple(subjects)
        if not self.subjects:
            raise InvalidArgument("dataset needs at least one subject")
        ids = [s.id for s in self.subjects]
        if len(set(ids)) != len(ids):
            raise InvalidArgument("subject ids must be unique")
        n = np.array([s.n for s in self.subjects])
        self.obs_subject = np.repeat(np.arange(len(self.subjects)), n)
        self.obs_time = np.concatenate([s.times for s in self.subjects])
        self.obs_y = np.concatenate([s.y for s in self.subjects])
        self.n_obs = n
        self.T = np.array([s.event_time for s in self.subjects])
        self.delta = np.array([s.event for s in self.subjects], dtype=float)
        self.X = np.array([s.covariates for s in self.subjects])
        for arr in (self.obs_subject, self.obs_time, self.obs_y, self.n_obs, self.T, self.delta, self.X):
            arr.setflags(write=False)

    @property
    def N(self) -> int:
        return len(self.subjects)

    @property
    def ids(self) -> list[str]:
        return [s.id for s in self.subjects]

    def __len__(self):
        return self.N

    def __iter__(self):
        return iter(self.subjects)

    def __getitem__(self, i):
        return self.subjects[i]

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return self.subjects == other.subjects

    def subset(self, indices: Sequence[int]) -> "Dataset":
        return Dataset(self.subjects[i] for i in indices)


# ---------------------------------------------------------------------------
# parameters

@dataclass
class ParameterState:
    """One point in parameter space.

    Optional fields are ``None`` when the model spec does not use them.
    ``log_sigma0`` is the log of the baseline standard deviation;
    ``log_sigma`` holds per-subject log standard deviations (EXCHANGEABLE).
    """

    beta1: np.ndarray
    beta3: np.ndarray
    b: np.ndarray
    sigma_inv: np.ndarray
    beta2: np.ndarray | None = None
    log_sigma0: float | None = None
    log_sigma: np.ndarray | None = None
    varpi: float | None = None
    gamma: dict = field(default_factory=dict)
    tau2: dict = field(default_factory=dict)
    lam: np.ndarray | None = None
    rho: float | None = None
    g_const: np.ndarray | None = None

    @property
    def N(self) -> int:
        return self.b.shape[0]

    def copy(self) -> "ParameterState":
        def cp(v):
            return None if v is None else np.array(v, dtype=float, copy=True)

        return ParameterState(
            beta1=cp(self.beta1), beta3=cp(self.beta3), b=cp(self.b), sigma_inv=cp(self.sigma_inv),
            beta2=cp(self.beta2), log_sigma0=self.log_sigma0, log_sigma=cp(self.log_sigma),
            varpi=self.varpi, gamma={k: cp(v) for k, v in self.gamma.items()},
            tau2=dict(self.tau2), lam=cp(self.lam), rho=self.rho, g_const=cp(self.g_const),
        )

    def __eq__(self, other):
        if not isinstance(other, ParameterState):
            return NotImplemented

        def same(a, b):
            if a is None or b is None:
                return a is b
            return np.array_equal(np.asarray(a), np.asarray(b))

        return all(same(getattr(self, f.name), getattr(other, f.name))
                   for f in fields(self) if f.name not in ("gamma", "tau2")) and (
            self.gamma.keys() == other.gamma.keys()
            and all(same(self.gamma[k], other.gamma[k]) for k in self.gamma)
            and self.tau2 == other.tau2
        )


def zero_state(spec: ModelSpec, N: int) -> ParameterState:
    """A state with the right shapes for ``spec``: effects zero, variances one."""
    p = spec.p
    Q = spec.basis.Q
    return ParameterState(
        beta1=np.zeros(5),
        beta3=np.zeros(3),
        b=np.zeros((N, p)),
        sigma_inv=np.eye(p),
        beta2=np.zeros(3) if spec.has_beta2 else None,
        log_sigma0=None if spec.variance_model is VarianceModel.EXCHANGEABLE else 0.0,
        log_sigma=np.zeros(N) if spec.variance_model is VarianceModel.EXCHANGEABLE else None,
        varpi=1.0 if spec.priors.sigma_prior is SigmaPrior.HALF_CAUCHY else None,
        gamma={l: np.zeros(Q) for l in spec.spline_indices},
        tau2={l: 1.0 for l in spec.spline_indices},
        lam=np.ones(spec.num_pieces) if spec.baseline is Baseline.PIECEWISE else None,
        rho=1.0 if spec.baseline is Baseline.WEIBULL else None,
        g_const=np.zeros(2) if spec.linking is Linking.CONSTANT_TRADITIONAL else None,
    )


def check_state(state: ParameterState, spec: ModelSpec) -> None:
    """Raise :class:`InvalidArgument` if ``state`` does not match ``spec``."""
    ref = zero_state(spec, state.N)
    for f in fields(ParameterState):
        a, b = getattr(state, f.name), getattr(ref, f.name)
        if f.name in ("gamma", "tau2"):
            if set(a) != set(b):
                raise InvalidArgument(f"{f.name} keys {sorted(a)} do not match spec {sorted(b)}")
            continue
        if (a is None) != (b is None):
            raise InvalidArgument(f"state field {f.name} is inconsistent with spec {spec.label}")
        if a is not None and np.shape(a) != np.shape(b):
            raise InvalidArgument(f"state field {f.name} has shape {np.shape(a)}, expected {np.shape(b)}")
    for l, g in state.gamma.items():
        if np.shape(g) != (spec.basis.Q,):
            raise InvalidArgument(f"gamma{l} must have length {spec.basis.Q}")


def parameter_names(spec: ModelSpec, N: int) -> list[str]:
    """Stable column names for the draw file."""
    p = spec.p
    names = [f"beta1_{k}" for k in range(5)]
    if spec.has_beta2:
        names += [f"beta2_{k}" for k in range(1, 4)]
    names += [f"beta3_{k}" for k in range(1, 4)]
    names += [f"sigma_inv_{r + 1}_{c + 1}" for r in range(p) for c in range(r, p)]
    if spec.variance_model is not VarianceModel.EXCHANGEABLE:
        names.append("log_sigma0")
    if spec.priors.sigma_prior is SigmaPrior.HALF_CAUCHY:
        names.append("varpi")
    if spec.baseline is Baseline.WEIBULL:
        names.append("rho")
    if spec.baseline is Baseline.PIECEWISE:
        names += [f"lambda_{k + 1}" for k in range(spec.num_pieces)]
    if spec.linking is Linking.CONSTANT_TRADITIONAL:
        names += ["g1", "g2"]
    for l in spec.spline_indices:
        names += [f"gamma{l}_{q + 1}" for q in range(spec.basis.Q)]
        names.append(f"tau2_{l}")
    names += [f"b_{i + 1}_{k + 1}" for i in range(N) for k in range(p)]
    if spec.variance_model is VarianceModel.EXCHANGEABLE:
        names += [f"log_sigma_{i + 1}" for i in range(N)]
    return names


def state_to_vector(state: ParameterState, spec: ModelSpec) -> np.ndarray:
    """Flatten ``state`` in :func:`parameter_names` order."""
    p = spec.p
    parts = [state.beta1]
    if spec.has_beta2:
        parts.append(state.beta2)
    parts.append(state.beta3)
    parts.append(state.sigma_inv[np.triu_indices(p)])
    if spec.variance_model is not VarianceModel.EXCHANGEABLE:
        parts.append([state.log_sigma0])
    if spec.priors.sigma_prior is SigmaPrior.HALF_CAUCHY:
        parts.append([state.varpi])
    if spec.baseline is Baseline.WEIBULL:
        parts.append([state.rho])
    if spec.baseline is Baseline.PIECEWISE:
        parts.append(state.lam)
    if spec.linking is Linking.CONSTANT_TRADITIONAL:
        parts.append(state.g_const)
    for l in spec.spline_indices:
        parts.append(state.gamma[l])
        parts.append([state.tau2[l]])
    parts.append(state.b.reshape(-1))
    if spec.variance_model is VarianceModel.EXCHANGEABLE:
        parts.append(state.log_sigma)
    return np.concatenate([np.asarray(x, dtype=float).reshape(-1) for x in parts])


def state_from_vector(vec, spec: ModelSpec, N: int) -> ParameterState:
    """Inverse of :func:`state_to_vector`."""
    vec = np.asarray(vec, dtype=float)
    expected = len(parameter_names(spec, N))
    if vec.shape != (expected,):
        raise InvalidArgument(f"expected {expected} values for {spec.label} with N={N}, got {vec.shape}")
    pos = 0

    def take(n):
        nonlocal pos
        out = vec[pos:pos + n].copy()
        pos += n
        return out

    p = spec.p
    state = zero_state(spec, N)
    state.beta1 = take(5)
    if spec.has_beta2:
        state.beta2 = take(3)
    state.beta3 = take(3)
    iu = np.triu_indices(p)
    S = np.zeros((p, p))
    S[iu] = take(len(iu[0]))
    state.sigma_inv = S + np.triu(S, 1).T
    if spec.variance_model is not VarianceModel.EXCHANGEABLE:
        state.log_sigma0 = float(take(1)[0])
    if spec.priors.sigma_prior is SigmaPrior.HALF_CAUCHY:
        state.varpi = float(take(1)[0])
    if spec.baseline is Baseline.WEIBULL:
        state.rho = float(take(1)[0])
    if spec.baseline is Baseline.PIECEWISE:
        state.lam = take(spec.num_pieces)
    if spec.linking is Linking.CONSTANT_TRADITIONAL:
        state.g_const = take(2)
    for l in spec.spline_indices:
        state.gamma[l] = take(spec.basis.Q)
        state.tau2[l] = float(take(1)[0])
    state.b = take(N * p).reshape(N, p)
    if spec.variance_model is VarianceModel.EXCHANGEABLE:
        state.log_sigma = take(N)
    return state
