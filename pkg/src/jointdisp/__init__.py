"""Bayesian joint dispersion models for longitudinal and time-to-event data."""

from .errors import DomainError, FitError, InvalidArgument, NumericError, ParseError
from .model import (
    Baseline, Dataset, Linking, ModelSpec, ParameterState, PriorConfig, SigmaPrior, Subject,
    VarianceModel, enumerate_models, read_spec, validate_spec, write_spec, zero_state,
)
from .posterior import (
    PosteriorChain, SamplerConfig, log_posterior, log_prior, run_chain, sample_prior,
)
from .simulate import simulate_dataset
from .waic import compute_waic

__version__ = "0.1.0"
