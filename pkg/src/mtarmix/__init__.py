"""Bayesian multivariate threshold autoregression with Gaussian-variance-mixture noise."""

from .stats_kernel import DomainError, NoiseFamily
from .model_core import ConfigurationError, ModelSpec, MultivariateSeries
from .gibbs import ChainControl, GibbsSampler, NumericalError, PosteriorDraws, Priors, run_chain

__version__ = "0.1.0"
