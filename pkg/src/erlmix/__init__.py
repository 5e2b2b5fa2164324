"""Bayesian nonparametric survival analysis with Erlang mixtures.

The survival density is a weighted combination of integer-shape gamma
(Erlang) basis densities sharing one scale parameter, with weights formed by
discretizing a random distribution function carrying a Dirichlet process
prior. One-group inference uses a marginal Pólya-urn Gibbs sampler; the
two-group extension couples the groups through a common-weights dependent DP
with a bivariate lognormal base measure.
"""

from erlmix._backend import BACKEND
from erlmix.errors import ConfigError, DataError, DomainError, NumericError

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "ConfigError",
    "DataError",
    "DomainError",
    "NumericError",
    "__version__",
]
