"""Conditional expectations in exponential families, and numerical checks of
their derivative identities.

Modules by concern:

- :mod:`tweedie_lab.models` exponential-family observation models
- :mod:`tweedie_lab.measures` priors, U-maps, scenarios and posteriors
- :mod:`tweedie_lab.engine` posterior moments, cumulants and the MMSE matrix
- :mod:`tweedie_lab.calculus` finite differences and the D-operator
- :mod:`tweedie_lab.identities` the verification suite
- :mod:`tweedie_lab.empirical_bayes` posterior moments from marginal samples
- :mod:`tweedie_lab.cli` the ``tweedie-lab`` command
"""

__version__ = "0.1.0"

from .calculus import FdPolicy, d_operator, fd_derivative, jacobian_fd  # noqa: E402
from .engine import (  # noqa: E402
    Grid,
    GridFunction,
    conditional_cgf,
    conditional_cumulant,
    conditional_expectation,
    conditional_moment,
    mmse,
)
from .identities import IdentityKind, IdentityReport, verify, verify_all  # noqa: E402
from .measures import (  # noqa: E402
    ContinuousPrior,
    DiscretePrior,
    Scenario,
    WeightedMeasure,
    continuous_prior,
    make_u_map,
    marginal_density,
    posterior,
)
from .models import CATALOG, ExpFamModel, conditional_score, make_model  # noqa: E402

__all__ = [
    "CATALOG",
    "ContinuousPrior",
    "DiscretePrior",
    "ExpFamModel",
    "FdPolicy",
    "Grid",
    "GridFunction",
    "IdentityKind",
    "IdentityReport",
    "Scenario",
    "WeightedMeasure",
    "conditional_cgf",
    "conditional_cumulant",
    "conditional_expectation",
    "conditional_moment",
    "conditional_score",
    "continuous_prior",
    "d_operator",
    "fd_derivative",
    "jacobian_fd",
    "make_model",
    "make_u_map",
    "marginal_density",
    "mmse",
    "posterior",
    "verify",
    "verify_all",
]
