"""Exception hierarchy.

Every error raised on purpose by the library derives from
:class:`TweedieLabError`, so callers (and the CLI) can separate invalid
input from programming mistakes.
"""


class TweedieLabError(Exception):
    """Base class for all library errors."""


class OutOfSupport(TweedieLabError, ValueError):
    """An observation or natural parameter lies outside its admissible set."""


class NotSymmetric(TweedieLabError, ValueError):
    """``vech`` was asked to half-vectorize an asymmetric matrix."""


class DegeneratePrior(TweedieLabError):
    """Discretizing a prior left no positive mass."""


class AllWeightsVanished(TweedieLabError):
    """Every likelihood underflowed; the observation is far outside the predictive support."""


class CgfOverflow(TweedieLabError, OverflowError):
    """The cumulant-generating function left the representable range."""


class StencilOutOfSupport(TweedieLabError):
    """A finite-difference stencil left the domain of the differentiated function."""


class IntervalOutOfSupport(TweedieLabError):
    """An integration interval is not contained in the observation support."""


class NearSingularStatistic(TweedieLabError):
    """``|T'(y)|`` fell below the singularity margin on a stencil point."""


class SingularJacobian(TweedieLabError):
    """The Jacobian of the sufficient statistic is numerically singular."""


class ShapeMismatch(TweedieLabError):
    """A scenario is incompatible with the requested identity or operation."""


class DegenerateSample(TweedieLabError):
    """A sample has zero spread (or too few points) for density estimation."""


class LowDensity(TweedieLabError):
    """The density estimate is below its reliability floor at the query point."""


class ConfigError(TweedieLabError):
    """A scenario configuration document failed to parse or validate."""
