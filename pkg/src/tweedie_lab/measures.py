"""Priors, U-maps, scenarios and Bayes weighting.

Every prior is reduced to a finite :class:`WeightedMeasure` over natural
parameters.  Posteriors reweight the same atoms by the likelihood, in log
space with max-subtraction, so a posterior expectation is a finite sum.
"""

import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import stats
from scipy.special import logsumexp

from .errors import AllWeightsVanished, DegeneratePrior, OutOfSupport, ShapeMismatch

__all__ = [
    "WeightedMeasure",
    "DiscretePrior",
    "ContinuousPrior",
    "UMap",
    "Scenario",
    "point_mass",
    "discretize",
    "continuous_prior",
    "make_u_map",
    "posterior",
    "expect",
    "cov",
    "marginal_density",
    "log_marginal_density",
]

PRIOR_MASS_TOL = 1e-6
TAIL_MASS = 1e-12


@dataclass(frozen=True)
class WeightedMeasure:
    """Finite atomic measure ``sum_i w_i delta_{x_i}`` on parameter space."""

    atoms: np.ndarray
    weights: np.ndarray
    normalized: bool = True

    def __post_init__(self):
        atoms = np.asarray(self.atoms, dtype=float)
        if atoms.ndim == 1:
            atoms = atoms[:, None]
        weights = np.asarray(self.weights, dtype=float).ravel()
        if atoms.shape[0] != weights.shape[0]:
            raise ValueError("atoms and weights differ in length")
        if np.any(weights < 0) or not np.any(weights > 0):
            raise DegeneratePrior("weights must be non-negative with at least one positive entry")
        if self.normalized and abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError(f"normalized measure has total mass {weights.sum()!r}")
        atoms.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def from_unnormalized(cls, atoms, weights):
        weights = np.asarray(weights, dtype=float)
        total = weights.sum()
        if not total > 0 or not np.isfinite(total):
            raise DegeneratePrior("measure has no finite positive mass")
        return cls(atoms, weights / total, normalized=True)

    @property
    def dim(self):
        return self.atoms.shape[1]

    def __len__(self):
        return self.weights.shape[0]


def point_mass(x0):
    """Dirac measure at ``x0``."""
    return WeightedMeasure(np.atleast_1d(np.asarray(x0, dtype=float))[None, :], [1.0])


@dataclass(frozen=True)
class DiscretePrior:
    measure: WeightedMeasure
    description: dict = field(default_factory=dict)

    def sample(self, rng, size):
        idx = rng.choice(len(self.measure), size=size, p=self.measure.weights)
        return self.measure.atoms[idx]


@dataclass(frozen=True)
class ContinuousPrior:
    """A prior with a density on a box, realized by a tensor Gauss-Legendre rule.

    Parameters
    ----------
    logpdf : callable
        Log-density over a stack ``(n, d)`` of parameters.
    box : sequence of (lo, hi)
        Truncation box, one interval per dimension.
    nodes : int
        Nodes per dimension.
    sampler : callable, optional
        ``(rng, size) -> (size, d)`` exact draws, used by the empirical-Bayes
        benchmark.
    """

    logpdf: object
    box: tuple
    nodes: int = 64
    scheme: str = "gauss-legendre"
    sampler: object = None
    description: dict = field(default_factory=dict)

    def sample(self, rng, size):
        if self.sampler is None:
            measure = discretize(self)
            return DiscretePrior(measure).sample(rng, size)
        return np.asarray(self.sampler(rng, size), dtype=float).reshape(size, -1)


def _gauss_legendre_box(box, nodes):
    t, w = leggauss(nodes)
    axes, weights = [], []
    for lo, hi in box:
        half = 0.5 * (hi - lo)
        axes.append(lo + half * (t + 1.0))
        weights.append(w * half)
    grids = np.meshgrid(*axes, indexing="ij")
    wgrids = np.meshgrid(*weights, indexing="ij")
    atoms = np.stack([g.ravel() for g in grids], axis=1)
    wts = np.prod(np.stack([g.ravel() for g in wgrids], axis=1), axis=1)
    return atoms, wts


def discretize(prior):
    """Reduce a prior to a normalized :class:`WeightedMeasure`.

    Discrete priors pass through.  Continuous priors are evaluated at the
    nodes of their quadrature rule; the captured mass must be within
    ``1e-6`` of one, otherwise a warning is issued.
    """
    if isinstance(prior, WeightedMeasure):
        return prior
    if isinstance(prior, DiscretePrior):
        return prior.measure
    if prior.scheme != "gauss-legendre":
        raise ValueError(f"unsupported quadrature scheme {prior.scheme!r}")
    atoms, wts = _gauss_legendre_box(prior.box, prior.nodes)
    logw = np.asarray(prior.logpdf(atoms), dtype=float) + np.log(wts)
    logw[~np.isfinite(logw)] = -np.inf
    if not np.any(np.isfinite(logw)):
        raise DegeneratePrior("prior density vanishes at every quadrature node")
    mass = float(np.exp(logsumexp(logw)))
    if mass == 0.0:
        raise DegeneratePrior("prior mass on the truncation box underflows to zero")
    if not (1.0 - PRIOR_MASS_TOL <= mass <= 1.0 + PRIOR_MASS_TOL):
        warnings.warn(f"prior captures mass {mass:.9f} on its box; widen the box or add nodes", stacklevel=2)
    weights = np.exp(logw - logw.max())
    keep = weights > 0
    return WeightedMeasure.from_unnormalized(atoms[keep], weights[keep])


# --------------------------------------------------------------------------
# named continuous priors
# --------------------------------------------------------------------------


def _frozen(name, params):
    if name == "normal":
        return stats.norm(loc=params.get("loc", 0.0), scale=params.get("scale", 1.0))
    if name == "gamma":
        return stats.gamma(a=params["shape"], scale=1.0 / params.get("rate", 1.0))
    if name == "uniform":
        lo, hi = params["low"], params["high"]
        return stats.uniform(loc=lo, scale=hi - lo)
    if name == "lognormal":
        return stats.lognorm(s=params.get("sigma", 1.0), scale=math.exp(params.get("mu", 0.0)))
    raise KeyError(f"unknown prior density {name!r}")


PRIOR_DENSITIES = ("normal", "gamma", "uniform", "lognormal", "mvnormal")


def continuous_prior(name, params=None, nodes=64, box=None):
    """Continuous prior from the named-density vocabulary.

    Scalar densities: ``normal(loc, scale)``, ``gamma(shape, rate)``,
    ``uniform(low, high)``, ``lognormal(mu, sigma)``.  Vector density:
    ``mvnormal(mean, cov)``.  Without a ``box`` the truncation covers all
    but ``1e-12`` of the mass in each tail.
    """
    params = dict(params or {})
    desc = {"type": "continuous", "density": name, "params": params, "nodes": nodes}
    if name == "mvnormal":
        mean = np.asarray(params["mean"], dtype=float)
        covm = np.atleast_2d(np.asarray(params["cov"], dtype=float))
        dist = stats.multivariate_normal(mean, covm)
        if box is None:
            half = stats.norm.isf(TAIL_MASS) * np.sqrt(np.diag(covm))
            box = [(m - s, m + s) for m, s in zip(mean, half)]

        def sampler(rng, size):
            return rng.multivariate_normal(mean, covm, size=size)

        logpdf = lambda x: np.atleast_1d(dist.logpdf(x))  # noqa: E731
    else:
        dist = _frozen(name, params)
        if box is None:
            box = [(float(dist.ppf(TAIL_MASS)) if dist.ppf(0) == -np.inf else float(dist.ppf(0)), float(dist.isf(TAIL_MASS)))]

        def sampler(rng, size):
            return dist.rvs(size=size, random_state=rng)[:, None]

        logpdf = lambda x: dist.logpdf(x[:, 0])  # noqa: E731
    box = tuple((float(lo), float(hi)) for lo, hi in np.atleast_2d(np.asarray(box, dtype=float)))
    desc["box"] = [list(b) for b in box]
    return ContinuousPrior(logpdf=logpdf, box=box, nodes=int(nodes), sampler=sampler, description=desc)


# --------------------------------------------------------------------------
# U-maps
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class UMap:
    """Deterministic map ``u = g(x)`` applied row-wise to a stack ``(n, d)``."""

    kind: str
    fn: object
    out_dim: object  # callable d -> m
    params: dict = field(default_factory=dict)

    def __call__(self, xs):
        xs = np.asarray(xs, dtype=float)
        single = xs.ndim == 1
        out = self.fn(np.atleast_2d(xs))
        return out[0] if single else out

    def dim(self, d):
        return int(self.out_dim(d))

    def describe(self):
        return {"type": self.kind, **self.params}


def _outer_power(xs, ell):
    out = xs.copy()
    for _ in range(ell):
        # (x x^T)^ell x = |x|^(2 ell) x
        out = out * np.sum(xs * xs, axis=1, keepdims=True)
    return out


U_MAP_KINDS = ("identity", "power", "component", "affine", "outer_power")


def make_u_map(spec):
    """Build a U-map from ``"identity"`` or a dict ``{"type": ..., ...}``.

    ``component`` indices are zero-based.
    """
    if isinstance(spec, str):
        spec = {"type": spec}
    kind = spec.get("type")
    if kind == "identity":
        return UMap("identity", lambda xs: xs, lambda d: d)
    if kind == "power":
        ell = int(spec["ell"])
        return UMap("power", lambda xs: xs**ell, lambda d: d, {"ell": ell})
    if kind == "component":
        i = int(spec["index"])
        return UMap("component", lambda xs: xs[:, i : i + 1], lambda d: 1, {"index": i})
    if kind == "affine":
        a = np.atleast_2d(np.asarray(spec["A"], dtype=float))
        b = np.asarray(spec.get("b", np.zeros(a.shape[0])), dtype=float)
        return UMap("affine", lambda xs: xs @ a.T + b, lambda d: a.shape[0], {"A": a.tolist(), "b": b.tolist()})
    if kind == "outer_power":
        ell = int(spec["ell"])
        return UMap("outer_power", lambda xs: _outer_power(xs, ell), lambda d: d, {"ell": ell})
    raise KeyError(f"unknown u_map type {kind!r}; vocabulary: {U_MAP_KINDS}")


IDENTITY = make_u_map("identity")


# --------------------------------------------------------------------------
# scenario and Bayes weighting
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Scenario:
    """Markov chain ``U <-> X <-> Y``: a model, a prior over ``X`` and ``U = g(X)``."""

    model: object
    prior: object
    u_map: UMap = IDENTITY
    name: str = "scenario"

    @cached_property
    def prior_measure(self):
        measure = discretize(self.prior)
        if measure.dim != self.model.dim_param:
            raise ShapeMismatch(
                f"prior atoms have dimension {measure.dim}, model {self.model.name} needs {self.model.dim_param}"
            )
        if not np.all(self.model.param_in_domain(measure.atoms)):
            raise OutOfSupport(f"prior places mass outside the natural parameter domain of {self.model.name}")
        return measure

    @cached_property
    def _log_prior_minus_partition(self):
        m = self.prior_measure
        with np.errstate(divide="ignore"):
            return np.log(m.weights) - self.model.log_partition(m.atoms)

    @property
    def dim_u(self):
        return self.u_map.dim(self.model.dim_param)

    def log_joint(self, y):
        """``log w_i + log f(y | x_i)`` for every prior atom."""
        model = self.model
        y = model.as_obs(y)
        if not model.obs_in_support(y):
            raise OutOfSupport(f"observation {y.tolist()} is outside the support of {model.name}")
        return self._log_prior_minus_partition + self.prior_measure.atoms @ model.sufficient_stat(y) + model.log_base_measure(y)


def posterior(scenario, y):
    """Posterior measure ``P_{X|Y=y}`` on the prior atoms.

    Raises
    ------
    AllWeightsVanished
        If every atom's likelihood underflows.
    """
    lj = scenario.log_joint(y)
    top = np.max(lj)
    if not np.isfinite(top):
        raise AllWeightsVanished(f"all posterior weights vanish at y={np.atleast_1d(y).tolist()}")
    w = np.exp(lj - top)
    return WeightedMeasure(scenario.prior_measure.atoms, w / w.sum())


def log_marginal_density(scenario, y):
    lj = scenario.log_joint(y)
    val = float(logsumexp(lj))
    if not np.isfinite(val):
        raise AllWeightsVanished(f"marginal density vanishes at y={np.atleast_1d(y).tolist()}")
    return val


def marginal_density(scenario, y):
    """``f_Y(y) = sum_i w_i f(y | x_i)``."""
    return math.exp(log_marginal_density(scenario, y))


def _eval(f, atoms):
    out = np.asarray(f(atoms), dtype=float)
    if out.ndim == 1:
        out = out[:, None]
    return out


def expect(measure, f):
    """``sum_i w_i f(x_i)``; ``f`` maps a stack ``(n, d)`` to ``(n,)`` or ``(n, m)``."""
    vals = np.asarray(f(measure.atoms), dtype=float)
    return np.tensordot(measure.weights, vals, axes=1)


def cov(measure, f, g):
    """Cross-covariance matrix ``E[f g^T] - E[f] E[g]^T`` of shape ``(a, b)``."""
    fv = _eval(f, measure.atoms)
    gv = _eval(g, measure.atoms)
    w = measure.weights
    fc = fv - w @ fv
    gc = gv - w @ gv
    return (fc * w[:, None]).T @ gc
