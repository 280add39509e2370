"""Empirical Bayes from marginal samples.

Posterior moments depend on the joint law only through the marginal
density of ``Y``::

    E[X^l | Y = y] = (h(y) / f_Y(y)) * D^(l) (f_Y / h)(y)

so an estimate of ``f_Y`` built from observations alone yields estimates
of every posterior moment.  The Gaussian-kernel estimate below carries
exact derivatives, which are pushed through the D-operator with jets.
"""

import json
import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import hermite_e
from scipy import special

from .calculus import FdPolicy, d_operator, d_operator_jet, jet_exp, jet_log
from .engine import conditional_moment
from .errors import DegenerateSample, LowDensity, NearSingularStatistic, ShapeMismatch
from .measures import discretize, log_marginal_density

__all__ = [
    "DensityEstimate",
    "KernelDensityEstimate",
    "ExactMarginal",
    "kde_fit",
    "silverman_bandwidth",
    "eb_posterior_moment",
    "eb_benchmark",
    "draw_observations",
    "DENSITY_FLOOR",
]

DENSITY_FLOOR = 1e-8
CLAMP_BANDWIDTHS = 8.0
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


class DensityEstimate:
    """Interface: a smooth estimate of ``f_Y``.

    Subclasses provide ``log_density(y)``.  Those with closed-form
    derivatives also provide ``derivatives(y, order)`` and set
    ``analytic = True``.
    """

    analytic = False

    def log_density(self, y):
        raise NotImplementedError

    def density(self, y):
        return math.exp(self.log_density(y))

    def derivatives(self, y, order):
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class KernelDensityEstimate(DensityEstimate):
    """Gaussian-kernel estimate ``f(y) = (1/(n b)) sum_i phi((y - s_i)/b)``.

    The ``r``-th derivative is ``(1/(n b^(r+1))) sum_i (-1)^r He_r(u_i) phi(u_i)``
    with probabilists' Hermite polynomials ``He_r``.  The estimate is
    zero outside ``clamp = [min - 8b, max + 8b]``.
    """

    samples: np.ndarray
    bandwidth: float
    clamp: tuple

    analytic = True

    @property
    def n(self):
        return int(self.samples.size)

    def _u(self, y):
        return (float(y) - self.samples) / self.bandwidth

    def _inside(self, y):
        return self.clamp[0] <= float(y) <= self.clamp[1]

    def log_density(self, y):
        y = float(np.atleast_1d(y)[0])
        if not self._inside(y):
            return -math.inf
        u = self._u(y)
        return float(special.logsumexp(-0.5 * u * u)) - _LOG_SQRT_2PI - math.log(self.n * self.bandwidth)

    def derivatives(self, y, order):
        """``[f(y), f'(y), ..., f^(order)(y)]``; zeros outside the clamp."""
        y = float(np.atleast_1d(y)[0])
        out = np.zeros(order + 1)
        if not self._inside(y):
            return out
        u = self._u(y)
        kern = np.exp(-0.5 * u * u - _LOG_SQRT_2PI)
        for r in range(order + 1):
            coef = np.zeros(r + 1)
            coef[r] = 1.0
            he = hermite_e.hermeval(u, coef)
            out[r] = (-1) ** r * float(he @ kern) / (self.n * self.bandwidth ** (r + 1))
        return out

    def mass(self):
        """``int f`` over the clamp, from the kernel CDFs."""
        lo, hi = self.clamp
        b = self.bandwidth
        return float(np.mean(special.ndtr((hi - self.samples) / b) - special.ndtr((lo - self.samples) / b)))


def silverman_bandwidth(samples):
    """``1.06 * std * n^(-1/5)``."""
    x = np.asarray(samples, dtype=float)
    return 1.06 * float(np.std(x, ddof=1)) * x.size ** (-0.2)


def kde_fit(samples, bandwidth="silverman"):
    """Fit a Gaussian-kernel density estimate.

    Parameters
    ----------
    samples : array_like
        Scalar observations, at least two.
    bandwidth : float or "silverman"

    Raises
    ------
    DegenerateSample
        Fewer than two samples, non-finite values, or zero spread.
    """
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    if x.size < 2:
        raise DegenerateSample(f"need at least 2 samples, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise DegenerateSample("samples must be finite")
    if float(np.std(x)) == 0.0:
        raise DegenerateSample("samples have zero spread")
    if isinstance(bandwidth, str):
        if bandwidth != "silverman":
            raise ValueError(f"unknown bandwidth rule {bandwidth!r}")
        b = silverman_bandwidth(x)
    else:
        b = float(bandwidth)
        if not b > 0:
            raise ValueError("bandwidth must be positive")
    x.setflags(write=False)
    clamp = (float(x[0] - CLAMP_BANDWIDTHS * b), float(x[-1] + CLAMP_BANDWIDTHS * b))
    return KernelDensityEstimate(x, b, clamp)


@dataclass(frozen=True, eq=False)
class ExactMarginal(DensityEstimate):
    """The true marginal of a scenario posing as a density estimate.

    Derivatives are not available in closed form, so the posterior-moment
    formula differentiates it numerically.
    """

    scenario: object

    def log_density(self, y):
        return log_marginal_density(self.scenario, y)


def _check_model(model):
    if not model.is_scalar:
        raise ShapeMismatch(f"{model.name}: empirical Bayes needs a scalar model")


def eb_posterior_moment(est, model, ell, y, policy=None, floor=DENSITY_FLOOR):
    """``E[X^ell | Y = y]`` from a marginal density estimate.

    Evaluates ``(h/f) D^(ell) (f/h)`` with the estimate in place of
    ``f_Y``.  The ratio is rescaled to equal one at ``y``, which cancels
    the ``h/f`` prefactor.

    Raises
    ------
    LowDensity
        If the estimate at ``y`` is below ``floor``.
    NearSingularStatistic
        If ``|T'|`` is below the policy's singularity margin.
    """
    _check_model(model)
    if ell < 1:
        raise ValueError("moment order must be >= 1")
    policy = policy or FdPolicy()
    y = float(np.atleast_1d(y)[0])
    log_f = est.log_density(y)
    if not log_f > math.log(floor):
        raise LowDensity(f"density estimate {math.exp(log_f):.3g} at y={y} is below the floor {floor:g}")
    log_h = model.log_base_measure(model.as_obs(y))
    if est.analytic:
        tprime = model.stat_derivatives(y, ell)
        if abs(tprime[0]) <= policy.sing_margin:
            raise NearSingularStatistic(f"|T'({y:.6g})| = {abs(tprime[0]):.3g}")
        log_ratio = jet_log(est.derivatives(y, ell)) - model.log_base_measure_derivatives(y, ell)
        log_ratio[0] = 0.0
        return d_operator_jet(jet_exp(log_ratio), tprime, ell)
    shift = log_f - log_h

    def ratio(z):
        return math.exp(est.log_density(z) - model.log_base_measure(model.as_obs(z)) - shift)

    return d_operator(ratio, model, ell, y, policy)


def draw_observations(scenario, n, rng):
    """Hierarchical draws: ``x`` from the prior, then ``y | x``."""
    xs = scenario.prior.sample(rng, n)
    return np.asarray(scenario.model.sample(xs, rng, n), dtype=float).reshape(n, -1)


def _mae(est, scenario, ell, grid, oracle, policy):
    errs = [abs(eb_posterior_moment(est, scenario.model, ell, y, policy) - o) for y, o in zip(grid.points, oracle)]
    return float(np.mean(errs))


def eb_benchmark(scenario, n, grid, ell_max=1, seed=0, bandwidth="silverman", policy=None):
    """Compare empirical-Bayes moments with the exact posterior moments.

    Returns
    -------
    dict
        ``{scenario, n, seed, bandwidth, per_ell: [{ell, mae_kde, mae_exact_marginal}]}``.
    """
    _check_model(scenario.model)
    discretize(scenario.prior)  # fail early on a bad prior
    rng = np.random.default_rng(seed)
    ys = draw_observations(scenario, int(n), rng)[:, 0]
    est = kde_fit(ys, bandwidth)
    exact = ExactMarginal(scenario)
    per_ell = []
    for ell in range(1, int(ell_max) + 1):
        oracle = [conditional_moment(scenario, ell, y) for y in grid.points]
        per_ell.append(
            {
                "ell": ell,
                "mae_kde": _mae(est, scenario, ell, grid, oracle, policy),
                "mae_exact_marginal": _mae(exact, scenario, ell, grid, oracle, policy),
            }
        )
    return {"scenario": scenario.name, "n": int(n), "seed": int(seed), "bandwidth": est.bandwidth, "per_ell": per_ell}


def benchmark_json(report):
    return json.dumps(report, indent=2)
