"""Conditional functionals on observation grids.

Posterior means, moments, the conditional cumulant-generating function,
cumulants and the MMSE matrix, all computed as finite sums over the
posterior atoms of a :class:`~tweedie_lab.measures.Scenario`.
"""

import csv
import io
import json
import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import optimize
from scipy.special import logsumexp

from .calculus import FdPolicy, jacobian_fd
from .errors import CgfOverflow, ShapeMismatch, SingularJacobian
from .measures import cov, expect, marginal_density, posterior

__all__ = [
    "Grid",
    "GridFunction",
    "YQuadrature",
    "MmseResult",
    "conditional_expectation",
    "conditional_moment",
    "conditional_moments",
    "conditional_cgf",
    "conditional_cumulant",
    "conditional_cumulants",
    "posterior_mean",
    "cumulants_from_moments",
    "tilted_cumulant",
    "posterior_variance",
    "mmse",
    "predictive_quadrature",
    "mixture_quadrature",
    "evaluate",
]

MAX_ORDER = 6


@dataclass(frozen=True)
class Grid:
    """Ordered observation points, shape ``(n, k)``."""

    points: np.ndarray
    spacing: float | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] == 0:
            raise ValueError("grid needs a non-empty (n, k) array of points")
        if len({tuple(p) for p in pts.tolist()}) != pts.shape[0]:
            raise ValueError("grid points must be pairwise distinct")
        if pts.shape[1] == 1 and pts.shape[0] > 1 and np.any(np.diff(pts[:, 0]) <= 0):
            raise ValueError("scalar grids must be strictly increasing")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @classmethod
    def uniform(cls, lo, hi, count):
        pts = np.linspace(lo, hi, int(count))
        spacing = float(pts[1] - pts[0]) if count > 1 else None
        return cls(pts, spacing)

    @classmethod
    def stepped(cls, lo, hi, step):
        count = int(round((hi - lo) / step)) + 1
        return cls.uniform(lo, lo + (count - 1) * step, count)

    def __len__(self):
        return self.points.shape[0]

    def __iter__(self):
        return iter(self.points)

    @property
    def dim(self):
        return self.points.shape[1]

    def check_support(self, model, margin=None):
        bad = [p.tolist() for p in self.points if not model.obs_in_support(p, margin)]
        if bad:
            raise ValueError(f"grid points outside the support of {model.name}: {bad[:3]}")
        return self


@dataclass(frozen=True)
class GridFunction:
    """Values of a function on a :class:`Grid` (one array per point)."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape[0] != len(self.grid):
            raise ValueError("one value per grid point required")
        if not np.all(np.isfinite(vals)):
            raise ValueError("grid function values must be finite")
        object.__setattr__(self, "values", vals)

    def to_json(self):
        return json.dumps({"points": self.grid.points.tolist(), "values": self.values.tolist()})

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        k = self.grid.dim
        flat = self.values.reshape(len(self.grid), -1)
        writer.writerow([f"y{i}" for i in range(k)] + [f"v{j}" for j in range(flat.shape[1])])
        for p, v in zip(self.grid.points, flat):
            writer.writerow([repr(float(a)) for a in p] + [repr(float(b)) for b in v])
        return buf.getvalue()


def evaluate(fn, grid):
    """Evaluate ``fn(y)`` at every grid point."""
    return GridFunction(grid, np.array([fn(p) for p in grid.points]))


def _require_scalar(scenario):
    if scenario.model.dim_param != 1:
        raise ShapeMismatch(f"{scenario.name}: this operation needs a scalar parameter")


def conditional_expectation(scenario, y):
    """``E[U | Y = y]`` with ``U = u_map(X)``; shape ``(m,)``."""
    return np.atleast_1d(expect(posterior(scenario, y), scenario.u_map))


def posterior_mean(scenario, y):
    """``E[X | Y = y]`` regardless of the scenario's U-map."""
    return np.atleast_1d(expect(posterior(scenario, y), lambda xs: xs))


def posterior_variance(scenario, y):
    """``Var(X | Y = y)``, shape ``(d, d)``."""
    ident = lambda xs: xs  # noqa: E731
    return cov(posterior(scenario, y), ident, ident)


def conditional_moments(scenario, y, max_order=MAX_ORDER):
    """``[F_1(y), ..., F_L(y)]`` with ``F_l = E[X^l | Y = y]``."""
    _require_scalar(scenario)
    post = posterior(scenario, y)
    x = post.atoms[:, 0]
    powers = x[None, :] ** np.arange(1, max_order + 1)[:, None]
    return powers @ post.weights


def conditional_moment(scenario, ell, y):
    """``F_ell(y) = E[X^ell | Y = y]`` by direct summation over the posterior."""
    if not 1 <= ell <= MAX_ORDER + 1:
        raise ValueError(f"moment order must be in [1, {MAX_ORDER + 1}]")
    return float(conditional_moments(scenario, y, ell)[ell - 1])


def cumulants_from_moments(moments):
    """Cumulants ``kappa_1..kappa_L`` from raw moments ``mu_1..mu_L``.

    ``kappa_n = mu_n - sum_{m=1}^{n-1} C(n-1, m-1) kappa_m mu_{n-m}``.
    """
    mu = np.concatenate([[1.0], np.asarray(moments, dtype=float)])
    kappa = np.zeros(len(mu))
    for n in range(1, len(mu)):
        kappa[n] = mu[n] - sum(math.comb(n - 1, m - 1) * kappa[m] * mu[n - m] for m in range(1, n))
    return kappa[1:]


def _cumulants_of(x, w, order):
    mean = float(w @ x)
    c = x - mean
    central = (c[None, :] ** np.arange(1, order + 1)[:, None]) @ w
    kappa = cumulants_from_moments(central)
    kappa[0] = mean  # cumulants of order >= 2 are shift invariant
    return kappa


def conditional_cumulants(scenario, y, max_order=MAX_ORDER):
    """``[kappa_1, ..., kappa_L]`` of ``X | Y = y``."""
    _require_scalar(scenario)
    post = posterior(scenario, y)
    return _cumulants_of(post.atoms[:, 0], post.weights, max_order)


def conditional_cumulant(scenario, ell, y):
    """``ell``-th conditional cumulant via the moment-cumulant recurrence."""
    if not 1 <= ell <= MAX_ORDER + 1:
        raise ValueError(f"cumulant order must be in [1, {MAX_ORDER + 1}]")
    return float(conditional_cumulants(scenario, y, ell)[ell - 1])


def conditional_cgf(scenario, t, y):
    """``K(t | y) = log E[exp(t X) | Y = y]`` in log space."""
    _require_scalar(scenario)
    if t == 0:
        return 0.0
    post = posterior(scenario, y)
    x = post.atoms[:, 0]
    with np.errstate(divide="ignore"):
        val = float(logsumexp(t * x + np.log(post.weights)))
    if not np.isfinite(val):
        raise CgfOverflow(f"cumulant-generating function overflows at t={t}")
    return val


def tilted_cumulant(scenario, ell, t, y):
    """``d^ell/dt^ell K(t | y)``: the ``ell``-th cumulant of the exponentially tilted posterior."""
    _require_scalar(scenario)
    post = posterior(scenario, y)
    x = post.atoms[:, 0]
    with np.errstate(divide="ignore"):
        lw = t * x + np.log(post.weights)
    lw = lw - np.max(lw)
    w = np.exp(lw)
    w /= w.sum()
    return float(_cumulants_of(x, w, ell)[ell - 1])


# --------------------------------------------------------------------------
# MMSE
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class YQuadrature:
    """Nodes ``(n, k)`` and Lebesgue weights for integrals over the observation space."""

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=float))


_PANEL_PROBS = np.array(
    [1e-12, 1e-9, 1e-6, 1e-4, 1e-3, 1e-2, 0.05, 0.15, 0.3, 0.5, 0.7, 0.85, 0.95, 0.99, 1 - 1e-3, 1 - 1e-4, 1 - 1e-6, 1 - 1e-9, 1 - 1e-12]
)


def predictive_quadrature(scenario, nodes_per_panel=24):
    """Composite Gauss-Legendre rule whose panels follow predictive quantiles.

    Scalar models only; panel edges are quantiles of the marginal of ``Y``
    computed from the per-atom observation CDFs.
    """
    model = scenario.model
    if model.dim_obs != 1:
        raise ShapeMismatch("predictive_quadrature needs scalar observations")
    measure = scenario.prior_measure
    dists = [model.obs_distribution(x) for x in measure.atoms]
    w = measure.weights

    def cdf(y):
        return float(sum(wi * d.cdf(y) for wi, d in zip(w, dists) if wi > 0))

    def quantile(p):
        lo = min(d.ppf(p) for wi, d in zip(w, dists) if wi > 1e-300)
        hi = max(d.ppf(p) for wi, d in zip(w, dists) if wi > 1e-300)
        if lo == hi:
            return float(lo)
        return optimize.brentq(lambda z: cdf(z) - p, lo, hi, xtol=1e-12, rtol=1e-12)

    edges = np.unique([quantile(p) for p in _PANEL_PROBS])
    t, wt = leggauss(nodes_per_panel)
    pts, wts = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        half = 0.5 * (b - a)
        pts.append(a + half * (t + 1.0))
        wts.append(wt * half)
    pts, wts = np.concatenate(pts), np.concatenate(wts)
    # extreme panels may reach the support boundary, where the mass is negligible
    inside = model.support_predicate()
    keep = np.array([inside(y) for y in pts])
    return YQuadrature(pts[keep], wts[keep])


def _is_singular(mat, cond_limit):
    sv = np.linalg.svd(mat, compute_uv=False)
    # a 1x1 matrix always has condition number 1, so also test the scale
    return sv[-1] <= sv[0] / cond_limit or sv[-1] < 1.0 / cond_limit


def mixture_quadrature(scenario, order=8, max_nodes=20000):
    """Rule over the observation space built from each atom's ``obs_rule``.

    Weights are rescaled so that ``sum(w * f_Y(y) * g(y))`` reproduces the
    mixture ``sum_i pi_i int g(y) f(y|x_i) dy``.
    """
    model = scenario.model
    measure = scenario.prior_measure
    pts, wts = [], []
    for x, pi in zip(measure.atoms, measure.weights):
        ys, ws = model.obs_rule(x, order)
        pts.append(ys)
        wts.append(pi * ws * np.exp([model.log_likelihood(x, y)[()] for y in ys]))
        if sum(len(p) for p in pts) > max_nodes:
            raise ValueError("mixture quadrature too large; pass an explicit y-quadrature")
    ys = np.concatenate(pts)
    inside = model.support_predicate()
    keep = np.array([inside(y) for y in ys])
    ys, w = ys[keep], np.concatenate(wts)[keep]
    fy = np.array([marginal_density(scenario, y) for y in ys])
    return YQuadrature(ys, w / fy)


def default_quadrature(scenario):
    if scenario.model.dim_obs == 1:
        return predictive_quadrature(scenario)
    return mixture_quadrature(scenario)


@dataclass(frozen=True)
class MmseResult:
    """Both sides of the MMSE representation and their difference."""

    posterior_variance: np.ndarray
    jacobian_form: np.ndarray

    @property
    def difference(self):
        return self.posterior_variance - self.jacobian_form


def mmse(scenario, quadrature=None, policy=None, cond_limit=1e12):
    """MMSE matrix computed two ways.

    Returns the expected posterior variance ``E[Var(X|Y)]`` and the
    Jacobian form ``E[(J_Y T(Y))^{-1} J_Y E[X|Y]]``, both as quadratures
    against the marginal density.

    Raises
    ------
    SingularJacobian
        If ``J_y T(y)`` is not square, or at some node its condition
        number exceeds ``cond_limit`` or its smallest singular value falls
        below ``1 / cond_limit``.
    """
    model = scenario.model
    policy = policy or FdPolicy()
    if model.dim_obs != model.dim_param:
        raise SingularJacobian(f"{model.name}: J_y T(y) is {model.dim_obs}x{model.dim_param}, not square")
    quad = quadrature if quadrature is not None else default_quadrature(scenario)
    d = model.dim_param
    lhs = np.zeros((d, d))
    rhs = np.zeros((d, d))
    inside = model.support_predicate()
    for y, wq in zip(quad.points, quad.weights):
        if not inside(y):
            continue
        fy = marginal_density(scenario, y)
        if fy * wq == 0.0:
            continue
        jt = model.stat_jacobian(y)
        if _is_singular(jt, cond_limit):
            raise SingularJacobian(f"J_y T(y) is singular at y={y.tolist()}")
        jac_mean = jacobian_fd(lambda z: posterior_mean(scenario, z), y, policy, support=inside, one_sided=True)
        lhs += wq * fy * posterior_variance(scenario, y)
        rhs += wq * fy * np.linalg.solve(jt, jac_mean)
    return MmseResult(lhs, rhs)
