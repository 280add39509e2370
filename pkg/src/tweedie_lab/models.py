"""Exponential-family observation models.

A model is a density ``h(y) exp(<x, T(y)> - phi(x))`` on an open set of
observations.  Every model here fixes one concrete ``(x, T)`` convention,
documented on the class, so that numeric examples are reproducible.

Model methods that take natural parameters accept a stack ``(..., d)`` and
broadcast; observation arguments are single points of shape ``(k,)``
(scalars are accepted for one-dimensional observations).
"""

import math
from abc import ABC, abstractmethod

import numpy as np
from numpy.polynomial.hermite import hermgauss
from numpy.polynomial.laguerre import laggauss
from scipy import special, stats

from .calculus import jet_product
from .errors import OutOfSupport
from .linalg import duplication_matrix, unvec, unvech, vec, vech

__all__ = [
    "ExpFamModel",
    "GaussianKnownVariance",
    "GaussianKnownCovariance",
    "GaussianUnknownMeanCov",
    "ExponentialRate",
    "GaussianKnownMean",
    "LogNormalKnownVariance",
    "Wishart",
    "GammaShapeRate",
    "CATALOG",
    "make_model",
    "eval_log_likelihood",
    "conditional_score",
]

LOG_2PI = math.log(2.0 * math.pi)
DEFAULT_SUPPORT_MARGIN = 1e-8


class ExpFamModel(ABC):
    """Base class for an exponential-family observation law.

    Subclasses set ``name``, ``dim_param`` (``d``), ``dim_obs`` (``k``) and
    ``is_linear_statistic``, and implement the abstract methods.  Models
    are immutable after construction.
    """

    name = "ExpFamModel"
    is_linear_statistic = False
    # highest order available from stat_derivative / log_base_measure_derivatives
    max_stat_order = 0

    def __init__(self, dim_param, dim_obs, support_margin=DEFAULT_SUPPORT_MARGIN):
        self.dim_param = int(dim_param)
        self.dim_obs = int(dim_obs)
        self.support_margin = float(support_margin)

    # -- observation side --------------------------------------------------

    @abstractmethod
    def log_base_measure(self, y):
        """``log h(y)``."""

    @abstractmethod
    def grad_log_base_measure(self, y):
        """``grad_y log h(y)`` with shape ``(k,)``."""

    @abstractmethod
    def sufficient_stat(self, y):
        """``T(y)`` with shape ``(d,)``."""

    @abstractmethod
    def stat_jacobian(self, y):
        """``J_y T(y)`` with shape ``(k, d)`` (column ``j`` is ``grad T_j``)."""

    @abstractmethod
    def obs_in_support(self, y, margin=None):
        """True if ``y`` lies inside the support by at least ``margin``."""

    # -- parameter side ----------------------------------------------------

    @abstractmethod
    def log_partition(self, x):
        """``phi(x)`` for a stack of natural parameters ``(..., d)``."""

    @abstractmethod
    def param_in_domain(self, x):
        """Boolean mask over a stack of natural parameters."""

    @abstractmethod
    def obs_rule(self, x, order=48):
        """Quadrature rule adapted to ``f(.|x)``.

        Returns ``(ys, ws)`` with ``ys`` of shape ``(n, k)`` such that
        ``sum(ws * g(ys))`` approximates ``int g(y) dy`` for integrands of
        the form ``f(y|x) * smooth(y)``.
        """

    @abstractmethod
    def sample(self, x, rng, size):
        """Draw ``size`` observations from ``f(.|x)``; shape ``(size, k)``."""

    @abstractmethod
    def to_natural(self, **classical):
        """Map classical parameters (mean, rate, ...) to the natural parameter."""

    # -- scalar-statistic extras -------------------------------------------

    @property
    def is_scalar(self):
        return self.dim_param == 1 and self.dim_obs == 1 and self.max_stat_order > 0

    def stat_derivative(self, y, order):
        raise NotImplementedError(f"{self.name} has no scalar statistic derivatives")

    def stat_derivatives(self, y, order):
        """``[T'(y), T''(y), ..., T^(order)(y)]``."""
        return np.array([self.stat_derivative(y, r) for r in range(1, order + 1)])

    def log_base_measure_derivatives(self, y, order):
        """``[log h(y), (log h)'(y), ..., (log h)^(order)(y)]`` (scalar models)."""
        raise NotImplementedError(f"{self.name} has no scalar base-measure derivatives")

    def obs_distribution(self, x):
        """Frozen ``scipy.stats`` distribution of ``Y | X = x`` (scalar models)."""
        raise NotImplementedError

    # -- shared machinery --------------------------------------------------

    def as_obs(self, y):
        y = np.atleast_1d(np.asarray(y, dtype=float))
        if y.shape != (self.dim_obs,):
            raise ValueError(f"{self.name} expects observations of shape ({self.dim_obs},), got {y.shape}")
        return y

    def as_params(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 0:
            x = x.reshape(1)
        if x.shape[-1] != self.dim_param:
            raise ValueError(f"{self.name} expects parameters with last axis {self.dim_param}, got {x.shape}")
        return x

    def support_predicate(self, margin=None):
        margin = self.support_margin if margin is None else margin
        return lambda z: self.obs_in_support(z, margin)

    def log_likelihood(self, x, y):
        """``log f(y | x)`` for a stack of parameters and one observation."""
        x = self.as_params(x)
        y = self.as_obs(y)
        return self.log_base_measure(y) + x @ self.sufficient_stat(y) - self.log_partition(x)

    def describe(self):
        return {"name": self.name, "dim_param": self.dim_param, "dim_obs": self.dim_obs, "params": self.params()}

    def params(self):
        return {}

    def __repr__(self):
        args = ", ".join(f"{k}={v!r}" for k, v in self.params().items())
        return f"{type(self).__name__}({args})"


def _interval_check(y, lo, hi, margin):
    y = float(np.atleast_1d(y)[0])
    return (lo + margin) < y < (hi - margin)


def _check_point(model, x, y):
    x = model.as_params(x)
    y = model.as_obs(y)
    if not model.obs_in_support(y):
        raise OutOfSupport(f"observation {y.tolist()} is outside the support of {model.name}")
    if not np.all(model.param_in_domain(x)):
        raise OutOfSupport(f"natural parameter {x.tolist()} is outside the domain of {model.name}")
    return x, y


def eval_log_likelihood(model, x, y):
    """``log h(y) + <x, T(y)> - phi(x)`` at a single point.

    Raises
    ------
    OutOfSupport
        If ``y`` is not interior to the support or ``x`` is not admissible.
    """
    x, y = _check_point(model, x, y)
    return float(model.log_likelihood(x, y))


def conditional_score(model, x, y):
    """``grad_y log f(y|x) = grad log h(y) + J_y T(y) x``.

    ``x`` may be a stack ``(n, d)``; the result then has shape ``(n, k)``.
    """
    x, y = _check_point(model, x, y)
    jac = model.stat_jacobian(y)
    return model.grad_log_base_measure(y) + x @ jac.T


def _hermite_rule(order):
    t, w = hermgauss(order)
    # weights for plain dt integration of smooth * exp(-t^2)
    return t, w * np.exp(t * t)


# --------------------------------------------------------------------------
# scalar models
# --------------------------------------------------------------------------


class GaussianKnownVariance(ExpFamModel):
    """``Y | m ~ N(m, variance)`` with natural parameter ``x = m / variance``.

    ``T(y) = y``, ``h(y) = N(y; 0, variance)``, ``phi(x) = variance x^2 / 2``.
    """

    name = "GaussianKnownVariance"
    is_linear_statistic = True
    max_stat_order = 64

    def __init__(self, variance=1.0, **kw):
        super().__init__(1, 1, **kw)
        if not variance > 0:
            raise ValueError("variance must be positive")
        self.variance = float(variance)

    def params(self):
        return {"variance": self.variance}

    def log_base_measure(self, y):
        y = float(np.atleast_1d(y)[0])
        return -0.5 * (LOG_2PI + math.log(self.variance)) - 0.5 * y * y / self.variance

    def grad_log_base_measure(self, y):
        return np.array([-float(np.atleast_1d(y)[0]) / self.variance])

    def log_base_measure_derivatives(self, y, order):
        y = float(np.atleast_1d(y)[0])
        out = np.zeros(order + 1)
        out[0] = self.log_base_measure(y)
        if order >= 1:
            out[1] = -y / self.variance
        if order >= 2:
            out[2] = -1.0 / self.variance
        return out

    def sufficient_stat(self, y):
        return np.atleast_1d(np.asarray(y, dtype=float)).copy()

    def stat_jacobian(self, y):
        return np.ones((1, 1))

    def stat_derivative(self, y, order):
        return 1.0 if order == 1 else 0.0

    def obs_in_support(self, y, margin=None):
        return bool(np.all(np.isfinite(np.atleast_1d(y))))

    def log_partition(self, x):
        x = self.as_params(x)
        return 0.5 * self.variance * x[..., 0] ** 2

    def param_in_domain(self, x):
        return np.isfinite(self.as_params(x)[..., 0])

    def obs_rule(self, x, order=48):
        mean = self.variance * float(self.as_params(x)[0])
        t, w = _hermite_rule(order)
        scale = math.sqrt(2.0 * self.variance)
        return (mean + scale * t)[:, None], w * scale

    def obs_distribution(self, x):
        return stats.norm(loc=self.variance * float(self.as_params(x)[0]), scale=math.sqrt(self.variance))

    def sample(self, x, rng, size):
        x = self.as_params(x)
        mean = self.variance * x[..., 0]
        return rng.normal(mean, math.sqrt(self.variance), size=size)[..., None]

    def to_natural(self, mean):
        return np.array([float(mean) / self.variance])


class ExponentialRate(ExpFamModel):
    """``Y | b ~ Exponential(rate b)`` with ``x = b > 0``.

    ``T(y) = -y``, ``h(y) = 1`` on ``y > 0``, ``phi(x) = -log x``.
    """

    name = "ExponentialRate"
    is_linear_statistic = True
    max_stat_order = 64

    def __init__(self, **kw):
        super().__init__(1, 1, **kw)

    def log_base_measure(self, y):
        return 0.0

    def grad_log_base_measure(self, y):
        return np.zeros(1)

    def log_base_measure_derivatives(self, y, order):
        return np.zeros(order + 1)

    def sufficient_stat(self, y):
        return -np.atleast_1d(np.asarray(y, dtype=float))

    def stat_jacobian(self, y):
        return -np.ones((1, 1))

    def stat_derivative(self, y, order):
        return -1.0 if order == 1 else 0.0

    def obs_in_support(self, y, margin=None):
        margin = self.support_margin if margin is None else margin
        return _interval_check(y, 0.0, math.inf, margin)

    def log_partition(self, x):
        x = self.as_params(x)[..., 0]
        with np.errstate(divide="ignore", invalid="ignore"):
            return -np.log(x)

    def param_in_domain(self, x):
        return self.as_params(x)[..., 0] > 0

    def obs_rule(self, x, order=48):
        rate = float(self.as_params(x)[0])
        t, w = laggauss(order)
        return (t / rate)[:, None], w * np.exp(t) / rate

    def obs_distribution(self, x):
        return stats.expon(scale=1.0 / float(self.as_params(x)[0]))

    def sample(self, x, rng, size):
        rate = self.as_params(x)[..., 0]
        return rng.exponential(1.0 / rate, size=size)[..., None]

    def to_natural(self, rate):
        return np.array([float(rate)])


class GaussianKnownMean(ExpFamModel):
    """``Y | lam ~ N(mean, 1/lam)`` with natural parameter the precision ``lam``.

    ``T(y) = -(y - mean)^2 / 2`` (so ``T'`` vanishes at ``y = mean``),
    ``h(y) = (2 pi)^(-1/2)``, ``phi(x) = -log(x) / 2``.
    """

    name = "GaussianKnownMean"
    max_stat_order = 64

    def __init__(self, mean=0.0, **kw):
        super().__init__(1, 1, **kw)
        self.mean = float(mean)

    def params(self):
        return {"mean": self.mean}

    def log_base_measure(self, y):
        return -0.5 * LOG_2PI

    def grad_log_base_measure(self, y):
        return np.zeros(1)

    def log_base_measure_derivatives(self, y, order):
        out = np.zeros(order + 1)
        out[0] = -0.5 * LOG_2PI
        return out

    def sufficient_stat(self, y):
        d = np.atleast_1d(np.asarray(y, dtype=float)) - self.mean
        return -0.5 * d * d

    def stat_jacobian(self, y):
        return np.array([[-(float(np.atleast_1d(y)[0]) - self.mean)]])

    def stat_derivative(self, y, order):
        if order == 1:
            return -(float(np.atleast_1d(y)[0]) - self.mean)
        return -1.0 if order == 2 else 0.0

    def obs_in_support(self, y, margin=None):
        return bool(np.all(np.isfinite(np.atleast_1d(y))))

    def log_partition(self, x):
        x = self.as_params(x)[..., 0]
        with np.errstate(divide="ignore", invalid="ignore"):
            return -0.5 * np.log(x)

    def param_in_domain(self, x):
        return self.as_params(x)[..., 0] > 0

    def obs_rule(self, x, order=48):
        prec = float(self.as_params(x)[0])
        t, w = _hermite_rule(order)
        scale = math.sqrt(2.0 / prec)
        return (self.mean + scale * t)[:, None], w * scale

    def obs_distribution(self, x):
        return stats.norm(loc=self.mean, scale=1.0 / math.sqrt(float(self.as_params(x)[0])))

    def sample(self, x, rng, size):
        prec = self.as_params(x)[..., 0]
        return rng.normal(self.mean, 1.0 / np.sqrt(prec), size=size)[..., None]

    def to_natural(self, precision):
        return np.array([float(precision)])


class LogNormalKnownVariance(ExpFamModel):
    """``log Y | mu ~ N(mu, variance)`` with ``x = mu / variance``.

    ``T(y) = log y`` on ``y > 0`` (a non-linear statistic without zeros of
    ``T'``), ``h(y) = exp(-(log y)^2 / (2 variance)) / (y sqrt(2 pi variance))``,
    ``phi(x) = variance x^2 / 2``.
    """

    name = "LogNormalKnownVariance"
    max_stat_order = 64

    def __init__(self, variance=1.0, **kw):
        super().__init__(1, 1, **kw)
        if not variance > 0:
            raise ValueError("variance must be positive")
        self.variance = float(variance)

    def params(self):
        return {"variance": self.variance}

    def log_base_measure(self, y):
        y = float(np.atleast_1d(y)[0])
        ly = math.log(y)
        return -ly - 0.5 * (LOG_2PI + math.log(self.variance)) - 0.5 * ly * ly / self.variance

    def grad_log_base_measure(self, y):
        y = float(np.atleast_1d(y)[0])
        return np.array([-1.0 / y - math.log(y) / (self.variance * y)])

    def _log_jet(self, y, order):
        out = np.zeros(order + 1)
        out[0] = math.log(y)
        for r in range(1, order + 1):
            out[r] = self.stat_derivative(y, r)
        return out

    def log_base_measure_derivatives(self, y, order):
        y = float(np.atleast_1d(y)[0])
        u = self._log_jet(y, order)
        out = -u - jet_product(u, u) / (2.0 * self.variance)
        out[0] -= 0.5 * (LOG_2PI + math.log(self.variance))
        return out

    def sufficient_stat(self, y):
        return np.log(np.atleast_1d(np.asarray(y, dtype=float)))

    def stat_jacobian(self, y):
        return np.array([[1.0 / float(np.atleast_1d(y)[0])]])

    def stat_derivative(self, y, order):
        y = float(np.atleast_1d(y)[0])
        return (-1.0) ** (order - 1) * math.factorial(order - 1) / y**order

    def obs_in_support(self, y, margin=None):
        margin = self.support_margin if margin is None else margin
        return _interval_check(y, 0.0, math.inf, margin)

    def log_partition(self, x):
        x = self.as_params(x)
        return 0.5 * self.variance * x[..., 0] ** 2

    def param_in_domain(self, x):
        return np.isfinite(self.as_params(x)[..., 0])

    def obs_rule(self, x, order=48):
        mu = self.variance * float(self.as_params(x)[0])
        t, w = _hermite_rule(order)
        scale = math.sqrt(2.0 * self.variance)
        y = np.exp(mu + scale * t)
        return y[:, None], w * scale * y

    def obs_distribution(self, x):
        mu = self.variance * float(self.as_params(x)[0])
        return stats.lognorm(s=math.sqrt(self.variance), scale=math.exp(mu))

    def sample(self, x, rng, size):
        mu = self.variance * self.as_params(x)[..., 0]
        return np.exp(rng.normal(mu, math.sqrt(self.variance), size=size))[..., None]

    def to_natural(self, mu):
        return np.array([float(mu) / self.variance])


# --------------------------------------------------------------------------
# vector and matrix-variate models
# --------------------------------------------------------------------------


def _tensor_hermite(dim, order):
    t, w = _hermite_rule(order)
    grids = np.meshgrid(*([t] * dim), indexing="ij")
    wgrids = np.meshgrid(*([w] * dim), indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=1)
    weights = np.prod(np.stack([g.ravel() for g in wgrids], axis=1), axis=1)
    return nodes, weights


class GaussianKnownCovariance(ExpFamModel):
    """``Y | m ~ N(m, cov)`` in ``R^k`` with ``x = cov^{-1} m`` and ``T(y) = y``."""

    name = "GaussianKnownCovariance"
    is_linear_statistic = True

    def __init__(self, cov, **kw):
        cov = np.atleast_2d(np.asarray(cov, dtype=float))
        k = cov.shape[0]
        super().__init__(k, k, **kw)
        self.cov = cov
        self.chol = np.linalg.cholesky(cov)
        self.precision = np.linalg.inv(cov)
        self._logdet = 2.0 * float(np.sum(np.log(np.diag(self.chol))))
        if k == 1:
            self.max_stat_order = 64

    def params(self):
        return {"cov": self.cov.tolist()}

    def log_base_measure(self, y):
        y = self.as_obs(y)
        return -0.5 * (self.dim_obs * LOG_2PI + self._logdet) - 0.5 * float(y @ self.precision @ y)

    def grad_log_base_measure(self, y):
        return -self.precision @ self.as_obs(y)

    def log_base_measure_derivatives(self, y, order):
        if self.dim_obs != 1:
            return super().log_base_measure_derivatives(y, order)
        var = float(self.cov[0, 0])
        return GaussianKnownVariance(var).log_base_measure_derivatives(y, order)

    def sufficient_stat(self, y):
        return self.as_obs(y).copy()

    def stat_jacobian(self, y):
        return np.eye(self.dim_obs)

    def stat_derivative(self, y, order):
        if self.dim_obs != 1:
            return super().stat_derivative(y, order)
        return 1.0 if order == 1 else 0.0

    def obs_in_support(self, y, margin=None):
        return bool(np.all(np.isfinite(np.atleast_1d(y))))

    def log_partition(self, x):
        x = self.as_params(x)
        return 0.5 * np.einsum("...i,ij,...j->...", x, self.cov, x)

    def param_in_domain(self, x):
        return np.all(np.isfinite(self.as_params(x)), axis=-1)

    def obs_rule(self, x, order=24):
        mean = self.cov @ self.as_params(x)
        t, w = _tensor_hermite(self.dim_obs, order)
        ys = mean + math.sqrt(2.0) * t @ self.chol.T
        return ys, w * (2.0 ** (self.dim_obs / 2)) * float(np.prod(np.diag(self.chol)))

    def sample(self, x, rng, size):
        mean = self.cov @ self.as_params(x)
        return rng.multivariate_normal(mean, self.cov, size=size)

    def to_natural(self, mean):
        return self.precision @ np.atleast_1d(np.asarray(mean, dtype=float))


class GaussianUnknownMeanCov(ExpFamModel):
    """``Y ~ N(m, S)`` in ``R^k`` with both ``m`` and ``S`` random.

    ``x = [S^{-1} m ; vec(-S^{-1}/2)]`` (``d = k + k^2``),
    ``T(y) = [y ; vec(y y^T)]``, ``h(y) = (2 pi)^{-k/2}``,
    ``phi(x) = (m^T S^{-1} m + log|S|) / 2``.  Only the symmetric part of the
    matrix block of ``x`` matters.
    """

    name = "GaussianUnknownMeanCov"

    def __init__(self, k=2, **kw):
        k = int(k)
        super().__init__(k + k * k, k, **kw)
        self.k = k

    def params(self):
        return {"k": self.k}

    def _split(self, x):
        x = self.as_params(x)
        k = self.k
        lin = x[..., :k]
        mat = x[..., k:].reshape(x.shape[:-1] + (k, k))
        mat = np.swapaxes(mat, -1, -2)  # column-major unvec
        prec = -(mat + np.swapaxes(mat, -1, -2))
        return lin, prec

    def classical(self, x):
        """``(mean, cov)`` of a single natural parameter."""
        lin, prec = self._split(x)
        cov = np.linalg.inv(prec)
        return cov @ lin, cov

    def log_base_measure(self, y):
        return -0.5 * self.k * LOG_2PI

    def grad_log_base_measure(self, y):
        return np.zeros(self.k)

    def sufficient_stat(self, y):
        y = self.as_obs(y)
        return np.concatenate([y, vec(np.outer(y, y))])

    def stat_jacobian(self, y):
        y = self.as_obs(y)
        eye = np.eye(self.k)
        quad = np.kron(y[None, :], eye) + np.kron(eye, y[None, :])
        return np.hstack([eye, quad])

    def obs_in_support(self, y, margin=None):
        return bool(np.all(np.isfinite(np.atleast_1d(y))))

    def log_partition(self, x):
        lin, prec = self._split(x)
        sol = np.linalg.solve(prec, lin[..., None])[..., 0]
        _, logdet = np.linalg.slogdet(prec)
        return 0.5 * np.sum(lin * sol, axis=-1) - 0.5 * logdet

    def param_in_domain(self, x):
        _, prec = self._split(x)
        eig = np.linalg.eigvalsh(prec)
        return np.all(eig > 0, axis=-1) & np.all(np.isfinite(self.as_params(x)), axis=-1)

    def obs_rule(self, x, order=16):
        mean, cov = self.classical(x)
        chol = np.linalg.cholesky(cov)
        t, w = _tensor_hermite(self.k, order)
        ys = mean + math.sqrt(2.0) * t @ chol.T
        return ys, w * (2.0 ** (self.k / 2)) * float(np.prod(np.diag(chol)))

    def sample(self, x, rng, size):
        mean, cov = self.classical(x)
        return rng.multivariate_normal(mean, cov, size=size)

    def to_natural(self, mean, cov):
        cov = np.atleast_2d(np.asarray(cov, dtype=float))
        prec = np.linalg.inv(cov)
        prec = 0.5 * (prec + prec.T)
        return np.concatenate([prec @ np.asarray(mean, dtype=float), vec(-0.5 * prec)])


_PANEL_PROBS = (1e-16, 1e-10, 1e-6, 1e-3, 0.05, 0.3, 0.7, 0.95, 0.999, 1 - 1e-6, 1 - 1e-10, 1 - 1e-16)


def _log_gamma_rule(shape, per_panel):
    """Nodes and plain ``dt`` weights on ``(0, inf)`` for ``t^(shape-1) e^-t`` integrands.

    Composite Gauss-Legendre in ``s = log t`` with panels between gamma
    quantiles, so integrands carrying ``log t`` factors converge quickly.
    """
    edges = np.log(stats.gamma.ppf(_PANEL_PROBS, shape))
    z, w = np.polynomial.legendre.leggauss(per_panel)
    nodes, weights = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        half = 0.5 * (hi - lo)
        nodes.append(lo + half * (z + 1.0))
        weights.append(w * half)
    t = np.exp(np.concatenate(nodes))
    return t, np.concatenate(weights) * t


class Wishart(ExpFamModel):
    """Wishart law of a ``p x p`` SPD matrix ``A`` observed as ``y = vech(A)``.

    ``x = [vec(-V^{-1}/2) ; (n - p - 1)/2]`` for scale ``V`` and ``n``
    degrees of freedom, ``T(y) = [vec(A) ; log|A|]``, ``h = 1``,
    ``phi(x) = (n/2) log|V| + log Gamma_p(n/2) + (n p / 2) log 2``.

    The Jacobian of ``log|A|`` with respect to ``vech(A)`` is
    ``D_p^T vec(A^{-1})``.  With ``paper_erratum=True`` the model instead
    reports ``D_p^T D_p y`` in :meth:`stat_jacobian` (only there); this
    reproduces a widely printed but incorrect gradient so that verification
    can flag it.
    """

    name = "Wishart"

    def __init__(self, p=2, paper_erratum=False, **kw):
        p = int(p)
        if p not in (1, 2):
            raise ValueError("Wishart observations are supported for p in {1, 2}")
        super().__init__(p * p + 1, p * (p + 1) // 2, **kw)
        self.p = p
        self.paper_erratum = bool(paper_erratum)
        self._dup = duplication_matrix(p)

    def params(self):
        out = {"p": self.p}
        if self.paper_erratum:
            out["paper_erratum"] = True
        return out

    def matrix(self, y):
        return unvech(self.as_obs(y))

    def _split(self, x):
        x = self.as_params(x)
        p = self.p
        mat = np.swapaxes(x[..., : p * p].reshape(x.shape[:-1] + (p, p)), -1, -2)
        inv_scale = -(mat + np.swapaxes(mat, -1, -2))
        dof = 2.0 * x[..., -1] + p + 1
        return inv_scale, dof

    def classical(self, x):
        """``(scale V, dof n)`` of a single natural parameter."""
        inv_scale, dof = self._split(x)
        return np.linalg.inv(inv_scale), float(dof)

    def log_base_measure(self, y):
        return 0.0

    def grad_log_base_measure(self, y):
        return np.zeros(self.dim_obs)

    def sufficient_stat(self, y):
        a = self.matrix(y)
        _, logdet = np.linalg.slogdet(a)
        return np.concatenate([vec(a), [logdet]])

    def stat_jacobian(self, y):
        y = self.as_obs(y)
        dup_t = self._dup.T
        if self.paper_erratum:
            logdet_grad = dup_t @ self._dup @ y
        else:
            logdet_grad = dup_t @ vec(np.linalg.inv(self.matrix(y)))
        return np.hstack([dup_t, logdet_grad[:, None]])

    def obs_in_support(self, y, margin=None):
        margin = self.support_margin if margin is None else margin
        y = np.atleast_1d(np.asarray(y, dtype=float))
        if y.shape != (self.dim_obs,) or not np.all(np.isfinite(y)):
            return False
        return bool(np.min(np.linalg.eigvalsh(unvech(y))) > margin)

    def log_partition(self, x):
        inv_scale, dof = self._split(x)
        _, logdet_inv = np.linalg.slogdet(inv_scale)
        p = self.p
        dof = np.asarray(dof, dtype=float)
        lg = np.vectorize(lambda a: special.multigammaln(a, p) if a > 0.5 * (p - 1) else np.inf)(0.5 * dof)
        return -0.5 * dof * logdet_inv + lg + 0.5 * dof * p * math.log(2.0)

    def param_in_domain(self, x):
        inv_scale, dof = self._split(x)
        eig = np.linalg.eigvalsh(inv_scale)
        return np.all(eig > 0, axis=-1) & (dof > self.p - 1)

    def obs_rule(self, x, order=40):
        scale, dof = self.classical(x)
        if self.p == 1:
            shape, rate = 0.5 * dof, 0.5 / float(scale[0, 0])
            t, w = _log_gamma_rule(shape, max(4, order // 6))
            return (t / rate)[:, None], w / rate
        # Bartlett: A = C L L^T C^T, L = [[a, 0], [b, c]] with a^2 ~ chi2(n),
        # c^2 ~ chi2(n - 1), b ~ N(0, 1); dA = |C|^3 sqrt(a^2) d(a^2) db d(c^2)
        chol = np.linalg.cholesky(scale)
        per_panel = max(4, order // 10)
        t1, w1 = _log_gamma_rule(0.5 * dof, per_panel)
        t2, w2 = _log_gamma_rule(0.5 * (dof - 1.0), per_panel)
        # entries of A and A A^T are polynomials of degree <= 4 in b
        zb, wb = _hermite_rule(6)
        q1, q2, bb = (g.ravel() for g in np.meshgrid(2.0 * t1, 2.0 * t2, math.sqrt(2.0) * zb, indexing="ij"))
        v1, v2, vb = (g.ravel() for g in np.meshgrid(2.0 * w1, 2.0 * w2, math.sqrt(2.0) * wb, indexing="ij"))
        a = np.sqrt(q1)
        lower = np.zeros((q1.size, 2, 2))
        lower[:, 0, 0], lower[:, 1, 0], lower[:, 1, 1] = a, bb, np.sqrt(q2)
        mats = chol @ lower @ np.swapaxes(lower, 1, 2) @ chol.T
        ys = np.stack([mats[:, 0, 0], mats[:, 1, 0], mats[:, 1, 1]], axis=1)
        weights = v1 * v2 * vb * a * abs(float(np.linalg.det(chol))) ** 3
        return ys, weights

    def sample(self, x, rng, size):
        scale, dof = self.classical(x)
        if self.p == 1:
            return rng.gamma(0.5 * dof, 2.0 * float(scale[0, 0]), size=size)[..., None]
        draws = stats.wishart(df=dof, scale=scale).rvs(size=size, random_state=rng)
        draws = np.asarray(draws).reshape(-1, self.p, self.p)
        return np.array([vech(0.5 * (a + a.T)) for a in draws])

    def to_natural(self, scale, dof):
        scale = np.atleast_2d(np.asarray(scale, dtype=float))
        inv = np.linalg.inv(scale)
        inv = 0.5 * (inv + inv.T)
        return np.concatenate([vec(-0.5 * inv), [0.5 * (float(dof) - self.p - 1)]])


class GammaShapeRate(Wishart):
    """Gamma(shape ``a``, rate ``b``) observation: the ``p = 1`` Wishart.

    ``x = [-b, a - 1]``, ``T(y) = [y, log y]``, ``h = 1``,
    ``phi(x) = log Gamma(a) - a log b``.
    """

    name = "GammaShapeRate"

    def __init__(self, paper_erratum=False, **kw):
        super().__init__(p=1, paper_erratum=paper_erratum, **kw)

    def params(self):
        return {"paper_erratum": True} if self.paper_erratum else {}

    def to_natural(self, shape=None, rate=None, scale=None, dof=None):
        if scale is not None or dof is not None:
            return super().to_natural(scale, dof)
        return np.array([-float(rate), float(shape) - 1.0])


CATALOG = {
    cls.name: cls
    for cls in (
        GaussianKnownVariance,
        GaussianKnownCovariance,
        GaussianUnknownMeanCov,
        ExponentialRate,
        GaussianKnownMean,
        LogNormalKnownVariance,
        GammaShapeRate,
        Wishart,
    )
}


def make_model(name, **params):
    """Build a catalog model by name."""
    try:
        cls = CATALOG[name]
    except KeyError:
        raise KeyError(f"unknown model {name!r}; catalog: {sorted(CATALOG)}") from None
    return cls(**params)
