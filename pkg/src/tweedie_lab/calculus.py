"""Finite-difference calculus and the ``(1/T') d/dy`` operator.

Derivatives are taken with central stencils whose weights come from
Fornberg's algorithm.  A :class:`FdPolicy` fixes the scheme and the step
schedule; the same policy object is threaded through every identity check
so that a report is reproducible from ``(scenario, grid, policy)``.

The module also carries a small "derivative jet" toolkit: arrays
``[f(y), f'(y), ..., f^(L)(y)]`` combined with the Leibniz rule.  The
empirical-Bayes code uses it to apply the D-operator to a kernel density
estimate whose derivatives are known in closed form.
"""

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import numpy as np
from scipy import integrate

from .errors import IntervalOutOfSupport, NearSingularStatistic, StencilOutOfSupport

SCHEMES = ("central-2", "central-4", "richardson")

_DEFAULT_H0 = {"central-2": 1e-9, "central-4": 1e-6, "richardson": 1e-6}

MAX_D_ORDER = 5


@dataclass(frozen=True)
class FdPolicy:
    """Finite-difference configuration.

    Parameters
    ----------
    scheme : {"central-2", "central-4", "richardson"}
        ``richardson`` evaluates central-4 at ``h`` and ``h/2``, extrapolates,
        and reports the discrepancy as an error estimate.
    h0 : float, optional
        Base step; an order-``r`` derivative uses ``h0 ** (1/(r+2))`` scaled
        by ``max(1, |y|)``.  Defaults depend on the scheme.
    sing_margin : float
        Exclusion radius for ``|T'(y)|`` in D-operator evaluations.
    shrink : float
        Per-level step shrink factor for nested D-operator stencils.
    """

    scheme: str = "richardson"
    h0: float | None = None
    sing_margin: float = 1e-4
    shrink: float = 2.0

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown fd scheme {self.scheme!r}; choose from {SCHEMES}")
        if self.h0 is None:
            object.__setattr__(self, "h0", _DEFAULT_H0[self.scheme])
        if not self.h0 > 0:
            raise ValueError("h0 must be positive")
        if self.sing_margin < 0:
            raise ValueError("sing_margin must be non-negative")
        if self.shrink <= 1:
            raise ValueError("shrink must exceed 1")

    @property
    def accuracy(self):
        return 2 if self.scheme == "central-2" else 4

    def step(self, order, y=0.0):
        return self.h0 ** (1.0 / (order + 2)) * max(1.0, abs(float(y)))

    def to_dict(self):
        return {"scheme": self.scheme, "h0": self.h0, "sing_margin": self.sing_margin}


class FdEstimate(NamedTuple):
    value: float
    error: float  # nan unless the scheme produces an estimate


def fornberg_weights(offsets, order):
    """Finite-difference weights for the ``order``-th derivative at 0.

    ``offsets`` are the stencil nodes in units of the step.
    """
    z = np.asarray(offsets, dtype=float)
    n = len(z)
    if order >= n:
        raise ValueError("stencil too small for requested derivative order")
    c = np.zeros((n, order + 1))
    c1, c4 = 1.0, z[0]
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, order)
        c2, c5, c4 = 1.0, c4, z[i]
        for j in range(i):
            c3 = z[i] - z[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, order]


@lru_cache(maxsize=None)
def central_stencil(order, accuracy):
    """Offsets and weights of the central stencil with the given accuracy."""
    if order < 1:
        raise ValueError("derivative order must be >= 1")
    n_points = 2 * ((order + 1) // 2) - 1 + accuracy
    half = (n_points - 1) // 2
    offsets = np.arange(-half, half + 1, dtype=float)
    weights = fornberg_weights(offsets, order)
    keep = np.abs(weights) > 1e-14
    offsets, weights = offsets[keep], weights[keep]
    offsets.setflags(write=False)
    weights.setflags(write=False)
    return offsets, weights


@lru_cache(maxsize=None)
def one_sided_stencil(order, accuracy, direction):
    """Forward (``direction=1``) or backward (``-1``) stencil of the given accuracy."""
    offsets = direction * np.arange(order + accuracy, dtype=float)
    weights = fornberg_weights(offsets, order)
    offsets.setflags(write=False)
    weights.setflags(write=False)
    return offsets, weights


def _inside(support, z):
    if support is None:
        return True
    if callable(support):
        return bool(support(z))
    lo, hi = support
    return lo < z < hi


def _apply_stencil(f, y, order, h, accuracy, support, stencil=None):
    offsets, weights = stencil or central_stencil(order, accuracy)
    acc = None
    magnitude = 0.0
    for off, w in zip(offsets, weights):
        z = y + off * h
        if not _inside(support, z):
            raise StencilOutOfSupport(f"stencil point {z!r} leaves the support around y={y!r}")
        val = np.asarray(f(z), dtype=float)
        magnitude = max(magnitude, float(np.max(np.abs(val), initial=0.0)))
        term = w * val
        acc = term if acc is None else acc + term
    rounding = 10 * np.finfo(float).eps * magnitude * float(np.sum(np.abs(weights)))
    return acc / h**order, rounding / h**order


def fd_derivative(f, y, order=1, policy=None, support=None):
    """Estimate the ``order``-th derivative of a scalar function at ``y``.

    Parameters
    ----------
    f : callable
        ``float -> float``.
    support : (lo, hi) or callable, optional
        Open domain of ``f``; a stencil point outside raises
        :class:`StencilOutOfSupport`.

    Returns
    -------
    FdEstimate
        ``error`` is the Richardson discrepancy (plus a rounding floor) for
        the ``richardson`` scheme and ``nan`` otherwise.
    """
    policy = policy or FdPolicy()
    y = float(y)
    h = policy.step(order, y)
    if policy.scheme != "richardson":
        value, _ = _apply_stencil(f, y, order, h, policy.accuracy, support)
        return FdEstimate(float(value), math.nan)
    coarse, _ = _apply_stencil(f, y, order, h, 4, support)
    fine, rounding = _apply_stencil(f, y, order, h / 2, 4, support)
    value = fine + (fine - coarse) / 15.0
    return FdEstimate(float(value), float(abs(fine - coarse) + rounding))


def _apply_with_fallback(f, y, order, h, accuracy, support, one_sided):
    try:
        return _apply_stencil(f, y, order, h, accuracy, support)
    except StencilOutOfSupport:
        if not one_sided:
            raise
    for direction in (1, -1):
        stencil = one_sided_stencil(order, accuracy, direction)
        try:
            return _apply_stencil(f, y, order, h, accuracy, support, stencil)
        except StencilOutOfSupport:
            continue
    raise StencilOutOfSupport(f"no stencil fits inside the support around y={y!r}")


def jacobian_fd(f, y, policy=None, support=None, return_error=False, one_sided=False):
    """Jacobian of ``f: R^k -> R^m`` laid out ``k x m`` (gradients as columns).

    ``support`` is a predicate on the full point (or ``None``).  With
    ``one_sided=True`` a forward or backward stencil of the same accuracy
    replaces a central stencil that would leave the support.
    """
    policy = policy or FdPolicy()
    y = np.atleast_1d(np.asarray(y, dtype=float))
    rows, errs = [], []
    for i in range(y.size):
        def along(t, i=i):
            z = y.copy()
            z[i] = t
            return np.atleast_1d(f(z))

        coord_support = None
        if support is not None:
            def coord_support(t, i=i):
                z = y.copy()
                z[i] = t
                return bool(support(z))

        h = policy.step(1, y[i])
        if policy.scheme == "richardson":
            coarse, _ = _apply_with_fallback(along, y[i], 1, h, 4, coord_support, one_sided)
            fine, rounding = _apply_with_fallback(along, y[i], 1, h / 2, 4, coord_support, one_sided)
            rows.append(fine + (fine - coarse) / 15.0)
            errs.append(np.abs(fine - coarse) + rounding)
        else:
            val, _ = _apply_with_fallback(along, y[i], 1, h, policy.accuracy, coord_support, one_sided)
            rows.append(val)
            errs.append(np.full_like(val, np.nan))
    jac = np.vstack(rows)
    if return_error:
        return jac, np.vstack(errs)
    return jac


def hessian_fd(f, x, policy=None):
    """Hessian of a scalar function by differencing a finite-difference gradient."""
    policy = policy or FdPolicy()
    x = np.atleast_1d(np.asarray(x, dtype=float))
    inner = FdPolicy(scheme=policy.scheme, h0=policy.h0 / 2**3, sing_margin=policy.sing_margin)

    def grad(z):
        return jacobian_fd(lambda w: np.atleast_1d(f(w)), z, inner)[:, 0]

    hess = jacobian_fd(grad, x, policy)
    return 0.5 * (hess + hess.T)


# --------------------------------------------------------------------------
# D-operator
# --------------------------------------------------------------------------


def _check_tprime(model, z, margin):
    tp = float(model.stat_derivative(z, 1))
    if abs(tp) <= margin:
        raise NearSingularStatistic(f"|T'({z:.6g})| = {abs(tp):.3g} <= {margin:.3g}")
    return tp


def d_operator(f, model, ell, y, policy=None):
    """Apply ``D^(ell) = ((1/T'(y)) d/dy)^ell`` to ``f`` at ``y``.

    For a linear statistic the operator collapses to ``T'^-ell`` times the
    plain ``ell``-th derivative and is computed that way.  Otherwise the
    nesting is expanded recursively, innermost first, with the step halved
    (``policy.shrink``) at each level.

    Raises
    ------
    NearSingularStatistic
        If ``|T'|`` drops to ``policy.sing_margin`` at any evaluation point.
    """
    policy = policy or FdPolicy()
    y = float(y)
    if ell < 0 or ell > MAX_D_ORDER + 1:
        raise ValueError(f"D-operator order must be in [0, {MAX_D_ORDER + 1}]")
    if ell == 0:
        return float(f(y))
    support = model.support_predicate()
    if model.is_linear_statistic:
        tp = _check_tprime(model, y, policy.sing_margin)
        est = fd_derivative(f, y, ell, policy, support)
        return est.value / tp**ell

    accuracy = policy.accuracy

    def level(depth, z, h):
        if depth == 0:
            return float(f(z))
        tp = _check_tprime(model, z, policy.sing_margin)
        inner = lambda w: level(depth - 1, w, h / policy.shrink)  # noqa: E731
        if depth == ell and policy.scheme == "richardson":
            coarse, _ = _apply_stencil(inner, z, 1, h, 4, support)
            fine, _ = _apply_stencil(inner, z, 1, h / 2, 4, support)
            deriv = fine + (fine - coarse) / 15.0
        else:
            deriv, _ = _apply_stencil(inner, z, 1, h, accuracy, support)
        return float(deriv) / tp

    return level(ell, y, policy.step(ell, y))


def antiderivative_weighted(g, a, y, model, rtol=1e-9):
    """``int_a^y T'(u) g(u) du`` by adaptive Gauss-Kronrod quadrature."""
    a, y = float(a), float(y)
    if a == y:
        return 0.0
    inside = model.support_predicate()
    if not (inside(a) and inside(y)):
        raise IntervalOutOfSupport(f"[{a}, {y}] is not inside the observation support")
    integrand = lambda u: float(model.stat_derivative(u, 1)) * float(g(u))  # noqa: E731
    with warnings.catch_warnings():
        # the returned error estimate is checked below instead
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        value, err = integrate.quad(integrand, a, y, epsabs=1e-14, epsrel=rtol / 10, limit=200)
    # absolute floor so that integrals which cancel to ~0 are not rejected
    if err > max(rtol * abs(value), 1e-12 * max(1.0, abs(y - a))):
        raise ArithmeticError(f"quadrature error {err:.3g} exceeds tolerance on [{a}, {y}]")
    return float(value)


# --------------------------------------------------------------------------
# derivative jets: arrays [f, f', ..., f^(L)]
# --------------------------------------------------------------------------


def jet_product(f, g):
    """Leibniz rule."""
    n = min(len(f), len(g))
    return np.array(
        [sum(math.comb(r, j) * f[j] * g[r - j] for j in range(r + 1)) for r in range(n)]
    )


def jet_reciprocal(g):
    if g[0] == 0:
        raise ZeroDivisionError("reciprocal of a jet with zero value")
    out = np.zeros(len(g))
    out[0] = 1.0 / g[0]
    for r in range(1, len(g)):
        s = sum(math.comb(r, j) * g[j] * out[r - j] for j in range(1, r + 1))
        out[r] = -s / g[0]
    return out


def jet_exp(u):
    """Jet of ``exp(u)`` given the jet of ``u``."""
    out = np.zeros(len(u))
    out[0] = math.exp(u[0])
    for r in range(1, len(u)):
        out[r] = sum(math.comb(r - 1, j) * u[j + 1] * out[r - 1 - j] for j in range(r))
    return out


def jet_log(f):
    """Jet of ``log f`` given the jet of a positive ``f``."""
    if f[0] <= 0:
        raise ValueError("log of a non-positive jet")
    out = np.zeros(len(f))
    out[0] = math.log(f[0])
    # f' = f * (log f)'  ->  solve for the derivatives of log f
    q = np.zeros(len(f) - 1)  # q[j] = (log f)^(j+1)
    for r in range(len(q)):
        s = sum(math.comb(r, j) * q[j] * f[r - j] for j in range(r))
        q[r] = (f[r + 1] - s) / f[0]
    out[1:] = q
    return out


def d_operator_jet(g, tprime, ell):
    """Exact D-operator on jets.

    ``g`` holds derivatives of the operand up to order ``ell``; ``tprime``
    holds derivatives of ``T'`` up to order ``ell - 1``.  Returns
    ``D^(ell) g`` at the expansion point.
    """
    g = np.asarray(g, dtype=float)
    if len(g) < ell + 1 or (ell > 0 and len(tprime) < ell):
        raise ValueError("jets too short for requested order")
    inv_tp = jet_reciprocal(np.asarray(tprime[:ell], dtype=float)) if ell else None
    cur = g[: ell + 1]
    for _ in range(ell):
        cur = jet_product(cur[1:], inv_tp)
    return float(cur[0])
