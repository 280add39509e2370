"""Finite differences, Jacobians, the D-operator and weighted antiderivatives."""

import math

import numpy as np
import pytest

from tweedie_lab.calculus import (
    FdPolicy,
    antiderivative_weighted,
    central_stencil,
    d_operator,
    d_operator_jet,
    fd_derivative,
    fornberg_weights,
    hessian_fd,
    jacobian_fd,
    jet_exp,
    jet_log,
    jet_product,
    jet_reciprocal,
)
from tweedie_lab.errors import IntervalOutOfSupport, NearSingularStatistic, StencilOutOfSupport
from tweedie_lab.linalg import vec
from tweedie_lab.models import make_model

GAUSS = make_model("GaussianKnownVariance", variance=1.0)
EXPO = make_model("ExponentialRate")
LOGN = make_model("LogNormalKnownVariance", variance=1.0)  # T(y) = log y, so D = y d/dy
GKM = make_model("GaussianKnownMean", mean=0.0)  # T'(y) = -y vanishes at 0

ANALYTIC = {
    "exp": (np.exp, [np.exp, np.exp, np.exp]),
    "sin": (np.sin, [np.cos, lambda y: -np.sin(y), lambda y: -np.cos(y)]),
    "runge": (
        lambda y: 1.0 / (1.0 + y * y),
        [
            lambda y: -2 * y / (1 + y * y) ** 2,
            lambda y: (6 * y * y - 2) / (1 + y * y) ** 3,
            lambda y: 24 * y * (1 - y * y) / (1 + y * y) ** 4,
        ],
    ),
}


class TestStencils:
    def test_fornberg_first_derivative(self):
        assert fornberg_weights([-1, 0, 1], 1) == pytest.approx([-0.5, 0.0, 0.5])

    def test_central_four_second_derivative(self):
        offs, w = central_stencil(2, 4)
        assert list(offs) == [-2, -1, 0, 1, 2]
        assert w == pytest.approx(np.array([-1, 16, -30, 16, -1]) / 12.0)


class TestFdDerivative:
    def test_quadratic_exact(self):
        est = fd_derivative(lambda y: y * y, 3.0, 1, FdPolicy("central-2"))
        assert est.value == pytest.approx(6.0, abs=1e-8)
        assert math.isnan(est.error)

    def test_exp_second_derivative(self):
        # effective step h0^(1/4) = 1e-2
        est = fd_derivative(np.exp, 0.0, 2, FdPolicy("central-4", h0=1e-8))
        assert est.value == pytest.approx(1.0, abs=1e-6)

    def test_tanh_slope(self):
        assert fd_derivative(np.tanh, 0.0, 1).value == pytest.approx(1.0, abs=1e-8)

    def test_stencil_out_of_support(self):
        with pytest.raises(StencilOutOfSupport):
            fd_derivative(math.log, 1e-4, 1, FdPolicy("central-4"), support=(0.0, math.inf))

    def test_default_scheme_is_richardson(self):
        assert FdPolicy().scheme == "richardson" and FdPolicy().h0 == 1e-6

    def test_invalid_policy(self):
        with pytest.raises(ValueError):
            FdPolicy("central-3")
        with pytest.raises(ValueError):
            FdPolicy(h0=-1.0)

    @pytest.mark.parametrize("name", sorted(ANALYTIC))
    @pytest.mark.parametrize("order", [1, 2, 3])
    def test_richardson_error_bounds_true_error(self, name, order):
        f, derivs = ANALYTIC[name]
        rng = np.random.default_rng(1000 + order)
        for y in rng.uniform(-3.0, 3.0, 100):
            est = fd_derivative(f, y, order)
            assert abs(est.value - derivs[order - 1](y)) <= 5.0 * est.error

    def test_richardson_beats_central_two(self):
        rng = np.random.default_rng(4)
        worse = 0
        for y in rng.uniform(-2, 2, 40):
            r = abs(fd_derivative(np.sin, y, 2).value + np.sin(y))
            c = abs(fd_derivative(np.sin, y, 2, FdPolicy("central-2")).value + np.sin(y))
            worse += r > c
        assert worse <= 4


class TestJacobianFd:
    def test_linear_map(self):
        a = np.array([[1.0, 2.0, -1.0], [0.5, 0.0, 3.0]])
        assert jacobian_fd(lambda y: a @ y, np.array([0.3, -1.0, 2.0])) == pytest.approx(a.T, abs=1e-8)

    def test_product(self):
        jac = jacobian_fd(lambda y: np.array([y[0] * y[1]]), np.array([2.0, 3.0]))
        assert jac[:, 0] == pytest.approx([3.0, 2.0], abs=1e-6)

    def test_gaussian_unknown_mean_cov_statistic(self):
        model = make_model("GaussianUnknownMeanCov", k=2)
        y = np.array([0.7, -1.2])
        eye = np.eye(2)
        closed = np.hstack([eye, np.kron(y[None, :], eye) + np.kron(eye, y[None, :])])
        assert np.allclose(jacobian_fd(model.sufficient_stat, y), closed, atol=1e-6)
        assert np.allclose(model.stat_jacobian(y), closed, atol=1e-14)
        assert vec(np.outer(y, y)) == pytest.approx(model.sufficient_stat(y)[2:])

    def test_one_sided_fallback(self):
        inside = lambda z: z[0] > 0  # noqa: E731
        f = lambda z: z**3 + z  # noqa: E731
        jac = jacobian_fd(f, np.array([1e-3]), FdPolicy("central-4"), support=inside, one_sided=True)
        assert jac[0, 0] == pytest.approx(1.0 + 3e-6, abs=1e-8)
        with pytest.raises(StencilOutOfSupport):
            jacobian_fd(f, np.array([1e-3]), FdPolicy("central-4"), support=inside)

    def test_hessian(self):
        f = lambda x: x[0] ** 2 * x[1] + math.sin(x[1])  # noqa: E731
        x = np.array([0.4, 1.1])
        exact = np.array([[2 * x[1], 2 * x[0]], [2 * x[0], -math.sin(x[1])]])
        assert np.allclose(hessian_fd(f, x), exact, atol=1e-6)


class TestDOperator:
    def test_gaussian_plain_derivative(self):
        assert d_operator(lambda y: y * y / 4 + 7.0, GAUSS, 1, 2.0) == pytest.approx(1.0, abs=1e-6)

    def test_order_zero_is_identity(self):
        f = lambda y: math.cos(y) * 3.3  # noqa: E731
        assert d_operator(f, LOGN, 0, 0.7) == f(0.7)

    def test_exponential_chain(self):
        assert d_operator(lambda y: -3 * math.log1p(y), EXPO, 1, 1.0) == pytest.approx(1.5, abs=1e-6)

    @pytest.mark.parametrize("ell", [1, 2, 3])
    def test_linear_statistic_uses_scaled_derivative(self, ell):
        f = lambda y: math.exp(0.3 * y) / (1 + y)  # noqa: E731
        policy = FdPolicy()
        expected = fd_derivative(f, 1.2, ell, policy, EXPO.support_predicate()).value / (-1.0) ** ell
        assert d_operator(f, EXPO, ell, 1.2, policy) == expected

    @pytest.mark.parametrize("ell", [1, 2, 3])
    def test_nonlinear_statistic_power_oracle(self, ell):
        # T = log y: D y^a = a y^a
        a = 1.7
        got = d_operator(lambda y: y**a, LOGN, ell, 1.6)
        assert got == pytest.approx(a**ell * 1.6**a, rel=10 ** (-7 + ell))

    @pytest.mark.parametrize("l1,l2", [(1, 1), (1, 2), (2, 1)])
    def test_composition(self, l1, l2):
        f = lambda y: math.exp(-0.4 * y) * y**1.3  # noqa: E731
        y = 1.4
        single = abs(d_operator(f, LOGN, 1, y) - d_operator(lambda z: z * (-0.4 * f(z) + 1.3 * f(z) / z), LOGN, 0, y))
        tol = 10 * max(single, 1e-6)
        direct = d_operator(f, LOGN, l1 + l2, y)
        nested = d_operator(lambda z: d_operator(f, LOGN, l2, z), LOGN, l1, y)
        assert nested == pytest.approx(direct, abs=tol * (l1 + l2))

    def test_near_singular_statistic(self):
        with pytest.raises(NearSingularStatistic):
            d_operator(lambda y: y, GKM, 1, 0.0)
        with pytest.raises(NearSingularStatistic):
            d_operator(lambda y: y, GKM, 1, 5e-5)

    def test_order_limit(self):
        with pytest.raises(ValueError):
            d_operator(lambda y: y, GAUSS, 9, 0.0)


class TestAntiderivativeWeighted:
    def test_empty_interval(self):
        assert antiderivative_weighted(math.sqrt, 2.0, 2.0, GAUSS) == 0.0

    def test_gaussian_posterior_mean(self):
        assert antiderivative_weighted(lambda u: u / 2, 0.0, 2.0, GAUSS) == pytest.approx(1.0, abs=1e-8)

    def test_exponential(self):
        got = antiderivative_weighted(lambda u: 3 / (1 + u), 0.5, 1.0, EXPO)
        assert got == pytest.approx(-3 * math.log(2.0 / 1.5), abs=1e-8)

    def test_exponential_from_boundary_example(self):
        # the interval [0, 1] touches the boundary of (0, inf); shift by the support margin
        got = antiderivative_weighted(lambda u: 3 / (1 + u), 2e-8, 1.0, EXPO)
        assert got == pytest.approx(-3 * math.log(2.0), abs=1e-7)

    def test_out_of_support(self):
        with pytest.raises(IntervalOutOfSupport):
            antiderivative_weighted(lambda u: u, -1.0, 1.0, EXPO)


class TestJets:
    def test_product_and_reciprocal(self):
        # f = e^y, g = 1 + y at y = 0
        f = np.array([1.0, 1.0, 1.0, 1.0])
        g = np.array([1.0, 1.0, 0.0, 0.0])
        assert jet_product(f, g) == pytest.approx([1, 2, 3, 4])
        assert jet_reciprocal(g) == pytest.approx([1, -1, 2, -6])

    def test_exp_log_roundtrip(self):
        u = np.array([0.3, -1.0, 0.5, 2.0])
        assert jet_log(jet_exp(u)) == pytest.approx(u)

    def test_d_operator_jet_matches_fd(self):
        # T = log y on y = 1.6, f = y^1.7
        y, a = 1.6, 1.7
        f = np.array([y**a, a * y ** (a - 1), a * (a - 1) * y ** (a - 2), a * (a - 1) * (a - 2) * y ** (a - 3)])
        tprime = LOGN.stat_derivatives(y, 3)
        for ell in (1, 2, 3):
            assert d_operator_jet(f, tprime, ell) == pytest.approx(a**ell * y**a, rel=1e-12)
