"""Posterior moments from marginal samples."""

import json
import math

import numpy as np
import pytest
from scipy import stats

from conftest import exp_gamma, gaussian_conjugate, two_point
from tweedie_lab.calculus import fd_derivative
from tweedie_lab.engine import Grid, conditional_moment
from tweedie_lab.empirical_bayes import (
    ExactMarginal,
    draw_observations,
    eb_benchmark,
    eb_posterior_moment,
    kde_fit,
    silverman_bandwidth,
)
from tweedie_lab.errors import DegenerateSample, LowDensity, NearSingularStatistic
from tweedie_lab.measures import Scenario, continuous_prior
from tweedie_lab.models import make_model

EB_GRID = Grid.stepped(-2.0, 2.0, 0.25)


@pytest.fixture(scope="module")
def marginal_samples():
    return np.random.default_rng(2).normal(0.0, math.sqrt(2.0), 100_000)


class TestKdeFit:
    def test_zero_spread(self):
        with pytest.raises(DegenerateSample):
            kde_fit([0.0, 0.0])

    def test_too_few(self):
        with pytest.raises(DegenerateSample):
            kde_fit([1.0])

    def test_non_finite(self):
        with pytest.raises(DegenerateSample):
            kde_fit([0.0, np.inf, 1.0])

    def test_density_at_zero(self, marginal_samples):
        est = kde_fit(marginal_samples)
        assert 0.27 <= est.density(0.0) <= 0.30

    def test_silverman(self, marginal_samples):
        est = kde_fit(marginal_samples)
        expected = 1.06 * np.std(marginal_samples, ddof=1) * 100_000 ** (-0.2)
        assert est.bandwidth == pytest.approx(expected, rel=1e-12)
        assert silverman_bandwidth(marginal_samples) == pytest.approx(expected, rel=1e-12)

    @pytest.mark.parametrize("samples", [[0.0, 1.0], [-3.0, 0.2, 0.3, 9.0], list(np.linspace(-1, 1, 50) ** 3)])
    def test_unit_mass(self, samples):
        assert kde_fit(samples).mass() == pytest.approx(1.0, abs=1e-6)

    def test_nonnegative_and_zero_outside_clamp(self):
        est = kde_fit([0.0, 1.0, 5.0], bandwidth=0.5)
        assert est.density(est.clamp[1] + 1.0) == 0.0
        assert all(est.density(y) >= 0.0 for y in np.linspace(-10, 15, 101))

    def test_analytic_derivatives(self):
        est = kde_fit(np.random.default_rng(0).normal(size=50), bandwidth=0.4)
        for y in (-1.0, 0.1, 0.9):
            jet = est.derivatives(y, 3)
            assert jet[0] == pytest.approx(est.density(y), rel=1e-12)
            for r in (1, 2, 3):
                assert jet[r] == pytest.approx(fd_derivative(est.density, y, r).value, rel=1e-5, abs=1e-8)

    def test_explicit_bandwidth(self):
        assert kde_fit([0.0, 1.0], bandwidth=0.3).bandwidth == 0.3
        with pytest.raises(ValueError):
            kde_fit([0.0, 1.0], bandwidth=-1.0)


class TestEbPosteriorMoment:
    def test_exact_marginal_tweedie(self, gc):
        assert eb_posterior_moment(ExactMarginal(gc), gc.model, 1, 2.0) == pytest.approx(1.0, abs=1e-6)

    def test_exact_marginal_second_moment(self, gc):
        assert eb_posterior_moment(ExactMarginal(gc), gc.model, 2, 2.0) == pytest.approx(1.5, abs=1e-4)

    @pytest.mark.parametrize("factory,ys", [(gaussian_conjugate, (-1.5, 0.0, 1.0)), (two_point, (-1.0, 0.5)), (exp_gamma, (0.5, 2.0))])
    @pytest.mark.parametrize("ell", [1, 2, 3])
    def test_marginal_sufficiency(self, factory, ys, ell):
        s = factory()
        tol = {1: 1e-6, 2: 1e-4, 3: 1e-3}[ell]
        for y in ys:
            got = eb_posterior_moment(ExactMarginal(s), s.model, ell, y)
            assert got == pytest.approx(conditional_moment(s, ell, [y]), abs=tol)

    def test_kde_two_point_symmetry(self):
        s = two_point()
        ys = draw_observations(s, 100_000, np.random.default_rng(1))[:, 0]
        assert eb_posterior_moment(kde_fit(ys), s.model, 1, 0.0) == pytest.approx(0.0, abs=0.02)

    def test_low_density(self):
        est = kde_fit([0.0, 1.0], bandwidth=0.2)
        with pytest.raises(LowDensity):
            eb_posterior_moment(est, gaussian_conjugate().model, 1, 4.0)

    def test_near_singular_statistic(self):
        model = make_model("GaussianKnownMean", mean=0.0)
        est = kde_fit(np.random.default_rng(0).normal(size=200))
        with pytest.raises(NearSingularStatistic):
            eb_posterior_moment(est, model, 1, 0.0)


class TestBenchmark:
    def test_gaussian_conjugate(self, gc):
        report = eb_benchmark(gc, 100_000, EB_GRID, ell_max=2, seed=1)
        assert set(report) == {"scenario", "n", "seed", "bandwidth", "per_ell"}
        row1, row2 = report["per_ell"]
        assert row1["ell"] == 1 and row1["mae_kde"] <= 0.05
        assert row1["mae_exact_marginal"] <= 1e-4 and row2["mae_exact_marginal"] <= 1e-4

    def test_deterministic(self, tp):
        grid = Grid.uniform(-1, 1, 5)
        a = json.dumps(eb_benchmark(tp, 5000, grid, seed=9))
        b = json.dumps(eb_benchmark(tp, 5000, grid, seed=9))
        assert a == b

    def test_hierarchical_matches_marginal_draws(self, gc):
        n = 20_000
        rng = np.random.default_rng(12)
        hier = draw_observations(gc, n, rng)[:, 0]
        direct = rng.normal(0.0, math.sqrt(2.0), n)
        stat = stats.ks_2samp(hier, direct).statistic
        assert stat < 1.63 * math.sqrt(2.0 / n)
        grid = np.linspace(-3, 3, 13)
        fa, fb = kde_fit(hier), kde_fit(direct)
        assert max(abs(fa.density(y) - fb.density(y)) for y in grid) < 0.02

    def test_gamma_exponential_draws(self):
        s = Scenario(make_model("ExponentialRate"), continuous_prior("gamma", {"shape": 2.0, "rate": 1.0}))
        ys = draw_observations(s, 20_000, np.random.default_rng(3))[:, 0]
        # marginal CDF 1 - 1/(1+y)^2
        assert stats.kstest(ys, lambda y: 1 - 1 / (1 + y) ** 2).statistic < 1.63 / math.sqrt(20_000)
