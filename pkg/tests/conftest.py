"""Shared scenarios for the test suite."""

import numpy as np
import pytest

from tweedie_lab.engine import Grid
from tweedie_lab.measures import DiscretePrior, Scenario, WeightedMeasure, continuous_prior, make_u_map, point_mass
from tweedie_lab.models import make_model

CONFIG_DIR = __import__("pathlib").Path(__file__).resolve().parent.parent / "configs"


def gaussian_conjugate():
    model = make_model("GaussianKnownVariance", variance=1.0)
    prior = continuous_prior("normal", {"loc": 0.0, "scale": 1.0})
    return Scenario(model, prior, name="gaussian_conjugate")


def two_point():
    model = make_model("GaussianKnownVariance", variance=1.0)
    prior = DiscretePrior(WeightedMeasure(np.array([[-1.0], [1.0]]), [0.5, 0.5]))
    return Scenario(model, prior, name="two_point")


def exp_gamma():
    model = make_model("ExponentialRate")
    prior = continuous_prior("gamma", {"shape": 2.0, "rate": 1.0})
    return Scenario(model, prior, name="exp_gamma")


def point_mass_scenario(x0=0.7):
    model = make_model("GaussianKnownVariance", variance=1.0)
    return Scenario(model, DiscretePrior(point_mass([x0])), name="point_mass")


def unknown_mean_cov():
    model = make_model("GaussianUnknownMeanCov", k=2)
    atoms = [
        model.to_natural(mean=[0.0, 0.0], cov=[[1.0, 0.0], [0.0, 1.0]]),
        model.to_natural(mean=[1.0, -0.5], cov=[[1.5, 0.3], [0.3, 0.8]]),
        model.to_natural(mean=[-0.5, 0.5], cov=[[0.7, -0.2], [-0.2, 1.2]]),
    ]
    prior = DiscretePrior(WeightedMeasure.from_unnormalized(np.array(atoms), [1, 1, 1]))
    return Scenario(model, prior, make_u_map({"type": "component", "index": 1}), name="unknown_mean_cov")


def unknown_mean_cov_grid():
    return Grid(np.array([[a, b] for a in (-1.0, 0.0, 1.0) for b in (-1.0, 0.0, 1.0)]))


def wishart(p, paper_erratum=False):
    model = make_model("Wishart", p=p, paper_erratum=paper_erratum)
    if p == 1:
        specs = [([[0.5]], 3), ([[1.0]], 5), ([[2.0]], 4)]
    else:
        specs = [
            (np.eye(2) / 5, 5),
            (np.array([[1.0, 0.3], [0.3, 0.5]]) / 6, 6),
            (np.array([[0.5, -0.1], [-0.1, 0.8]]) / 4, 4),
        ]
    atoms = np.array([model.to_natural(scale=s, dof=n) for s, n in specs])
    prior = DiscretePrior(WeightedMeasure.from_unnormalized(atoms, [1, 1, 1]))
    return Scenario(model, prior, name=f"wishart_p{p}")


def wishart_grid(p):
    if p == 1:
        return Grid(np.linspace(0.5, 6.0, 9)[:, None])
    return Grid(np.array([[a, b, c] for a in (2.0, 4.0, 6.0) for b, c in ((0.5, 3.0), (-1.0, 5.0), (0.0, 4.0))]))


@pytest.fixture(scope="session")
def gc():
    return gaussian_conjugate()


@pytest.fixture(scope="session")
def tp():
    return two_point()


@pytest.fixture(scope="session")
def eg():
    return exp_gamma()


@pytest.fixture(scope="session")
def pm():
    return point_mass_scenario()
