"""Shared fixtures: RVEs, density fits, and a fully trained material net.

The heavy artifacts (paper-scale RVE, Monte Carlo density fit, trained
network) are session-scoped and lazy, so fast unit tests stay fast and the
expensive acceptance tests share one instance.
"""

import warnings

import numpy as np
import pytest

from latticeopt import densmap, pann
from latticeopt.beam_rve import generate_rve
from latticeopt.densmap import SigmoidFit


@pytest.fixture(scope="session")
def small_rve():
    return generate_rve(0, 300)


@pytest.fixture(scope="session")
def mid_rve():
    return generate_rve(7, 700)


@pytest.fixture(scope="session")
def paper_rve():
    # paper-scale realization used for homogenization and training data
    return generate_rve(3, 2845)


@pytest.fixture(scope="session")
def paper_fit():
    # published sigmoid constants; valid as a SigmoidFit per the contract
    return SigmoidFit(c1=0.11882, c2=0.91991, c3=0.05956, rms_residual=0.0)


@pytest.fixture(scope="session")
def rve_fit(paper_rve):
    samples = [
        densmap.estimate_density(paper_rve, a, seed=0)
        for a in (0.02, 0.05, 0.08, 0.12, 0.16, 0.2, 0.25, 0.3, 0.36, 0.42)
    ]
    return densmap.fit_sigmoid(samples)


@pytest.fixture(scope="session")
def dataset(paper_rve):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return pann.generate_dataset(paper_rve)


@pytest.fixture(scope="session")
def trained(dataset, rve_fit):
    """Fully trained material net plus its loss history."""
    net = pann.init_net(0)
    net.fit = rve_fit
    net, hist = pann.train(net, dataset)
    return net, hist


@pytest.fixture(scope="session")
def trained_net(trained):
    return trained[0]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
