import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from trsvi.model import (
    BayesNetConfig,
    BayesNetModel,
    SnlpConfig,
    SnlpModel,
    build_snlp,
    generate_bayes_net,
)


@pytest.fixture(scope="session")
def mixed_bn():
    """Six-node net with a mixture node and mildly varying variances."""
    spec = generate_bayes_net(
        BayesNetConfig(layer_sizes=(3, 3), max_parents=2, gmm_nodes=2,
                       variance_range=(1e-2, 1.0), seed=11)
    )
    return BayesNetModel(spec)


@pytest.fixture(scope="session")
def linear_bn():
    """Mixture-free net whose joint is Gaussian."""
    spec = generate_bayes_net(
        BayesNetConfig(layer_sizes=(3, 3), max_parents=2, gmm_nodes=0,
                       variance_range=(0.1, 1.0), seed=5)
    )
    return BayesNetModel(spec)


@pytest.fixture(scope="session")
def small_snlp():
    """The six-sensor noiseless instance on a 6x6 square."""
    problem = build_snlp(
        SnlpConfig(unknowns=6, anchors=4, side=6.0, radius=3.0,
                   noise_variance=0.01, noiseless=True, seed=7)
    )
    return SnlpModel(problem)


@pytest.fixture(scope="session")
def noisy_snlp():
    problem = build_snlp(
        SnlpConfig(unknowns=5, anchors=3, side=6.0, radius=3.5,
                   noise_variance=0.01, noiseless=False, seed=19)
    )
    return SnlpModel(problem)
