import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from fjcontrol import build_matrices, generate_network_a
from fjcontrol.harness import DEFAULT_SEEDS


@pytest.fixture(scope="session")
def network_a():
    """The standard 100-user configuration under the first shipped seed."""
    return generate_network_a(
        n=100, kappa_u=0.25, kappa_r=0.80,
        lambda_low=0.00, lambda_high=0.05,
        beta_alpha=7.0, beta_beta=2.0,
        seed=DEFAULT_SEEDS[0],
    )


@pytest.fixture(scope="session")
def matrices_a(network_a):
    return build_matrices(network_a)
