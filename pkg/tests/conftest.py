import numpy as np
import pytest

from renewal_sampling.dists import DiscretePareto, Exponential, Geometric, ModelSpec
from renewal_sampling.simulate import simulate_dataset

FIG2_SEED = 20260810
FIG3_SEED = 915


@pytest.fixture(scope="session")
def fig2_model():
    return ModelSpec(Geometric(0.25), Exponential(1.0), q=0.6)


@pytest.fixture(scope="session")
def fig3_model():
    return ModelSpec(DiscretePareto(1.5), Exponential(1.0), q=0.7)


@pytest.fixture(scope="session")
def ds_fig2_1m(fig2_model):
    return simulate_dataset(fig2_model, 1_000_000, seed=FIG2_SEED)


@pytest.fixture(scope="session")
def ds_fig3_1m(fig3_model):
    return simulate_dataset(fig3_model, 1_000_000, seed=FIG3_SEED)


def dkw_band(n: int, confidence: float = 0.999) -> float:
    """Dvoretzky-Kiefer-Wolfowitz uniform band half-width."""
    delta = 1.0 - confidence
    return float(np.sqrt(np.log(2.0 / delta) / (2.0 * n)))
