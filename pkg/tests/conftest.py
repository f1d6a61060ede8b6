import numpy as np
import pytest

from ailock.providers import CachingProvider, synth_object_provider


@pytest.fixture(scope="session")
def synth():
    """Calibrated desk-scale corpus: 200 train + 55 holdout objects, 4 captures, 400 look-alikes."""
    provider, corpus = synth_object_provider(seed=1, n_generated=400)
    return CachingProvider(provider), corpus


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
