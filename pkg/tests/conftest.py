import pytest

from steinbandit.weighting import GammaCache


@pytest.fixture(scope="session")
def gamma_cache():
    """One in-memory calibration cache for the whole test run; constants are
    deterministic functions of (d, k_nn, alpha), so sharing is safe."""
    return GammaCache(path=None)
