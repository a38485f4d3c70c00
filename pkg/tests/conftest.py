import numpy as np
import pytest

from metadob.metalearn import MetaConfig


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def tiny_cfg():
    return MetaConfig(support_len=4, query_len=2, m_delays=1, k=2,
                      hidden=(6,), affine_slots=False, lam1=1e-4, lam2=1e-2,
                      epochs=5, seed=0)
