import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.register_profile("ci", deadline=None, max_examples=200)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def small_lasso(seed=0, m=12, n=20, d=8, mu=0.1):
    """Tiny constrained LASSO instance: (K, f, V basis)."""
    r = np.random.default_rng(seed)
    k = r.standard_normal((m, n)) / np.sqrt(m)
    x0 = np.zeros(n)
    x0[r.choice(n, 3, replace=False)] = r.choice([-1.0, 1.0], 3)
    f = k @ x0 + 0.01 * r.standard_normal(m)
    basis = np.hstack([np.eye(n)[:, np.nonzero(x0)[0]], r.standard_normal((n, d - 3))])
    return k, f, basis
