import numpy as np
import pytest

from plgp.kernels import rbf
from plgp.model import Dataset, ModelConfig

# lines collected by test_acceptance, echoed after the run regardless of capture
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_instance(rng, n_max=10, m_max=3, d_max=3, treated=1):
    """Random (config, data, query points) with at least ``treated`` treated units."""
    n = int(rng.integers(max(treated, 1), n_max + 1))
    m = int(rng.integers(1, m_max + 1))
    d = int(rng.integers(1, d_max + 1))
    X = rng.uniform(-2, 2, (n, d))
    Xq = rng.uniform(-2, 2, (m, d))
    t = rng.integers(0, 2, n)
    t[:treated] = 1
    y = rng.normal(size=n)
    lo, hi = np.log(0.5), np.log(5.0)
    cfg = ModelConfig(rbf(float(np.exp(rng.uniform(lo, hi)))),
                      rbf(float(np.exp(rng.uniform(lo, hi)))),
                      float(np.exp(rng.uniform(lo, hi))))
    return cfg, Dataset(X, t, y), Xq
