import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "sketch", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("sketch")

# lines collected by tests/test_acceptance.py, printed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def as_updates(x):
    """Updates ``(indices, deltas)`` producing the dense vector ``x``."""
    x = np.asarray(x)
    idx = np.flatnonzero(x)
    return idx + 1, x[idx].astype(np.int64)


def random_sparse(rng, n, s, low=-50, high=50):
    """A vector with exactly ``s`` nonzero integer entries."""
    x = np.zeros(n, dtype=np.int64)
    support = rng.choice(n, size=s, replace=False)
    vals = rng.integers(1, high + 1, size=s) * rng.choice([-1, 1], size=s)
    x[support] = vals
    return x


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
