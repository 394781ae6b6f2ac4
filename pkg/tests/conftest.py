import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from rsma_uav.scenario import PlacementBox, Scenario

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


BOX = PlacementBox(0.0, 300.0, 0.0, 300.0, 80.0, 120.0)


def random_channels(rng, k, n_t):
    return (rng.standard_normal((k, n_t)) + 1j * rng.standard_normal((k, n_t))) / np.sqrt(2)


def random_precoder(rng, n_t, k, power=1.0):
    P = rng.standard_normal((n_t, k + 1)) + 1j * rng.standard_normal((n_t, k + 1))
    return P * np.sqrt(power) / np.linalg.norm(P)


def make_scenario(users, snr_db=20.0, n_t=2, weights=None, box=BOX, **kw):
    users = np.asarray(users, dtype=float)
    k = users.shape[0]
    return Scenario(users, np.ones(k) if weights is None else weights, 10 ** (snr_db / 10), 1.0,
                    20e6, np.zeros(k), box, n_t, **kw)


def random_users(rng, k):
    return np.column_stack([rng.uniform(0, 300, k), rng.uniform(0, 300, k), np.zeros(k)])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
