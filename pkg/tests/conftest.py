import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


def semicircle_m(z):
    """Closed-form semicircle Stieltjes transform on the upper half-plane."""
    z = np.asarray(z, dtype=complex)
    root = np.sqrt(z - 2) * np.sqrt(z + 2)
    return (-z + root) / 2


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[tuple[int, str]] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
