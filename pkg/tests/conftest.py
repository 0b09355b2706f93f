import numpy as np
import pytest

from vorwave.spectral import PeriodicFunction


def band_limited(rng, n_modes, bandwidth, mean=0.0, even=False, decay=0.5):
    """Random trigonometric polynomial with geometrically decaying modes up to ``bandwidth``."""
    n = np.arange(1, bandwidth + 1)
    scale = np.exp(-decay * n)
    a = rng.standard_normal(bandwidth) * scale
    b = np.zeros(bandwidth) if even else rng.standard_normal(bandwidth) * scale
    return PeriodicFunction.from_coefficients(mean, a, b, n_modes=n_modes)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    module = __import__("sys").modules.get("test_acceptance")
    if module is None or not module.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in module.report_lines():
        terminalreporter.write_line(line)
