import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("maat", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("maat")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line per acceptance criterion for the terminal summary."""

    def record(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE.append((number, line))
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_ACCEPTANCE):
            terminalreporter.write_line(line)
