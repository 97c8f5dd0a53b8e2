import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from kjblab.field import GridSpec

# derandomized so the suite is reproducible; examples are cheap but grids are not
settings.register_profile(
    "lab", max_examples=25, deadline=None, derandomize=True,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("lab")

_LINES: list[str] = []


def record_line(line: str) -> None:
    """Queue a line for the end-of-run summary (shown even when output is captured)."""
    _LINES.append(line)


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(params=[(1, 16), (2, 8)], ids=["n1", "n2"])
def grid(request):
    return GridSpec(*request.param)
