import numpy as np
import pytest

from mlsg import kernels
from mlsg.model import baseline
from mlsg.riccati import TimeMesh, solve
from mlsg.strategies import strategy_coefficients

BACKENDS = ["numpy"] + (["numba"] if kernels.HAVE_NUMBA else [])

# acceptance criteria outcomes, printed in the terminal summary
ACCEPTANCE: dict[int, tuple[str, bool, str]] = {}


@pytest.fixture(params=BACKENDS)
def backend(request):
    prev = kernels.set_backend(request.param)
    yield request.param
    kernels.set_backend(prev)


@pytest.fixture(scope="session")
def params():
    return baseline()


@pytest.fixture(scope="session")
def sol(params):
    return solve(params, TimeMesh(params.horizon, 10_000))


@pytest.fixture(scope="session")
def coeffs(params, sol):
    return strategy_coefficients(params, sol)


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        title, ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {k}. {title}: {detail}")
