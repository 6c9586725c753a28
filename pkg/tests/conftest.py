import numpy as np
import pytest

from kdrmpc.solvers import _backend, available_backends


@pytest.fixture(params=sorted(available_backends()))
def backend(request):
    """Run a test once per available kernel backend."""
    saved = _backend.kernels
    _backend.kernels = available_backends()[request.param]
    yield request.param
    _backend.kernels = saved


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture
def acceptance(request):
    """``record(n, ok, detail)`` stores one PASS/FAIL line per criterion for
    the terminal summary, then asserts ``ok``."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, {})

    def record(n, ok, detail):
        lines[n] = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
        assert ok, detail

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
