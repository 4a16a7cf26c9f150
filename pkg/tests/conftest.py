import os

import numpy as np
import pytest

_VERDICTS = []


def pytest_report_header(config):
    from canary import backend_name

    return f"canary backend: {backend_name()} (CANARY_DISABLE_NUMBA={os.environ.get('CANARY_DISABLE_NUMBA', '')})"


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_VERDICTS, key=lambda s: int(s.split()[0][2:])):
            terminalreporter.write_line(line)


@pytest.fixture
def verdict():
    """Record and print one ``AC<n> PASS|FAIL: detail`` line, then assert it."""

    def record(ac, ok, detail):
        line = f"AC{ac} {'PASS' if ok else 'FAIL'}: {detail}"
        _VERDICTS.append(line)
        print(line)
        assert ok, line

    return record


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
