import numpy as np
import pytest

from rcan.network import RcanConfig


@pytest.fixture
def tiny():
    return RcanConfig(G=2, B=2, C=8, r=4, scale=2)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(n): numbered acceptance criterion")


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import LEDGER

    if LEDGER:
        terminalreporter.section("acceptance criteria")
        for n in sorted(LEDGER):
            ok, detail = LEDGER[n]
            terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
