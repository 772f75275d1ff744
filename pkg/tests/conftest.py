import mpmath
import numpy as np
import pytest

from kunie.keys import parse_keys

FIXED_HEX = ["8cccccccccccc", "9999999999999", "ccccccccccccc", "d70a3d70a3d70", "0000000000000"]


def _constant_bits(value, n):
    with mpmath.workprec(n + 100):
        v = int(mpmath.floor(value() * mpmath.mpf(2) ** (n - 2)))
    return np.frombuffer(bin(v)[2:][:n].encode(), dtype=np.uint8) - ord("0")


@pytest.fixture(scope="session")
def e_bits():
    """First million binary digits of e, integer part included."""
    return _constant_bits(lambda: mpmath.e, 1_000_000)


@pytest.fixture(scope="session")
def pi_bits():
    return _constant_bits(lambda: mpmath.pi, 100)


@pytest.fixture
def fixed_keys():
    return parse_keys(FIXED_HEX)


ACCEPTANCE_LINES = []


def record(criterion, passed, detail):
    line = f"criterion {criterion:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
