import numpy as np
import pytest

from spinboson.kernel import ExpSumKernel
from spinboson.model import ModeSet

CRITERIA: dict[int, list[tuple[bool, str]]] = {}


def record_criterion(number: int, passed: bool, detail: str) -> None:
    line = f"CRITERION {number:2d}: {'PASS' if passed else 'FAIL'} | {detail}"
    print(line)
    CRITERIA.setdefault(number, []).append((passed, detail))


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(CRITERIA):
        for passed, detail in CRITERIA[number]:
            terminalreporter.write_line(f"CRITERION {number:2d}: {'PASS' if passed else 'FAIL'} | {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def single_mode():
    return ModeSet(np.array([1.0]), np.array([1.0]))


@pytest.fixture
def two_modes():
    return ModeSet(np.array([0.8, 1.7]), np.array([0.9, 0.6]))


@pytest.fixture
def single_kernel(single_mode):
    return ExpSumKernel.from_modes(single_mode)
