import numpy as np
import pytest

from sones.dynamics import GainConfig
from sones.filters import FilterGains
from sones.maps import paper_example_map
from sones.probing import ProbingConfig

THETA_STAR = np.array([1.0, 2.0])
T1 = np.array([[-2.0, -1.0], [-1.0, -4.0]])
T1_INV = np.array([[-4.0, 1.0], [1.0, -2.0]]) / 7.0

_acceptance_lines: list[str] = []


def record_acceptance(label: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] {label}: {detail}"
    print(line)
    _acceptance_lines.append(line)


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_acceptance_lines, key=lambda s: int(s.split("criterion ")[1].split(":")[0].split()[0])):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def paper_map():
    return paper_example_map(THETA_STAR)


@pytest.fixture(scope="session")
def paper_cfg():
    return ProbingConfig(amplitudes=(0.1, 0.1), frequencies=(500, 300), axis=0)


@pytest.fixture(scope="session")
def paper_gains():
    return GainConfig(K=(0.02, 0.02), filters=FilterGains(1.0, 1.0, 1.0))
