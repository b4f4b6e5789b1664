from pathlib import Path

import pytest

from omega_lab.automaton import fixtures

DATA = Path(__file__).parent / "data"

ONE_PROP = ("gf_a", "always_a", "universal", "cycle_3", "cycle_8", "cycle_16", "cycle_32")

# symbols over (a, b): bit 0 is a, bit 1 is b
NA_NB, A_NB, NA_B, A_B = 0, 1, 2, 3


@pytest.fixture(scope="session")
def fx():
    return fixtures()


def hoa_text(name: str) -> str:
    return (DATA / name).read_bytes().decode("utf-8")


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
