import pytest

from fasflux.wavepacket import canonical_packet

ACCEPTANCE_LINES = []


def pytest_addoption(parser):
    parser.addoption("--update-golden", action="store_true", default=False,
                     help="rewrite files under tests/golden instead of comparing")


@pytest.fixture
def update_golden(request):
    return request.config.getoption("--update-golden")


@pytest.fixture(scope="session")
def G1():
    return canonical_packet("G1")


@pytest.fixture(scope="session")
def G2():
    return canonical_packet("G2")


@pytest.fixture
def acceptance_line():
    """Record a one-line PASS/FAIL verdict that is printed after the run."""
    def record(criterion, passed, detail):
        ACCEPTANCE_LINES.append(f"criterion {criterion}: {'PASS' if passed else 'FAIL'}  {detail}")
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
