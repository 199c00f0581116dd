import pytest

from swodt.grid import build_dc_network, load_grid

ACCEPTANCE_LINES = {}


@pytest.fixture(scope="session")
def case6():
    return load_grid("case6")


@pytest.fixture(scope="session")
def case6_net(case6):
    return build_dc_network(case6)


@pytest.fixture(scope="session")
def ieee30():
    return load_grid("ieee30")


@pytest.fixture(scope="session")
def ieee30_net(ieee30):
    return build_dc_network(ieee30)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
