import pytest

from tvnewton.mesh import build_uniform_mesh

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def two_triangles():
    return build_uniform_mesh(1)


@pytest.fixture(scope="session")
def mesh4():
    return build_uniform_mesh(4)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
