import numpy as np
import pytest

from frachdg.basis import ReferenceBasis
from frachdg.mesh import build_mesh


@pytest.fixture(scope="session")
def p1():
    return ReferenceBasis(1)


@pytest.fixture(scope="session")
def mesh4():
    return build_mesh(4, 4)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    """Echo the acceptance verdicts (one line per criterion) after the run."""
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "VERDICTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for key in sorted(lines):
            terminalreporter.write_line(lines[key])
