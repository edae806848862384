import numpy as np
import pytest

from ahampbe.cli import EXAMPLES, build_problem


@pytest.fixture(scope="session")
def problems():
    """Problem specs for the bundled examples, keyed by id."""
    return {k: build_problem(ex) for k, ex in EXAMPLES.items()}


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    """Repeat the acceptance-criterion lines at the end of the run."""
    lines = []
    for key in ("passed", "failed"):
        for rep in terminalreporter.stats.get(key, []):
            for name, value in getattr(rep, "user_properties", []):
                if name == "criterion":
                    lines.append(value)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
