import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=60, deadline=None, derandomize=True)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def graphs():
    from irrevhmm.graph import build_reeb_graph
    from irrevhmm.potentials import get_potential

    names = ["double_well", "tilted_double_well", "rbs3", "quadratic_bowl"]
    return {n: build_reeb_graph(get_potential(n)) for n in names}


@pytest.fixture(scope="session")
def dw_model(graphs):
    from irrevhmm.graph_limit import build_graph_limit
    from irrevhmm.potentials import double_well

    return build_graph_limit(double_well(), 0.1, graph=graphs["double_well"])


_CRITERIA = []


@pytest.fixture
def report():
    """Record one pass/fail line for an acceptance criterion; the lines are echoed in the summary."""

    def _record(label, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'}  {label}: {detail}"
        _CRITERIA.append(line)
        print(line)
        return ok

    return _record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in _CRITERIA:
            terminalreporter.write_line(line)
