import numpy as np
import pytest

from cfx_certify.interval import PlausibleShiftSet, build_abstraction
from cfx_certify.network import example_network

# Filled by the acceptance tests; printed as one line per criterion at the end of the run.
ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(n): acceptance criterion number")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    n = marker.args[0]
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        prev = ACCEPTANCE.get(n, "PASS")
        ACCEPTANCE[n] = "PASS" if prev == "PASS" and rep.outcome == "passed" else "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"criterion {n}: {ACCEPTANCE[n]}")


@pytest.fixture
def example_net():
    return example_network()


@pytest.fixture
def example_shifts():
    # The worked example keeps its zero biases fixed and only widens the weights.
    return PlausibleShiftSet(0.1, shift_biases=False)


@pytest.fixture
def example_inn(example_net, example_shifts):
    return build_abstraction(example_net, example_shifts)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
