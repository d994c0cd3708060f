import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from twistreeb import make_henon_heiles, make_magnetic_torus, make_sphere

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

J2 = np.array([[0.0, -1.0], [1.0, 0.0]])


@pytest.fixture(scope="session")
def sphere():
    return make_sphere(2, 1.0).system


@pytest.fixture(scope="session")
def sphere_m2():
    return make_sphere(2, 1.0, 2, [1, 1]).system


@pytest.fixture(scope="session")
def torus():
    return make_magnetic_torus(2, J2).system


@pytest.fixture(scope="session")
def henon_heiles():
    return make_henon_heiles().system


# ------------------------------------------------------ acceptance reporting

def pytest_configure(config):
    config._acceptance = {}


@pytest.fixture
def report(request):
    """``report(cid, ok, detail)`` records one acceptance line."""
    def _report(cid, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'}  criterion {cid}: {detail}"
        request.config._acceptance[cid] = line
        print(line)
        return ok
    return _report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance", {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for cid in sorted(lines, key=lambda c: (int(c.rstrip("abcd")), c)):
            terminalreporter.write_line(lines[cid])
