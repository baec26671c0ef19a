from importlib import resources

import pytest

from privrel.inference import load_lifetimes
from privrel.survsig import braking_system
from privrel.verify import grid


BRAKING_TIMES = grid(0.0, 5.0, 100)


@pytest.fixture(scope="session")
def braking():
    return braking_system()


def braking_samples_from_package(system):
    base = resources.files("privrel.data.braking")
    return {t.id: load_lifetimes(str(base.joinpath(f"{t.label}.txt"))) for t in system.types}


@pytest.fixture(scope="session")
def braking_samples(braking):
    return braking_samples_from_package(braking)


@pytest.fixture(scope="session")
def braking_times():
    return BRAKING_TIMES


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for name, (ok, detail) in results.items():
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")
