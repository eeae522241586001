import time

import pytest
from hypothesis import settings

from epmconnector.params import load_parameters

settings.register_profile("repo", deadline=None, derandomize=True, max_examples=60)
settings.load_profile("repo")


@pytest.fixture(scope="session")
def params():
    return load_parameters()


@pytest.fixture(scope="session")
def force_model(params):
    return params.force_model()


# acceptance results, filled by tests/test_acceptance.py and printed after the run
ACCEPTANCE: dict[int, tuple[str, str]] = {}
ACCEPTANCE_TITLES: dict[int, str] = {}


def pytest_sessionstart(session):
    session.config._epm_started = time.perf_counter()


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_TITLES:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n, title in sorted(ACCEPTANCE_TITLES.items()):
        status, detail = ACCEPTANCE.get(n, ("FAIL", "not run"))
        tr.write_line(f"{status} {n:2d}. {title}: {detail}")
    elapsed = time.perf_counter() - config._epm_started
    tr.write_line(f"suite wall time {elapsed:.1f} s (limit 120 s)")
