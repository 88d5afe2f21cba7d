import logging

import pytest

from mltrain_lca.estimator import EstimationContext, default_systems, estimate_all

# (criterion number, passed, detail) recorded by test_acceptance.py
ACCEPTANCE_RESULTS: list[tuple[int, bool, str]] = []


@pytest.fixture(autouse=True)
def _quiet_library_warnings(caplog):
    caplog.set_level(logging.ERROR, logger="mltrain_lca")


@pytest.fixture(scope="session")
def bundled_ctx():
    return EstimationContext.bundled()


@pytest.fixture(scope="session")
def bundled_records():
    return default_systems()


@pytest.fixture(scope="session")
def bundled_run(bundled_ctx, bundled_records):
    return estimate_all(bundled_records, bundled_ctx)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
