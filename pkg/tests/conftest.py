import time

import numpy as np
import pytest

from popinv.trace import histogram_from_counts, synth_delta, synth_pareto


@pytest.fixture(scope="session")
def delta_sample():
    """n=1e5 Dirac(4) catalog, pinned seed 7."""
    gt, dc = synth_delta(100_000, 4.0, 7)
    return gt, dc, histogram_from_counts(dc)


@pytest.fixture(scope="session")
def prt_sample():
    """n=1e6 Pareto(1.6, 0.1) catalog, pinned seed 0."""
    gt, dc = synth_pareto(1_000_000, 1.6, 0.1, 0)
    return gt, dc, histogram_from_counts(dc)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance report -------------------------------------------------------------

SUITE_BUDGET_SECONDS = 600.0
_ACCEPTANCE: list[str] = []
_START = time.perf_counter()


@pytest.fixture
def verdict():
    """Record ``[PASS]``/``[FAIL]`` for one acceptance criterion, then assert it."""

    def record(number, title, ok, detail=""):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {title}"
        if detail:
            line += f" | {detail}"
        _ACCEPTANCE.append(line)
        assert ok, line

    return record


def _suite_seconds():
    return time.perf_counter() - _START


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    elapsed = _suite_seconds()
    terminalreporter.section("acceptance criteria")
    for line in _ACCEPTANCE:
        terminalreporter.write_line(line)
    ok = elapsed <= SUITE_BUDGET_SECONDS
    terminalreporter.write_line(
        f"[{'PASS' if ok else 'FAIL'}] criterion 10: full suite runtime | "
        f"{elapsed:.1f} s (budget {SUITE_BUDGET_SECONDS:.0f} s)")


def pytest_sessionfinish(session, exitstatus):
    if _ACCEPTANCE and _suite_seconds() > SUITE_BUDGET_SECONDS and exitstatus == 0:
        session.exitstatus = 1
