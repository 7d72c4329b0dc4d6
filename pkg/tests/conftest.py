import time

import pytest

from nvspin import sites

ACCEPTANCE = []  # (number, ok, detail) recorded by test_acceptance
_START = time.perf_counter()
SUITE_BUDGET_S = 60.0


@pytest.fixture(scope="session")
def published():
    return sites.load_published()


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    elapsed = time.perf_counter() - _START
    tr = terminalreporter
    tr.section("acceptance criteria")
    for num, ok, detail in sorted(ACCEPTANCE, key=lambda r: (r[0], r[2])):
        tr.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {num}: {detail}")
    ok = elapsed < SUITE_BUDGET_S
    tr.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion 10: full suite wall time {elapsed:.1f} s (< {SUITE_BUDGET_S:g} s)")
