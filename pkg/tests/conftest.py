import contextlib
import time

import pytest

_LINES: list[tuple[int, str, bool, str]] = []


class _Criterion:
    def __init__(self, number, title, budget):
        self.number, self.title, self.budget = number, title, budget
        self.detail = ""
        self.elapsed = 0.0


@pytest.fixture
def criterion():
    """``with criterion(n, title, budget_s) as c:`` records one pass/fail line.

    The block fails if it raises or overruns its runtime budget.
    """

    @contextlib.contextmanager
    def _run(number, title, budget):
        c = _Criterion(number, title, budget)
        start = time.perf_counter()
        ok = False
        try:
            yield c
            ok = True
        finally:
            c.elapsed = time.perf_counter() - start
            within = c.elapsed < budget
            note = f"{c.detail}; {c.elapsed:.2f}s / {budget}s".lstrip("; ")
            _LINES.append((number, title, ok and within, note))
        assert within, f"criterion {number} took {c.elapsed:.2f}s, budget {budget}s"

    return _run


def pytest_terminal_summary(terminalreporter):
    if not _LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, ok, note in sorted(_LINES):
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {number:>2}. {title} ({note})")
