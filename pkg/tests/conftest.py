"""Shared pytest hooks: collect acceptance verdicts and print them after the run."""
from __future__ import annotations

import time
from contextlib import contextmanager

import pytest

_VERDICTS = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_VERDICTS] = []


@pytest.fixture
def criterion(request):
    """Context manager factory: ``with criterion(3, "graph oracles", budget_s=30): ...``.

    Records one PASS/FAIL line per criterion; a body that raises or overruns
    its runtime budget is a FAIL and fails the test.
    """
    log = request.config.stash[_VERDICTS]

    @contextmanager
    def run(number: int, title: str, budget_s: float):
        t0 = time.perf_counter()
        try:
            yield
        except BaseException as exc:
            took = time.perf_counter() - t0
            msg = str(exc).splitlines()[0][:100] if str(exc) else type(exc).__name__
            log.append(f"criterion {number:>2} FAIL  {title} ({took:.2f}s): {msg}")
            raise
        took = time.perf_counter() - t0
        ok = took < budget_s
        log.append(f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title} "
                   f"({took:.2f}s, budget {budget_s:g}s)")
        assert ok, f"criterion {number} took {took:.2f}s, over its {budget_s:g}s budget"

    return run


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_VERDICTS, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
