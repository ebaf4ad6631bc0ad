from __future__ import annotations

import time
import warnings

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(autouse=True)
def _quiet_large_tau():
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message="tau = .* is not small")
        yield


_ACCEPTANCE = pytest.StashKey[list]()


class _Criterion:
    def __init__(self, lines: list, number: int, title: str, budget: float):
        self.lines, self.number, self.title, self.budget = lines, number, title, budget
        self.details: list[str] = []

    def note(self, text: str) -> None:
        self.details.append(text)

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        elapsed = time.perf_counter() - self.start
        status = "PASS" if exc_type is None and elapsed <= self.budget else "FAIL"
        extra = "" if exc_type is None else f" ({exc_type.__name__})"
        if exc_type is None and elapsed > self.budget:
            extra = f" (over the {self.budget:g} s budget)"
        line = f"criterion {self.number:2d} {status}{extra}: {self.title} [{elapsed:.1f} s]"
        if self.details:
            line += " | " + "; ".join(self.details)
        self.lines.append((self.number, line))
        print(line)
        if exc_type is None and elapsed > self.budget:
            raise AssertionError(f"took {elapsed:.1f} s, budget {self.budget:g} s")
        return False


@pytest.fixture
def criterion(request):
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])
    return lambda number, title, budget: _Criterion(lines, number, title, budget)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
