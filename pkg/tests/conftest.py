import time
from contextlib import contextmanager
from pathlib import Path

import pytest

DATA = Path(__file__).parent / "data"

_acceptance_key = pytest.StashKey[list]()


@pytest.fixture
def data_dir() -> Path:
    return DATA


@pytest.fixture
def criterion(request):
    """Context manager recording one acceptance criterion with its runtime bound."""
    results = request.config.stash.setdefault(_acceptance_key, [])

    @contextmanager
    def run(number: int, title: str, max_seconds: float):
        start = time.perf_counter()
        try:
            yield
        except BaseException:
            results.append((number, title, "FAIL", time.perf_counter() - start, max_seconds))
            raise
        elapsed = time.perf_counter() - start
        status = "PASS" if elapsed < max_seconds else "FAIL"
        results.append((number, title, status, elapsed, max_seconds))
        assert elapsed < max_seconds, f"criterion {number} took {elapsed:.2f}s (limit {max_seconds}s)"

    return run


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(_acceptance_key, [])
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, status, elapsed, limit in sorted(results):
        terminalreporter.write_line(f"[{status}] {number:>2}. {title} ({elapsed:.2f}s < {limit:g}s)")
