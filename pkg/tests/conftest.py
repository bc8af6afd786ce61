import os
import tempfile
from contextlib import contextmanager
from pathlib import Path

import pytest

# Keep the Artin-prime cache out of the user's home during tests.
_CACHE_DIR = tempfile.mkdtemp(prefix="randamp-test-")
os.environ["RANDAMP_ARTIN_CACHE"] = str(Path(_CACHE_DIR) / "artin_primes.txt")

_ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = []


@pytest.fixture
def criterion(request):
    """Context manager recording one PASS/FAIL line per acceptance criterion."""
    lines = request.config.stash[_ACCEPTANCE]

    @contextmanager
    def record(number, title):
        info = {}
        try:
            yield info
        except BaseException:
            lines.append((number, "FAIL", title, info.get("detail", "")))
            raise
        lines.append((number, "PASS", title, info.get("detail", "")))

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for number, status, title, detail in sorted(lines, key=lambda t: t[0]):
        suffix = f" [{detail}]" if detail else ""
        terminalreporter.write_line(f"criterion {number:>2}: {status}  {title}{suffix}")
