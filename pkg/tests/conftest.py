import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from peaont.dispersal import StorageSite  # noqa: E402


@pytest.fixture
def key():
    return bytes(range(16))


@pytest.fixture
def make_sites(tmp_path):
    def make(n, caps=None):
        return [StorageSite(chr(ord("A") + i), str(tmp_path / f"site{i}"),
                            None if caps is None else caps[i]) for i in range(n)]
    return make


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
