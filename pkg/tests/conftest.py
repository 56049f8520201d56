import sys

import pytest

from infodemic.ingest import Sources
from infodemic.synthetic import write_fixture


@pytest.fixture(scope="session")
def fixture_paths(tmp_path_factory):
    return write_fixture(tmp_path_factory.mktemp("raw"), seed=7)


@pytest.fixture(scope="session")
def sources(fixture_paths):
    return Sources.load(fixture_paths)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    if mod is None or not getattr(mod, "RESULTS", None):
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(mod.RESULTS, key=lambda l: int(l.split("criterion ")[1].split(":")[0])):
        terminalreporter.write_line(line)
