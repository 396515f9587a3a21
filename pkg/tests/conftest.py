import json
import sys
from pathlib import Path

import pytest

from dnpsql import grading

FIXTURES = Path(__file__).resolve().parent / "fixtures"
sys.path.insert(0, str(FIXTURES))

import build_fixtures  # noqa: E402


@pytest.fixture(scope="session")
def spider_root(tmp_path_factory) -> Path:
    """A materialized copy of the miniature dataset (JSON files plus SQLite databases)."""
    return build_fixtures.materialize(tmp_path_factory.mktemp("spider_mini"))


@pytest.fixture(scope="session")
def replay_dir() -> Path:
    return FIXTURES / "replay"


@pytest.fixture
def probe_db(spider_root) -> Path:
    return spider_root / "database" / "probe" / "probe.sqlite"


@pytest.fixture
def fixture_json():
    def load(name):
        return json.loads((FIXTURES / name).read_text(encoding="utf-8"))

    return load


# -- metric ordering: every report built during a test must satisfy TS <= EX <= VA ------

_built_reports: list = []
_original_init = grading.AggregateReport.__init__


def _recording_init(self, *args, **kwargs):
    _original_init(self, *args, **kwargs)
    _built_reports.append(self)


grading.AggregateReport.__init__ = _recording_init


@pytest.fixture(autouse=True)
def metric_ordering(request):
    _built_reports.clear()
    yield
    if request.node.get_closest_marker("allow_metric_violations"):
        return
    violations = [v for r in _built_reports for v in grading.metric_order_violations(r)]
    _built_reports.clear()
    if violations:
        pytest.fail("TS <= EX <= VA violated:\n" + "\n".join(violations), pytrace=False)


def pytest_configure(config):
    config.addinivalue_line("markers", "allow_metric_violations: the test builds out-of-order reports on purpose")
