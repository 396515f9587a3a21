"""Shared helper: build the miniature Spider-style dataset used by the tests."""

import sys
import tempfile
from pathlib import Path

FIXTURES = Path(__file__).resolve().parents[1] / "tests" / "fixtures"
sys.path.insert(0, str(FIXTURES))

import build_fixtures  # noqa: E402


def mini_root() -> Path:
    return build_fixtures.materialize(Path(tempfile.mkdtemp(prefix="dnp_mini_")))


REPLAY = FIXTURES / "replay"
