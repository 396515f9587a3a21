"""Running SQL against SQLite benchmark databases and comparing results."""

from __future__ import annotations

import sqlite3
import time
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching

from .errors import MissingFile, ParseError, RowCapExceeded, SqlError, Timeout
from .sqlkit import tokenize

DEFAULT_TIMEOUT = 30.0
DEFAULT_ROW_CAP = 100_000
DEFAULT_TOLERANCE = 1e-6

# unmatched rows left after exact multiset cancellation; beyond this the
# tolerance matching is skipped and the results count as different
MAX_FUZZY_ROWS = 2000


@dataclass(frozen=True)
class ExecutionResult:
    columns: tuple[str, ...]
    rows: tuple[tuple[Any, ...], ...]

    def __post_init__(self):
        width = len(self.columns)
        for row in self.rows:
            if len(row) != width:
                raise ValueError(f"row arity {len(row)} != column count {width}")


def _require_query(sql: str) -> None:
    try:
        tokens = tokenize(sql)
    except ParseError as exc:
        raise SqlError(str(exc)) from None
    if not tokens:
        raise SqlError("empty statement")
    if not tokens[0].is_word("SELECT", "WITH"):
        raise SqlError(f"only SELECT queries are graded, got {tokens[0].text!r}")


def _decode(raw: bytes) -> str:
    # a few Spider databases store latin-1 text
    try:
        return raw.decode("utf-8")
    except UnicodeDecodeError:
        return raw.decode("latin-1")


def execute_sql(
    db: str | Path,
    sql: str,
    timeout: float = DEFAULT_TIMEOUT,
    row_cap: int = DEFAULT_ROW_CAP,
) -> ExecutionResult:
    """Run one read-only query.

    Raises SqlError for anything the engine rejects (and for non-SELECT
    statements), Timeout when the statement runs past ``timeout`` seconds, and
    RowCapExceeded when it yields more than ``row_cap`` rows.
    """
    path = Path(db)
    if not path.is_file():
        raise MissingFile(path)
    _require_query(sql)
    conn = sqlite3.connect(path.resolve().as_uri() + "?mode=ro", uri=True, check_same_thread=False)
    conn.text_factory = _decode
    deadline = time.monotonic() + timeout
    conn.set_progress_handler(lambda: time.monotonic() > deadline, 1000)
    try:
        cur = conn.execute(sql)
        rows = cur.fetchmany(row_cap + 1)
        columns = tuple(d[0] for d in cur.description or ())
    except sqlite3.OperationalError as exc:
        if "interrupted" in str(exc) and time.monotonic() > deadline:
            raise Timeout(f"query exceeded {timeout:g}s") from None
        raise SqlError(str(exc)) from None
    except (sqlite3.Error, sqlite3.Warning, ValueError, OverflowError) as exc:
        raise SqlError(str(exc)) from None
    finally:
        conn.close()
    if len(rows) > row_cap:
        raise RowCapExceeded(row_cap)
    return ExecutionResult(columns, tuple(tuple(r) for r in rows))


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def values_equal(a, b, tolerance: float = DEFAULT_TOLERANCE) -> bool:
    if a is None or b is None:
        return a is None and b is None
    if _is_number(a) and _is_number(b):
        if isinstance(a, int) and isinstance(b, int):
            return a == b
        return abs(float(a) - float(b)) <= tolerance
    if type(a) is not type(b):
        return False
    return a == b


def _rows_equal(p, g, tolerance) -> bool:
    return len(p) == len(g) and all(values_equal(x, y, tolerance) for x, y in zip(p, g))


def results_equal(
    pred: ExecutionResult,
    gold: ExecutionResult,
    order_sensitive: bool,
    tolerance: float = DEFAULT_TOLERANCE,
) -> bool:
    """Compare two results positionally by column, ignoring column names.

    Rows are compared as sequences when ``order_sensitive`` and as multisets
    otherwise. Numbers compare within ``tolerance`` after int/real unification.
    """
    if len(pred.columns) != len(gold.columns) or len(pred.rows) != len(gold.rows):
        return False
    if order_sensitive:
        return all(_rows_equal(p, g, tolerance) for p, g in zip(pred.rows, gold.rows))

    # exact cancellation first; 1 == 1.0 hashes alike so int/real unify here too
    cp, cg = Counter(pred.rows), Counter(gold.rows)
    left = list((cp - cg).elements())
    right = list((cg - cp).elements())
    if not left and not right:
        return True
    if len(left) != len(right) or len(left) > MAX_FUZZY_ROWS:
        return False
    n = len(left)
    pairs = [(i, j) for i in range(n) for j in range(n) if _rows_equal(left[i], right[j], tolerance)]
    if not pairs:
        return False
    r, c = zip(*pairs)
    graph = csr_matrix((np.ones(len(pairs)), (r, c)), shape=(n, n))
    matching = maximum_bipartite_matching(graph, perm_type="column")
    return bool((matching >= 0).all())
