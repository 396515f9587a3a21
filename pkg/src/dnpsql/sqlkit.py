"""SQL text utilities.

Everything here works on token streams rather than a full grammar: queries are
split into clauses by scanning for keywords at parenthesis depth zero, which is
enough for clause decomposition, order detection and the component counting
behind Spider's hardness tiers.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field, fields

from .errors import IncompleteClauseSet, ParseError

__all__ = [
    "ClauseSet",
    "DifficultyLevel",
    "Token",
    "assemble_clauses",
    "classify_difficulty",
    "hardness_components",
    "is_order_sensitive",
    "normalize_sql",
    "split_clauses",
    "tokenize",
]

KEYWORDS = frozenset(
    """
    SELECT FROM WHERE GROUP BY HAVING ORDER LIMIT OFFSET UNION INTERSECT EXCEPT ALL
    DISTINCT AS ON JOIN INNER LEFT RIGHT FULL OUTER CROSS NATURAL USING AND OR NOT IN
    LIKE GLOB BETWEEN IS NULL EXISTS ASC DESC CASE WHEN THEN ELSE END CAST COLLATE
    """.split()
)
AGGREGATES = frozenset({"MAX", "MIN", "COUNT", "SUM", "AVG"})
SET_OPS = frozenset({"UNION", "INTERSECT", "EXCEPT"})
JOIN_MODIFIERS = frozenset({"INNER", "LEFT", "RIGHT", "FULL", "OUTER", "CROSS", "NATURAL"})

_TOKEN_RE = re.compile(
    r"""
     (?P<ws>\s+)
    |(?P<comment>--[^\n]*|/\*.*?\*/)
    |(?P<string>'(?:[^']|'')*')
    |(?P<dquote>"(?:[^"]|"")*")
    |(?P<bquote>`[^`]*`)
    |(?P<bracket>\[[^\]]*\])
    |(?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
    |(?P<word>[A-Za-z_][A-Za-z_0-9$]*)
    |(?P<op><>|!=|>=|<=|==|\|\||[-+*/%=<>(),.;~&|])
    """,
    re.VERBOSE | re.DOTALL,
)
_LITERAL_KINDS = frozenset({"string", "dquote", "bquote", "bracket"})


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    start: int
    end: int

    @property
    def upper(self) -> str:
        return self.text.upper() if self.kind == "word" else self.text

    def is_word(self, *names: str) -> bool:
        return self.kind == "word" and self.text.upper() in names


def tokenize(sql: str) -> list[Token]:
    """Split SQL into tokens, dropping whitespace and comments.

    Raises ParseError on an unterminated literal or a character that starts no
    token.
    """
    tokens = []
    pos = 0
    while pos < len(sql):
        m = _TOKEN_RE.match(sql, pos)
        if m is None:
            ch = sql[pos]
            if ch in "'\"`[":
                raise ParseError("unterminated quoted literal", pos, f"closing {ch if ch != '[' else ']'}")
            raise ParseError(f"unexpected character {ch!r}", pos)
        kind = m.lastgroup
        if kind not in ("ws", "comment"):
            tokens.append(Token(kind, m.group(), m.start(), m.end()))
        pos = m.end()
    return tokens


def _render(tokens: list[Token], src: str) -> str:
    """Rebuild text for a token run: keywords upper-cased, gaps collapsed to one space."""
    parts = []
    prev = None
    for tok in tokens:
        if prev is not None and tok.start > prev.end:
            parts.append(" ")
        if tok.kind == "word" and tok.text.upper() in KEYWORDS:
            parts.append(tok.text.upper())
        else:
            parts.append(tok.text)
        prev = tok
    return "".join(parts)


def _strip_semicolons(tokens: list[Token]) -> list[Token]:
    end = len(tokens)
    while end and tokens[end - 1].text == ";":
        end -= 1
    for tok in tokens[:end]:
        if tok.text == ";":
            raise ParseError("multiple statements", tok.start, "end of query")
    return tokens[:end]


def _depths(tokens: list[Token]) -> list[int]:
    """Parenthesis depth before each token; raises on imbalance."""
    depth = 0
    out = []
    for tok in tokens:
        if tok.text == ")":
            depth -= 1
            if depth < 0:
                raise ParseError("unbalanced ')'", tok.start)
        out.append(depth)
        if tok.text == "(":
            depth += 1
    if depth != 0:
        raise ParseError("unbalanced '('", tokens[-1].end, "')'")
    return out


# -- clause decomposition -----------------------------------------------------

_CLAUSE_ORDER = ("SELECT", "FROM", "WHERE", "GROUP BY", "HAVING", "ORDER BY", "LIMIT")
_FIELD_FOR = {
    "SELECT": "select",
    "FROM": "from_",
    "WHERE": "where_",
    "GROUP BY": "group_by",
    "HAVING": "having",
    "ORDER BY": "order_by",
    "LIMIT": "limit",
}


@dataclass(frozen=True)
class ClauseSet:
    """Top-level clauses of one SELECT block, each carrying its keyword."""

    select: str
    from_: str
    where_: str | None = None
    group_by: str | None = None
    having: str | None = None
    order_by: str | None = None
    limit: str | None = None
    trailing_set_op: str | None = None

    def present(self) -> dict[str, str]:
        return {f.name: getattr(self, f.name) for f in fields(self) if getattr(self, f.name)}


def _clause_markers(tokens: list[Token], depths: list[int]):
    """Yield (clause keyword, token index, keyword length) at depth zero.

    Stops at the first top-level set operator, which is yielded as ("SETOP", i, 0).
    """
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        if depths[i] == 0 and tok.kind == "word":
            up = tok.text.upper()
            nxt = tokens[i + 1] if i + 1 < len(tokens) else None
            if up in SET_OPS and i > 0:
                yield "SETOP", i, 0
                return
            if up in ("GROUP", "ORDER") and nxt is not None and nxt.is_word("BY"):
                yield f"{up} BY", i, 2
                i += 2
                continue
            if up in ("SELECT", "FROM", "WHERE", "HAVING", "LIMIT"):
                yield up, i, 1
        i += 1


def _block_clauses(tokens: list[Token], depths: list[int]):
    """Locate the top-level clauses of a single block.

    Returns (mapping clause -> (body_start, body_end), set-op start index or None).
    """
    if not tokens or not tokens[0].is_word("SELECT"):
        pos = tokens[0].start if tokens else 0
        raise ParseError("query must start with SELECT", pos, "SELECT")
    markers = list(_clause_markers(tokens, depths))
    setop_at = None
    if markers and markers[-1][0] == "SETOP":
        setop_at = markers.pop()[1]
    end_of_block = setop_at if setop_at is not None else len(tokens)
    spans: dict[str, tuple[int, int]] = {}
    last_rank = -1
    for n, (name, idx, width) in enumerate(markers):
        rank = _CLAUSE_ORDER.index(name)
        if name == "SELECT" and idx != 0:
            raise ParseError("unexpected SELECT", tokens[idx].start, "a clause keyword or set operator")
        if rank <= last_rank:
            raise ParseError(f"clause {name} out of order", tokens[idx].start, " / ".join(_CLAUSE_ORDER[last_rank + 1:]) or "end")
        last_rank = rank
        body_end = markers[n + 1][1] if n + 1 < len(markers) else end_of_block
        if body_end <= idx + width:
            raise ParseError(f"empty {name} clause", tokens[idx].end, "an expression")
        spans[name] = (idx + width, body_end)
    if "FROM" not in spans:
        raise ParseError("missing FROM clause", tokens[end_of_block - 1].end, "FROM")
    if setop_at is not None:
        after = setop_at + 1
        if after < len(tokens) and tokens[after].is_word("ALL"):
            after += 1
        if after >= len(tokens):
            raise ParseError("set operator without right-hand query", tokens[setop_at].end, "SELECT")
    return spans, setop_at


def split_clauses(sql: str) -> ClauseSet:
    """Decompose a SELECT query into its top-level clauses.

    Keywords nested inside parentheses never end an outer clause. Everything from
    the first top-level UNION/INTERSECT/EXCEPT onward is kept verbatim as
    ``trailing_set_op``.
    """
    tokens = _strip_semicolons(tokenize(sql))
    if not tokens:
        raise ParseError("empty query", 0, "SELECT")
    depths = _depths(tokens)
    spans, setop_at = _block_clauses(tokens, depths)
    parts = {}
    for name, (lo, hi) in spans.items():
        parts[_FIELD_FOR[name]] = f"{name} {_render(tokens[lo:hi], sql)}"
    if setop_at is not None:
        parts["trailing_set_op"] = _render(tokens[setop_at:], sql)
    return ClauseSet(**parts)


def _with_keyword(keyword: str, text: str) -> str:
    text = _collapse_whitespace(text).strip()
    m = re.match(r"\s+".join(keyword.split()) + r"\b", text, re.IGNORECASE)
    if m:
        return keyword + text[m.end():]
    return f"{keyword} {text}"


def assemble_clauses(cs: ClauseSet) -> str:
    """Join clauses in canonical order with single spaces.

    A clause given without its leading keyword gets one prepended, so model
    output such as ``FROM: singer`` assembles as well as ``FROM: FROM singer``.
    """
    if not (cs.select and cs.select.strip()) or not (cs.from_ and cs.from_.strip()):
        raise IncompleteClauseSet("SELECT and FROM clauses are required")
    parts = []
    for keyword in _CLAUSE_ORDER:
        value = getattr(cs, _FIELD_FOR[keyword])
        if value and value.strip():
            parts.append(_with_keyword(keyword, value))
    if cs.trailing_set_op and cs.trailing_set_op.strip():
        parts.append(_collapse_whitespace(cs.trailing_set_op).strip())
    return " ".join(parts)


# -- normalization --------------------------------------------------------------

_FENCE_RE = re.compile(r"\A```[ \t]*[A-Za-z0-9_+-]*[ \t]*\n?(.*?)\n?[ \t]*```\Z", re.DOTALL)
_LABEL_RE = re.compile(r"\A(?:final\s+)?(?:sql(?:\s+query)?|query|answer)\s*:\s*", re.IGNORECASE)


def _collapse_whitespace(text: str) -> str:
    out = []
    quote = None
    pending_space = False
    for ch in text:
        if quote:
            out.append(ch)
            if ch == quote:
                quote = None
            continue
        if ch.isspace():
            pending_space = True
            continue
        if pending_space and out:
            out.append(" ")
        pending_space = False
        out.append(ch)
        if ch in "'\"`":
            quote = ch
    return "".join(out)


def _normalize_once(text: str) -> str:
    text = text.strip()
    m = _FENCE_RE.match(text)
    if m:
        text = m.group(1).strip()
    text = _LABEL_RE.sub("", text, count=1)
    text = _collapse_whitespace(text).strip()
    while text.endswith(";"):
        text = text[:-1].rstrip()
    return text


def normalize_sql(raw: str) -> str:
    """Clean model output into bare SQL text.

    Strips a surrounding code fence and its language tag, a leading label such
    as ``SQL:`` or ``Final SQL:``, trailing semicolons, and collapses whitespace
    outside quoted literals. Idempotent.
    """
    text = raw
    while True:
        cleaned = _normalize_once(text)
        if cleaned == text:
            return cleaned
        text = cleaned


def is_order_sensitive(gold_sql: str) -> bool:
    """True iff the outermost query (or compound result) has an ORDER BY."""
    tokens = _strip_semicolons(tokenize(gold_sql))
    if not tokens:
        raise ParseError("empty query", 0, "SELECT")
    depths = _depths(tokens)
    if not tokens[0].is_word("SELECT"):
        raise ParseError("query must start with SELECT", tokens[0].start, "SELECT")
    for i, tok in enumerate(tokens[:-1]):
        if depths[i] == 0 and tok.is_word("ORDER") and tokens[i + 1].is_word("BY"):
            return True
    return False


# -- difficulty -------------------------------------------------------------------


@enum.unique
class DifficultyLevel(enum.Enum):
    EASY = "easy"
    MEDIUM = "medium"
    HARD = "hard"
    EXTRA = "extra"

    @property
    def rank(self) -> int:
        return _TIER_ORDER.index(self)

    def __lt__(self, other):
        if not isinstance(other, DifficultyLevel):
            return NotImplemented
        return self.rank < other.rank

    def __le__(self, other):
        if not isinstance(other, DifficultyLevel):
            return NotImplemented
        return self.rank <= other.rank

    def __gt__(self, other):
        if not isinstance(other, DifficultyLevel):
            return NotImplemented
        return self.rank > other.rank

    def __ge__(self, other):
        if not isinstance(other, DifficultyLevel):
            return NotImplemented
        return self.rank >= other.rank

    @property
    def label(self) -> str:
        return self.value.capitalize()


_TIER_ORDER = (DifficultyLevel.EASY, DifficultyLevel.MEDIUM, DifficultyLevel.HARD, DifficultyLevel.EXTRA)


@dataclass
class _Cond:
    not_op: bool
    like: bool
    nested: list[_Block]


@dataclass
class _Block:
    select_aggs: list[bool] = field(default_factory=list)
    table_units: int = 0
    from_conds: list[_Cond] = field(default_factory=list)
    from_conjs: list[str] = field(default_factory=list)
    where_conds: list[_Cond] = field(default_factory=list)
    where_conjs: list[str] = field(default_factory=list)
    group_aggs: list[bool] = field(default_factory=list)
    having_conds: list[_Cond] = field(default_factory=list)
    having_conjs: list[str] = field(default_factory=list)
    order_aggs: list[int] = field(default_factory=list)
    has_limit: bool = False
    set_op: _Block | None = None


def _split_top(tokens, depths, base, is_sep):
    """Split a token run at separators found at relative depth zero."""
    groups, cur = [], []
    for tok, d in zip(tokens, depths):
        if d == base and is_sep(tok):
            groups.append(cur)
            cur = []
        else:
            cur.append((tok, d))
    groups.append(cur)
    return [g for g in groups if g]


def _is_agg_call(run, i) -> bool:
    return run[i][0].kind == "word" and run[i][0].text.upper() in AGGREGATES and i + 1 < len(run) and run[i + 1][0].text == "("


def _subqueries(run, base):
    """Parse every parenthesised SELECT directly inside a token run."""
    nested = []
    i = 0
    while i < len(run):
        tok, d = run[i]
        if tok.text == "(" and d == base and i + 1 < len(run) and run[i + 1][0].is_word("SELECT"):
            j = i + 1
            while not (run[j][0].text == ")" and run[j][1] == base):
                j += 1
            inner = run[i + 1 : j]
            nested.append(_parse_block([t for t, _ in inner], [x - base - 1 for _, x in inner]))
            i = j
        i += 1
    return nested


def _conditions(run, base):
    """Split a boolean expression into condition units and AND/OR connectives."""
    conds, conjs, cur = [], [], []
    in_between = False
    for tok, d in run:
        if d == base and tok.is_word("BETWEEN"):
            in_between = True
        if d == base and tok.is_word("AND", "OR"):
            if tok.is_word("AND") and in_between:
                in_between = False
                cur.append((tok, d))
                continue
            conds.append(cur)
            conjs.append(tok.text.lower())
            cur = []
            continue
        cur.append((tok, d))
    conds.append(cur)
    out = []
    for unit in conds:
        # leading parentheses group a single condition; strip them
        while len(unit) >= 2 and unit[0][0].text == "(" and unit[-1][0].text == ")" and unit[0][1] == base and not unit[1][0].is_word("SELECT"):
            inner_ok = all(d > base for _, d in unit[1:-1])
            if not inner_ok:
                break
            unit = [(t, d - 1) for t, d in unit[1:-1]]
        not_op = any(
            d == base and t.is_word("NOT") and not (k > 0 and unit[k - 1][0].is_word("IS"))
            for k, (t, d) in enumerate(unit)
        )
        like = any(d == base and t.is_word("LIKE") for t, d in unit)
        out.append(_Cond(not_op, like, _subqueries(unit, base)))
    return out, conjs


def _parse_block(tokens: list[Token], depths: list[int]) -> _Block:
    spans, setop_at = _block_clauses(tokens, depths)
    blk = _Block()

    def run(name):
        lo, hi = spans[name]
        return list(zip(tokens[lo:hi], depths[lo:hi]))

    sel = run("SELECT")
    while sel and sel[0][0].is_word("DISTINCT", "ALL"):
        sel = sel[1:]
    for item in _split_top([t for t, _ in sel], [d for _, d in sel], 0, lambda t: t.text == ","):
        blk.select_aggs.append(_is_agg_call(item, 0))

    frm = run("FROM")
    units, on_parts, cur, in_on = 0, [], [], False
    for tok, d in frm:
        if d == 0 and (tok.text == "," or tok.is_word("JOIN")):
            if in_on:
                on_parts.append(cur)
            cur, in_on = [], False
            continue
        if d == 0 and tok.is_word(*JOIN_MODIFIERS):
            continue
        if d == 0 and tok.is_word("ON"):
            in_on, cur = True, []
            continue
        if not in_on and not cur:
            units += 1
        cur.append((tok, d))
    if in_on:
        on_parts.append(cur)
    blk.table_units = units
    for n, part in enumerate(on_parts):
        conds, conjs = _conditions(part, 0)
        if n:
            blk.from_conjs.append("and")
        blk.from_conds.extend(conds)
        blk.from_conjs.extend(conjs)

    if "WHERE" in spans:
        blk.where_conds, blk.where_conjs = _conditions(run("WHERE"), 0)
    if "GROUP BY" in spans:
        g = run("GROUP BY")
        for item in _split_top([t for t, _ in g], [d for _, d in g], 0, lambda t: t.text == ","):
            blk.group_aggs.append(_is_agg_call(item, 0))
    if "HAVING" in spans:
        blk.having_conds, blk.having_conjs = _conditions(run("HAVING"), 0)
    if "ORDER BY" in spans:
        o = run("ORDER BY")
        for item in _split_top([t for t, _ in o], [d for _, d in o], 0, lambda t: t.text == ","):
            calls = sum(1 for i, (_, d) in enumerate(item) if d == 0 and _is_agg_call(item, i))
            blk.order_aggs.append(min(calls, 2))
    blk.has_limit = "LIMIT" in spans
    if setop_at is not None:
        start = setop_at + 1
        if tokens[start].is_word("ALL"):
            start += 1
        blk.set_op = _parse_block(tokens[start:], depths[start:])
    return blk


def _component1(b: _Block) -> int:
    count = sum([bool(b.where_conds), bool(b.group_aggs), bool(b.order_aggs), b.has_limit])
    count += max(b.table_units - 1, 0)
    count += (b.from_conjs + b.where_conjs + b.having_conjs).count("or")
    count += sum(c.like for c in b.from_conds + b.where_conds + b.having_conds)
    return count


def _component2(b: _Block) -> int:
    nested = sum(min(len(c.nested), 2) for c in b.from_conds + b.where_conds + b.having_conds)
    return nested + (b.set_op is not None)


def _others(b: _Block) -> int:
    # Aggregate counting mirrors the official scorer bit for bit: WHERE units
    # count when negated and every HAVING connective counts as one.
    aggs = sum(b.select_aggs)
    aggs += sum(c.not_op for c in b.where_conds)
    aggs += sum(b.group_aggs)
    aggs += sum(b.order_aggs)
    aggs += len(b.having_conjs) + sum(c.not_op for c in b.having_conds)
    count = int(aggs > 1)
    count += len(b.select_aggs) > 1
    count += len(b.where_conds) > 1
    count += len(b.group_aggs) > 1
    return count


def hardness_components(sql: str) -> tuple[int, int, int]:
    """Return (component1, component2, others) counts for the outermost block."""
    tokens = _strip_semicolons(tokenize(sql))
    if not tokens:
        raise ParseError("empty query", 0, "SELECT")
    blk = _parse_block(tokens, _depths(tokens))
    return _component1(blk), _component2(blk), _others(blk)


def classify_difficulty(sql: str) -> DifficultyLevel:
    """Spider's official hardness tier for a query."""
    c1, c2, others = hardness_components(sql)
    if c1 <= 1 and others == 0 and c2 == 0:
        return DifficultyLevel.EASY
    if (others <= 2 and c1 <= 1 and c2 == 0) or (c1 <= 2 and others < 2 and c2 == 0):
        return DifficultyLevel.MEDIUM
    if (
        (others > 2 and c1 <= 2 and c2 == 0)
        or (2 < c1 <= 3 and others <= 2 and c2 == 0)
        or (c1 <= 1 and others == 0 and c2 <= 1)
    ):
        return DifficultyLevel.HARD
    return DifficultyLevel.EXTRA
