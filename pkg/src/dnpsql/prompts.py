"""Prompt construction for every strategy and parsing of model answers.

A prompt is laid out as: optional worked demonstrations, the target schema,
the question, then the strategy's instruction block. Instruction wording lives
in ``templates/v1``; answers in demonstrations use the same line formats that
:func:`parse_response` reads back, so every demonstration parses to its SQL.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from string import Template

from .demos import Demonstration
from .errors import EmptyInitialSql, IncompatibleDemos, IncompleteClauseSet, NoSqlFound
from .sqlkit import ClauseSet, assemble_clauses, normalize_sql

TEMPLATE_VERSION = "v1"


class StrategyKind(str, enum.Enum):
    STANDARD = "standard"
    COT = "cot"
    CC = "cc"
    SL = "sl"
    GR = "gr"

    @classmethod
    def _missing_(cls, value):
        # report labels such as "CC-DnP"; RL-DnP and LR-DnP name the schema-linking method too
        if isinstance(value, str):
            label = value.strip().lower().removesuffix("-dnp")
            label = {"rl": "sl", "lr": "sl", "normal-cot": "cot"}.get(label, label)
            if label != value:
                return cls.__members__.get(label.upper())
        return None


class ClauseOrder(str, enum.Enum):
    SELECT_FIRST = "select-first"
    FROM_FIRST = "from-first"
    SELECT_LAST = "select-last"

    @property
    def clauses(self) -> tuple[str, ...]:
        return _ORDERS[self]


_ORDERS = {
    ClauseOrder.SELECT_FIRST: ("SELECT", "FROM", "WHERE", "GROUP BY", "HAVING", "ORDER BY", "LIMIT"),
    ClauseOrder.FROM_FIRST: ("FROM", "SELECT", "WHERE", "GROUP BY", "HAVING", "ORDER BY", "LIMIT"),
    ClauseOrder.SELECT_LAST: ("FROM", "WHERE", "GROUP BY", "HAVING", "ORDER BY", "LIMIT", "SELECT"),
}

_CLAUSE_HINTS = {
    "SELECT": "the columns and aggregates to return",
    "FROM": "the tables needed and the conditions that join them",
    "WHERE": "conditions that filter individual rows",
    "GROUP BY": "the columns used to form groups",
    "HAVING": "conditions on whole groups",
    "ORDER BY": "the sort keys and direction",
    "LIMIT": "how many rows to keep",
}


class LinkGranularity(str, enum.Enum):
    EXACT = "exact"
    TABLES_THEN_COLUMNS = "tables-then-columns"
    TABLES_ALL_COLUMNS = "tables-all-columns"


_NAMES = {
    StrategyKind.STANDARD: "Standard",
    StrategyKind.COT: "Normal CoT",
    StrategyKind.CC: "CC-DnP",
    StrategyKind.SL: "SL-DnP",
    StrategyKind.GR: "GR-DnP",
}


@dataclass(frozen=True)
class PromptStrategy:
    """One prompting method plus its shot mode.

    ``demos`` empty means zero-shot. For GR, ``stage1`` is the strategy that
    writes the initial query and ``demos`` feed the refine stage.
    """

    kind: StrategyKind = StrategyKind.STANDARD
    clause_order: ClauseOrder = ClauseOrder.SELECT_LAST
    granularity: LinkGranularity = LinkGranularity.TABLES_ALL_COLUMNS
    stage1: PromptStrategy | None = None
    demos: tuple[Demonstration, ...] = field(default=(), hash=False)

    def __post_init__(self):
        object.__setattr__(self, "kind", StrategyKind(self.kind))
        object.__setattr__(self, "clause_order", ClauseOrder(self.clause_order))
        object.__setattr__(self, "granularity", LinkGranularity(self.granularity))
        object.__setattr__(self, "demos", tuple(self.demos))
        if self.kind is StrategyKind.GR:
            if self.stage1 is None:
                object.__setattr__(self, "stage1", PromptStrategy(demos=self.demos))
            if self.stage1.kind is StrategyKind.GR:
                raise ValueError("generate-and-refine cannot refine its own output twice")
        elif self.stage1 is not None:
            raise ValueError("stage1 only applies to generate-and-refine")

    @property
    def shot_mode(self) -> str:
        return "few" if self.demos else "zero"

    @property
    def reasoning_key(self) -> str | None:
        if self.kind is StrategyKind.SL:
            return f"sl:{self.granularity.value}"
        if self.kind is StrategyKind.GR:
            return self.stage1.reasoning_key
        if self.kind is StrategyKind.STANDARD:
            return None
        return self.kind.value

    @property
    def label(self) -> str:
        name = _NAMES[self.kind]
        if self.kind is StrategyKind.CC and self.clause_order is not ClauseOrder.SELECT_LAST:
            name += f" ({self.clause_order.value})"
        if self.kind is StrategyKind.SL and self.granularity is not LinkGranularity.TABLES_ALL_COLUMNS:
            name += f" ({self.granularity.value})"
        if self.kind is StrategyKind.GR and self.stage1.kind is not StrategyKind.STANDARD:
            name = f"{self.stage1.label.split(' [')[0]} + GR-DnP"
        if self.shot_mode == "zero":
            name += " [zero-shot]"
        return name

    def describe(self) -> dict:
        d = {
            "kind": self.kind.value,
            "shots": self.shot_mode,
            "demonstrations": [demo.question for demo in self.demos],
        }
        if self.kind is StrategyKind.CC:
            d["clause_order"] = self.clause_order.value
        if self.kind is StrategyKind.SL:
            d["link_granularity"] = self.granularity.value
        if self.kind is StrategyKind.GR:
            d["stage1"] = self.stage1.describe()
        return d


@lru_cache(maxsize=None)
def load_template(name: str) -> str:
    path = resources.files("dnpsql") / "templates" / TEMPLATE_VERSION / f"{name}.txt"
    return path.read_text(encoding="utf-8").rstrip("\n")


def instruction_block(strategy: PromptStrategy) -> str:
    kind = strategy.kind
    if kind is StrategyKind.GR:
        return instruction_block(strategy.stage1)
    if kind is StrategyKind.CC:
        clauses = strategy.clause_order.clauses
        steps = "\n".join(f"{i}. {kw} clause: {_CLAUSE_HINTS[kw]}." for i, kw in enumerate(clauses, 1))
        return Template(load_template("cc")).substitute(steps=steps, combine_step=len(clauses) + 1)
    if kind is StrategyKind.SL:
        return load_template(f"sl_{strategy.granularity.value}")
    return load_template(kind.value)


# -- answer formats ------------------------------------------------------------------


def _clause_keyword(text: str) -> str | None:
    m = re.match(r"\s*(SELECT|FROM|WHERE|GROUP\s+BY|HAVING|ORDER\s+BY|LIMIT)\b", text, re.IGNORECASE)
    return " ".join(m.group(1).upper().split()) if m else None


def answer_text(strategy: PromptStrategy, demo: Demonstration) -> str:
    """A demonstration's worked answer, in the strategy's own output format."""
    if strategy.kind is StrategyKind.GR:
        return answer_text(strategy.stage1, demo)
    sql = normalize_sql(demo.sql)
    if strategy.kind is StrategyKind.STANDARD:
        return f"SQL: {sql}"
    steps = demo.steps(strategy.reasoning_key)
    if not steps:
        raise IncompatibleDemos(f"demonstration {demo.question!r} has no {strategy.reasoning_key!r} reasoning")
    if strategy.kind is StrategyKind.CC:
        by_clause = {}
        for step in steps:
            kw = _clause_keyword(step)
            if kw is None:
                raise IncompatibleDemos(f"clause step {step!r} does not start with a clause keyword")
            by_clause[kw] = step.strip()
        lines = [f"{i}. {kw} clause: {by_clause.get(kw, 'none')}" for i, kw in enumerate(strategy.clause_order.clauses, 1)]
    elif strategy.kind is StrategyKind.COT:
        lines = ["Let's think step by step."] + [f"{i}. {s}" for i, s in enumerate(steps, 1)]
    else:
        lines = [f"{i}. {s}" for i, s in enumerate(steps, 1)]
    return "\n".join(lines + [f"Final SQL: {sql}"])


def _task(schema_text: str, question: str) -> str:
    return f"Database schema:\n{schema_text}\nQuestion: {question}"


def _demo_section(blocks: list[str]) -> str:
    body = "\n\n".join(f"Example {i}\n{b}" for i, b in enumerate(blocks, 1))
    return f"Here are some solved examples.\n\n{body}\n\nNow solve the following.\n\n"


def build_prompt(strategy: PromptStrategy, question: str, schema_text: str) -> str:
    """Prompt text for one question; for GR this is the stage-1 prompt."""
    if not schema_text.strip():
        raise ValueError("schema_text is empty")
    if strategy.kind is StrategyKind.GR:
        return build_prompt(strategy.stage1, question, schema_text)
    parts = []
    if strategy.demos:
        blocks = []
        for demo in strategy.demos:
            if not demo.schema_text:
                raise IncompatibleDemos(f"demonstration {demo.question!r} carries no schema text")
            blocks.append(f"{_task(demo.schema_text, demo.question)}\nAnswer:\n{answer_text(strategy, demo)}")
        parts.append(_demo_section(blocks))
    parts.append(f"{_task(schema_text, question)}\n\n{instruction_block(strategy)}\nAnswer:\n")
    return "".join(parts)


def refine_answer_text(demo: Demonstration) -> str:
    steps = [f"{i}. {s}" for i, s in enumerate(demo.refine.reasoning, 1)]
    return "\n".join(steps + [f"Final SQL: {normalize_sql(demo.sql)}"])


def build_refine_prompt(question: str, schema_text: str, initial_sql: str, demos: tuple[Demonstration, ...] = ()) -> str:
    """Stage-2 prompt asking the model to check and correct ``initial_sql``.

    With demonstrations (few-shot), the first one that carries a refine
    example is shown as a worked wrong-to-fixed correction.
    """
    if not initial_sql or not initial_sql.strip():
        raise EmptyInitialSql("stage-1 produced no SQL to refine")
    parts = []
    if demos:
        worked = next((d for d in demos if d.refine is not None), None)
        if worked is None:
            raise IncompatibleDemos("few-shot refinement needs a demonstration with a refine example")
        if not worked.schema_text:
            raise IncompatibleDemos(f"demonstration {worked.question!r} carries no schema text")
        parts.append(
            _demo_section(
                [
                    f"{_task(worked.schema_text, worked.question)}\nInitial SQL: {worked.refine.initial_sql}\n"
                    f"Answer:\n{refine_answer_text(worked)}"
                ]
            )
        )
    parts.append(f"{_task(schema_text, question)}\nInitial SQL: {initial_sql}\n\n{load_template('refine')}\nAnswer:\n")
    return "".join(parts)


# -- response parsing -----------------------------------------------------------------


@dataclass(frozen=True)
class ParsedResponse:
    final_sql: str
    raw: str
    linked_schema: tuple[str, ...] | None = None
    clauses: ClauseSet | None = None


_FENCE = re.compile(r"```(.*?)```", re.DOTALL)
_LABEL_LINE = re.compile(r"^\s*(?:\d+[.)]\s*)?(?:final\s+)?sql(?:\s+query)?\s*:\s*(.*)$", re.IGNORECASE)
_CLAUSE_LINE = re.compile(
    r"^\s*(?:(?:step\s*)?\d+\s*[.):-]\s*)?(SELECT|FROM|WHERE|GROUP\s+BY|HAVING|ORDER\s+BY|LIMIT)"
    r"(?:\s+clause)?\s*:\s*(.*)$",
    re.IGNORECASE,
)
_LINK_LINE = re.compile(
    r"^\s*(?:\d+[.)]\s*)?relevant\s+(?:tables?|columns?)(?:\s+of\s+[^:]+)?\s*:\s*(.+)$", re.IGNORECASE
)
_EMPTY_CLAUSE = {"", "none", "n/a", "-", "null", "not needed"}
_CLAUSE_FIELDS = {
    "SELECT": "select",
    "FROM": "from_",
    "WHERE": "where_",
    "GROUP BY": "group_by",
    "HAVING": "having",
    "ORDER BY": "order_by",
    "LIMIT": "limit",
}


def _fence_body(block: str) -> str:
    first, sep, rest = block.partition("\n")
    if sep and re.fullmatch(r"[A-Za-z0-9_+-]*", first.strip()):
        return rest
    return block


def _from_label(lines: list[str]) -> str | None:
    for idx in range(len(lines) - 1, -1, -1):
        m = _LABEL_LINE.match(lines[idx])
        if not m:
            continue
        group = [m.group(1)]
        for line in lines[idx + 1 :]:
            if not line.strip():
                if any(g.strip() for g in group):
                    break
                continue
            group.append(line)
        text = "\n".join(group).strip()
        if text:
            return text
    return None


def _clauses_from_steps(lines: list[str]) -> ClauseSet | None:
    found = {}
    for line in lines:
        m = _CLAUSE_LINE.match(line)
        if m:
            kw = " ".join(m.group(1).upper().split())
            value = m.group(2).strip().rstrip(".;").strip()
            if value.lower() in _EMPTY_CLAUSE:
                found.pop(_CLAUSE_FIELDS[kw], None)
            else:
                found[_CLAUSE_FIELDS[kw]] = value
    if "select" not in found or "from_" not in found:
        return None
    return ClauseSet(**found)


def _split_items(text: str) -> list[str]:
    items, depth, cur = [], 0, []
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == "," and depth == 0:
            items.append("".join(cur).strip())
            cur = []
        else:
            cur.append(ch)
    items.append("".join(cur).strip())
    return [i.rstrip(".") for i in items if i]


def parse_response(strategy: PromptStrategy, raw: str) -> ParsedResponse:
    """Extract the final SQL from a model answer.

    Tried in order: the last fenced code block; the last line group after a
    ``Final SQL:`` or ``SQL:`` label; for clause-by-clause, the per-clause step
    lines assembled in canonical order; finally the text from the first
    ``SELECT`` onward. Raises NoSqlFound when none applies.
    """
    lines = raw.splitlines()
    clauses = _clauses_from_steps(lines) if strategy.kind is StrategyKind.CC else None
    linked = None
    if strategy.kind is StrategyKind.SL or (strategy.kind is StrategyKind.GR and strategy.stage1.kind is StrategyKind.SL):
        items = [item for line in lines if (m := _LINK_LINE.match(line)) for item in _split_items(m.group(1))]
        linked = tuple(items) if items else None

    candidate = None
    fences = [b for b in (_fence_body(f) for f in _FENCE.findall(raw)) if b.strip()]
    if fences:
        candidate = fences[-1]
    if candidate is None:
        candidate = _from_label(lines)
    if candidate is None and clauses is not None:
        try:
            candidate = assemble_clauses(clauses)
        except IncompleteClauseSet:
            candidate = None
    if candidate is None:
        m = re.search(r"\bSELECT\b", raw, re.IGNORECASE)
        if m:
            candidate = raw[m.start():]
    sql = normalize_sql(candidate) if candidate else ""
    if not sql:
        raise NoSqlFound(raw)
    return ParsedResponse(sql, raw, linked, clauses)
