"""Loading Spider-layout benchmarks and rendering schemas as prompt text.

Expected layout under the dataset root::

    tables.json                      schema manifest
    train_spider.json, dev.json      split files
    database/<db_id>/<db_id>.sqlite  one SQLite file per database
    database_suite/<db_id>/*.sqlite  optional test-suite variants
"""

from __future__ import annotations

import enum
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

from .errors import DnPError, MalformedRecord, MissingFile, ParseError, SchemaMismatch
from .execution import DEFAULT_ROW_CAP, execute_sql
from .grading import DatabaseSet
from .sqlkit import KEYWORDS, split_clauses

SPLIT_FILES = {
    "train": ("train_spider.json", "train_others.json"),
    "dev": ("dev.json",),
}


@dataclass(frozen=True)
class Column:
    name: str
    declared_type: str
    is_primary_key: bool = False


@dataclass(frozen=True)
class TableSchema:
    name: str
    columns: tuple[Column, ...]

    def __post_init__(self):
        if not self.columns:
            raise SchemaMismatch(f"table {self.name!r} has no columns")
        seen = set()
        for col in self.columns:
            key = col.name.lower()
            if key in seen:
                raise SchemaMismatch(f"duplicate column {col.name!r} in table {self.name!r}")
            seen.add(key)

    def column(self, name: str) -> Column | None:
        for col in self.columns:
            if col.name.lower() == name.lower():
                return col
        return None


@dataclass(frozen=True)
class ForeignKey:
    table: str
    column: str
    ref_table: str
    ref_column: str


@dataclass(frozen=True)
class DatabaseSchema:
    db_id: str
    tables: tuple[TableSchema, ...]
    foreign_keys: tuple[ForeignKey, ...] = ()

    def __post_init__(self):
        names = [t.name.lower() for t in self.tables]
        if len(set(names)) != len(names):
            raise SchemaMismatch(f"{self.db_id}: duplicate table names")
        for fk in self.foreign_keys:
            for table, column in ((fk.table, fk.column), (fk.ref_table, fk.ref_column)):
                t = self.table(table)
                if t is None or t.column(column) is None:
                    raise SchemaMismatch(f"{self.db_id}: foreign key endpoint {table}.{column} does not exist")

    def table(self, name: str) -> TableSchema | None:
        for t in self.tables:
            if t.name.lower() == name.lower():
                return t
        return None


@dataclass(frozen=True)
class DatasetExample:
    example_id: str
    db_id: str
    question: str
    gold_sql: str


@dataclass(frozen=True)
class Dataset:
    split_name: str
    examples: tuple[DatasetExample, ...]
    schemas: dict[str, DatabaseSchema] = field(hash=False)
    root: Path | None = None

    def db_path(self, db_id: str) -> Path:
        return Path(self.root) / "database" / db_id / f"{db_id}.sqlite"

    def databases(self, db_id: str) -> DatabaseSet:
        suite_dir = Path(self.root) / "database_suite" / db_id
        suite = tuple(sorted(suite_dir.glob("*.sqlite"))) if suite_dir.is_dir() else ()
        return DatabaseSet(self.db_path(db_id), suite)

    def example(self, example_id: str) -> DatasetExample:
        for ex in self.examples:
            if ex.example_id == example_id:
                return ex
        raise KeyError(example_id)


# -- loading ------------------------------------------------------------------------


def _read_json(path: Path):
    if not path.is_file():
        raise MissingFile(path)
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise MalformedRecord(f"line {exc.lineno}", exc.msg, str(path)) from None


def _flatten_keys(keys) -> list[int]:
    out = []
    for k in keys:
        out.extend(_flatten_keys(k) if isinstance(k, list) else [k])
    return out


def parse_schema_entry(entry: dict, index: int = 0) -> DatabaseSchema:
    """Build a DatabaseSchema from one ``tables.json`` object."""
    try:
        db_id = entry["db_id"]
        table_names = entry["table_names_original"]
        columns = entry["column_names_original"]
        types = entry["column_types"]
        pks = set(_flatten_keys(entry.get("primary_keys", [])))
        fks = entry.get("foreign_keys", [])
    except (KeyError, TypeError) as exc:
        raise MalformedRecord(index, f"schema entry missing field {exc}", "tables.json") from None
    if len(types) != len(columns):
        raise MalformedRecord(index, "column_types and column_names_original differ in length", "tables.json")
    per_table: list[list[Column]] = [[] for _ in table_names]
    owner = {}
    for col_index, ((table_index, name), ctype) in enumerate(zip(columns, types)):
        if table_index < 0:
            continue  # the "*" pseudo-column
        if table_index >= len(table_names):
            raise MalformedRecord(index, f"column {name!r} references table {table_index}", "tables.json")
        per_table[table_index].append(Column(name, ctype, col_index in pks))
        owner[col_index] = (table_names[table_index], name)
    tables = tuple(TableSchema(n, tuple(cols)) for n, cols in zip(table_names, per_table))
    foreign = []
    for pair in fks:
        src, dst = pair
        if src not in owner or dst not in owner:
            raise MalformedRecord(index, f"foreign key {pair} references unknown column", "tables.json")
        foreign.append(ForeignKey(*owner[src], *owner[dst]))
    return DatabaseSchema(db_id, tables, tuple(foreign))


def load_schemas(root: str | Path) -> dict[str, DatabaseSchema]:
    raw = _read_json(Path(root) / "tables.json")
    if not isinstance(raw, list):
        raise MalformedRecord(0, "tables.json must hold a JSON array", "tables.json")
    schemas = {}
    for i, entry in enumerate(raw):
        schema = parse_schema_entry(entry, i)
        if schema.db_id in schemas:
            raise MalformedRecord(i, f"duplicate db_id {schema.db_id!r}", "tables.json")
        schemas[schema.db_id] = schema
    return schemas


def split_files(root: Path, split: str) -> list[Path]:
    names = SPLIT_FILES.get(split, (f"{split}.json",))
    first = root / names[0]
    if not first.is_file():
        raise MissingFile(first)
    # extra files (train_others.json) are optional
    return [first] + [root / n for n in names[1:] if (root / n).is_file()]


def load_dataset(root: str | Path, split: str) -> Dataset:
    """Load one split of a Spider-layout benchmark.

    The ``train`` split concatenates ``train_spider.json`` and, when present,
    ``train_others.json``. Examples keep their on-disk order; ids are
    ``<split>_<index>``.
    """
    root = Path(root)
    files = split_files(root, split)
    schemas = load_schemas(root)
    examples = []
    for path in files:
        records = _read_json(path)
        if not isinstance(records, list):
            raise MalformedRecord(0, "split file must hold a JSON array", str(path))
        for offset, rec in enumerate(records):
            if not isinstance(rec, dict):
                raise MalformedRecord(offset, "record is not an object", str(path))
            missing = [k for k in ("db_id", "question", "query") if not isinstance(rec.get(k), str)]
            if missing:
                raise MalformedRecord(offset, f"missing or non-string field(s): {', '.join(missing)}", str(path))
            if not rec["query"].strip():
                raise MalformedRecord(offset, "empty gold query", str(path))
            if rec["db_id"] not in schemas:
                raise SchemaMismatch(f"{path.name} record {offset}: unknown db_id {rec['db_id']!r}")
            idx = len(examples)
            examples.append(DatasetExample(f"{split}_{idx}", rec["db_id"], rec["question"], rec["query"]))
    ds = Dataset(split, tuple(examples), schemas, root)
    for db_id in sorted({ex.db_id for ex in examples}):
        if not ds.db_path(db_id).is_file():
            raise MissingFile(ds.db_path(db_id))
    return ds


# -- validation -----------------------------------------------------------------------


@dataclass(frozen=True)
class Issue:
    example_id: str
    kind: str  # "unknown_db" | "parse" | "execution"
    detail: str


def validate_dataset(ds: Dataset, timeout: float = 30.0) -> list[Issue]:
    """Check every example's database and gold query; an empty list means clean."""
    issues = []
    for ex in ds.examples:
        if ex.db_id not in ds.schemas or ds.root is None or not ds.db_path(ex.db_id).is_file():
            issues.append(Issue(ex.example_id, "unknown_db", f"unknown database {ex.db_id!r}"))
            continue
        try:
            split_clauses(ex.gold_sql)
        except ParseError as exc:
            issues.append(Issue(ex.example_id, "parse", str(exc)))
        try:
            execute_sql(ds.db_path(ex.db_id), ex.gold_sql, timeout, DEFAULT_ROW_CAP)
        except DnPError as exc:
            issues.append(Issue(ex.example_id, "execution", f"{type(exc).__name__}: {exc}"))
    return issues


# -- schema rendering -------------------------------------------------------------------


class SchemaStyle(str, enum.Enum):
    COMPACT = "compact"
    DDL = "ddl"


_PLAIN_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")


def _ident(name: str) -> str:
    if _PLAIN_IDENT.match(name) and name.upper() not in KEYWORDS:
        return name
    return '"' + name.replace('"', '""') + '"'


def serialize_schema(schema: DatabaseSchema, style: SchemaStyle | str = SchemaStyle.COMPACT) -> str:
    """Render a schema as prompt text.

    ``compact`` gives one ``table(col, ...)`` line per table followed by a
    ``foreign keys:`` block of ``a.x = b.y`` lines; ``ddl`` reconstructs
    ``CREATE TABLE`` statements with types and keys.
    """
    style = SchemaStyle(style)
    if style is SchemaStyle.COMPACT:
        lines = [f"{t.name}({', '.join(c.name for c in t.columns)})" for t in schema.tables]
        lines.append("foreign keys:")
        lines.extend(f"{fk.table}.{fk.column} = {fk.ref_table}.{fk.ref_column}" for fk in schema.foreign_keys)
        return "\n".join(lines)

    blocks = []
    for t in schema.tables:
        body = [f"  {_ident(c.name)} {c.declared_type}" for c in t.columns]
        pk = [_ident(c.name) for c in t.columns if c.is_primary_key]
        if pk:
            body.append(f"  PRIMARY KEY ({', '.join(pk)})")
        for fk in schema.foreign_keys:
            if fk.table == t.name:
                body.append(f"  FOREIGN KEY ({_ident(fk.column)}) REFERENCES {_ident(fk.ref_table)}({_ident(fk.ref_column)})")
        blocks.append(f"CREATE TABLE {_ident(t.name)} (\n" + ",\n".join(body) + "\n);")
    return "\n\n".join(blocks)
