import json
import shutil

import pytest

from dnpsql.dataset import (
    Column,
    DatabaseSchema,
    ForeignKey,
    SchemaStyle,
    TableSchema,
    load_dataset,
    load_schemas,
    parse_schema_entry,
    serialize_schema,
    validate_dataset,
)
from dnpsql.errors import MalformedRecord, MissingFile, SchemaMismatch

GOLDEN = "fixtures/golden"


def test_load_dev(spider_root):
    ds = load_dataset(spider_root, "dev")
    assert len(ds.examples) == 5
    assert ds.examples[0].example_id == "dev_0"
    assert ds.examples[0].gold_sql == "SELECT count(*) FROM singer"
    assert ds.example("dev_3").db_id == "concert_singer"
    assert set(ds.schemas) == {"concert_singer", "department_management", "probe"}


def test_train_concatenates_both_files(spider_root):
    ds = load_dataset(spider_root, "train")
    spider = json.loads((spider_root / "train_spider.json").read_text())
    others = json.loads((spider_root / "train_others.json").read_text())
    assert len(ds.examples) == len(spider) + len(others)
    assert ds.examples[len(spider)].question == others[0]["question"]
    assert [e.example_id for e in ds.examples] == [f"train_{i}" for i in range(len(ds.examples))]


def test_suite_variants_discovered(spider_root):
    ds = load_dataset(spider_root, "dev")
    assert [p.name for p in ds.databases("concert_singer").suite] == ["v1.sqlite", "v2.sqlite"]
    assert ds.databases("probe").suite == ()


def test_schema_parse(spider_root):
    schema = load_schemas(spider_root)["concert_singer"]
    assert [t.name for t in schema.tables] == ["stadium", "singer", "concert", "singer_in_concert"]
    assert schema.table("singer").column("Age").declared_type == "number"
    assert schema.table("singer").column("Singer_ID").is_primary_key
    assert ForeignKey("concert", "Stadium_ID", "stadium", "Stadium_ID") in schema.foreign_keys


def test_validate_clean_and_dirty(spider_root, tmp_path):
    assert validate_dataset(load_dataset(spider_root, "mini20")) == []
    root = tmp_path / "root"
    shutil.copytree(spider_root, root)
    bad = [
        {"db_id": "probe", "question": "q1", "query": "SELECT nope FROM readings"},
        {"db_id": "probe", "question": "q2", "query": "SELECT id readings"},
    ]
    (root / "bad.json").write_text(json.dumps(bad))
    kinds = [(i.example_id, i.kind) for i in validate_dataset(load_dataset(root, "bad"))]
    assert kinds == [("bad_0", "execution"), ("bad_1", "parse"), ("bad_1", "execution")]


def test_missing_split_file(spider_root):
    with pytest.raises(MissingFile):
        load_dataset(spider_root, "nonexistent")


def test_unknown_db_id(spider_root, tmp_path):
    root = tmp_path / "root"
    shutil.copytree(spider_root, root)
    (root / "x.json").write_text(json.dumps([{"db_id": "nowhere", "question": "q", "query": "SELECT 1"}]))
    with pytest.raises(SchemaMismatch):
        load_dataset(root, "x")


def test_missing_database_file(spider_root, tmp_path):
    root = tmp_path / "root"
    shutil.copytree(spider_root, root)
    (root / "database" / "probe" / "probe.sqlite").unlink()
    (root / "x.json").write_text(json.dumps([{"db_id": "probe", "question": "q", "query": "SELECT 1"}]))
    with pytest.raises(MissingFile):
        load_dataset(root, "x")


@pytest.mark.parametrize(
    "records, index",
    [
        ([{"db_id": "probe", "question": "q"}], 0),
        ([{"db_id": "probe", "question": "q", "query": "SELECT 1"}, "oops"], 1),
        ([{"db_id": "probe", "question": "q", "query": "  "}], 0),
    ],
)
def test_malformed_records(spider_root, tmp_path, records, index):
    root = tmp_path / "root"
    shutil.copytree(spider_root, root)
    (root / "x.json").write_text(json.dumps(records))
    with pytest.raises(MalformedRecord) as err:
        load_dataset(root, "x")
    assert err.value.index == index


def test_malformed_json(spider_root, tmp_path):
    root = tmp_path / "root"
    shutil.copytree(spider_root, root)
    (root / "x.json").write_text('[{"db_id": ')
    with pytest.raises(MalformedRecord):
        load_dataset(root, "x")


def test_schema_entry_errors():
    entry = {
        "db_id": "d",
        "table_names_original": ["t"],
        "column_names_original": [[-1, "*"], [0, "a"], [0, "b"]],
        "column_types": ["text", "number", "text"],
        "primary_keys": [1],
        "foreign_keys": [[2, 9]],
    }
    with pytest.raises(MalformedRecord):
        parse_schema_entry(entry)
    entry["foreign_keys"] = []
    entry["column_names_original"].append([0, "a"])
    entry["column_types"].append("text")
    with pytest.raises(SchemaMismatch):
        parse_schema_entry(entry)


def test_schema_invariants():
    with pytest.raises(SchemaMismatch):
        TableSchema("t", ())
    t = TableSchema("t", (Column("a", "text"),))
    with pytest.raises(SchemaMismatch):
        DatabaseSchema("d", (t, t))
    with pytest.raises(SchemaMismatch):
        DatabaseSchema("d", (t,), (ForeignKey("t", "a", "u", "b"),))


def test_serialize_goldens(spider_root, request):
    golden = request.path.parent / GOLDEN
    schemas = load_schemas(spider_root)
    compact = serialize_schema(schemas["department_management"], SchemaStyle.COMPACT)
    assert compact + "\n" == (golden / "department_management.compact.txt").read_text(encoding="utf-8")
    ddl = serialize_schema(schemas["concert_singer"], "ddl")
    assert ddl + "\n" == (golden / "concert_singer.ddl.txt").read_text(encoding="utf-8")


def test_ddl_quotes_awkward_identifiers():
    schema = DatabaseSchema("d", (TableSchema("my table", (Column("order", "text"), Column('a"b', "number"))),))
    text = serialize_schema(schema, "ddl")
    assert 'CREATE TABLE "my table"' in text
    assert '"a""b" number' in text
    assert '"order" text' in text
