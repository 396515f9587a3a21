"""
Loading a dataset and taking SQL apart
======================================

Schemas are serialized for prompts, gold queries are split into clauses and
put back together, and each gold query gets a difficulty tier.
"""

from _fixture import mini_root

from dnpsql import assemble_clauses, classify_difficulty, load_dataset, serialize_schema, split_clauses, validate_dataset

root = mini_root()
ds = load_dataset(root, "mini20")
print(len(ds.examples), "questions over", sorted({e.db_id for e in ds.examples}))
print("issues:", validate_dataset(ds))

# two schema renderings: one line per table, or full DDL
schema = ds.schemas["department_management"]
print(serialize_schema(schema, "compact"))
print(serialize_schema(schema, "ddl"))

# clause extraction keeps nested queries inside their clause
ex = ds.examples[10]
clauses = split_clauses(ex.gold_sql)
for name, text in clauses.present().items():
    print(f"{name:>10}: {text}")
print("reassembled:", assemble_clauses(clauses))

# tiers per question
for e in ds.examples[:6]:
    print(classify_difficulty(e.gold_sql).label.ljust(6), e.gold_sql)
