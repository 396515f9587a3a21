"""
Prompting strategies
====================

Standard, chain-of-thought and the three divide-and-prompt methods, zero-shot
and few-shot, plus how responses are parsed back into SQL.
"""

from _fixture import mini_root

from dnpsql import PromptStrategy, build_prompt, build_refine_prompt, load_dataset, parse_response, serialize_schema
from dnpsql.demos import attach_schemas, load_corpus

root = mini_root()
ds = load_dataset(root, "dev")
ex = ds.examples[0]
schema = serialize_schema(ds.schemas[ex.db_id])

# hand-written demonstrations, each shown with its own database schema
corpus = [d for d in load_corpus() if d.db_id in ds.schemas]
demos = attach_schemas(corpus[:2], {d.db_id: serialize_schema(ds.schemas[d.db_id]) for d in corpus[:2]})

for kind in ("standard", "cot", "cc", "sl"):
    prompt = build_prompt(PromptStrategy(kind, demos=demos), ex.question, schema)
    print(f"==== {kind} few-shot ({len(prompt)} chars)\n{prompt[-400:]}\n")

# zero-shot clause-by-clause with the SELECT clause written first
print(build_prompt(PromptStrategy("cc", clause_order="select-first"), ex.question, schema))

# generate-and-refine: the second prompt carries the first answer
print(build_refine_prompt(ex.question, schema, "SELECT count(*) FROM singers"))

# parsing tolerates fences, labels and clause-by-clause steps
cc = PromptStrategy("cc")
reply = "FROM: FROM singer\nWHERE: WHERE age > 30\nSELECT: SELECT count(*)"
print(parse_response(cc, reply))
print(parse_response(PromptStrategy(), "```sql\nSELECT name FROM singer;\n```").final_sql)
