"""
Execution and grading
=====================

Predictions are run against SQLite and compared with gold results as
multisets (or lists under a top-level ORDER BY). Test-suite accuracy reruns
both queries on perturbed copies of each database.
"""

from _fixture import mini_root

from dnpsql import DatasetExample, evaluate_example, execute_sql, results_equal
from dnpsql.grading import DatabaseSet, aggregate

root = mini_root()
probe = root / "database" / "probe" / "probe.sqlite"

a = execute_sql(probe, "SELECT x, y FROM pairs")
b = execute_sql(probe, "SELECT x, y FROM pairs ORDER BY y DESC")
print(a.rows, b.rows, results_equal(a, b, order_sensitive=False))

# float noise within 1e-6 still counts as equal
c = execute_sql(probe, "SELECT 0.1 + 0.2")
d = execute_sql(probe, "SELECT 0.3")
print(c.rows, d.rows, results_equal(c, d, order_sensitive=False))

db = "concert_singer"
suite = tuple(sorted((root / "database_suite" / db).glob("*.sqlite")))
dbs = DatabaseSet(root / "database" / db / f"{db}.sqlite", suite)
ex = DatasetExample("demo_0", db, "How many singers are older than 33?", "SELECT count(*) FROM singer WHERE age > 33")

outcomes = [
    evaluate_example(ex, "SELECT count(*) FROM singer WHERE age > 33", dbs),
    evaluate_example(ex, "SELECT count(*) FROM singer WHERE age > 38", dbs),  # right by coincidence
    evaluate_example(ex, "SELECT count(*) FROM singers", dbs),
]
for o in outcomes:
    print(o.valid, o.execution_match, o.test_suite_match, o.error)

m = aggregate([outcomes], "three tries").strategies[0].mean["all"]
print(f"VA {m.va:.1f}  EX {m.ex:.1f}  TS {m.ts:.1f}")
