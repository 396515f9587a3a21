"""Builds the miniature Spider-layout dataset used by the tests.

``materialize(dest)`` creates the SQLite files (and test-suite variants) from
the SQL scripts under ``spider_mini/sql``. Running this file as a script
rewrites the checked-in JSON artifacts: ``tables.json``, the split files and
the replay caches under ``replay/``. The caches hold hand-constructed
responses; only their prompts (and therefore keys) come from the harness.
"""

from __future__ import annotations

import json
import random
import shutil
import sqlite3
import sys
import tempfile
from dataclasses import replace
from pathlib import Path

HERE = Path(__file__).resolve().parent
MINI = HERE / "spider_mini"
SQL_DIR = MINI / "sql"
REPLAY = HERE / "replay"
DB_IDS = ("concert_singer", "department_management", "probe")
FIXED_TIME = "2024-01-01T00:00:00+00:00"

# -- mini20: 20 examples, hand-tiered, with constructed responses ------------------
# kind: "ok" answers with the gold query (re-cased), "wrong" with a valid query whose
# result differs, "invalid" with something that cannot execute or holds no SQL.
MINI20 = [
    dict(db="concert_singer", tier="easy", kind="ok",
         q="How many singers do we have?",
         sql="SELECT count(*) FROM singer"),
    dict(db="concert_singer", tier="easy", kind="wrong",
         q="What are the names of all the stadiums?",
         sql="SELECT name FROM stadium",
         response="SQL: SELECT location FROM stadium"),
    dict(db="concert_singer", tier="medium", kind="ok",
         q="What is the average, minimum, and maximum age of all singers from France?",
         sql="SELECT avg(age) , min(age) , max(age) FROM singer WHERE country = 'France'"),
    dict(db="concert_singer", tier="medium", kind="invalid",
         q="Show the name and the release year of the song by the youngest singer.",
         sql="SELECT song_name , song_release_year FROM singer ORDER BY age LIMIT 1",
         response="SQL: SELECT song_name, release_year FROM singer ORDER BY age LIMIT 1"),
    dict(db="concert_singer", tier="easy", kind="ok",
         q="What are all distinct countries where singers above age 20 are from?",
         sql="SELECT DISTINCT country FROM singer WHERE age > 20"),
    dict(db="concert_singer", tier="medium", kind="ok",
         q="Show all countries and the number of singers in each country.",
         sql="SELECT country , count(*) FROM singer GROUP BY country"),
    dict(db="concert_singer", tier="hard", kind="ok",
         q="List all song names by singers above the average age.",
         sql="SELECT song_name FROM singer WHERE age > (SELECT avg(age) FROM singer)"),
    dict(db="department_management", tier="easy", kind="ok",
         q="Show the names of heads born in California.",
         sql="SELECT name FROM head WHERE born_state = 'California'"),
    dict(db="concert_singer", tier="medium", kind="wrong",
         q="How many concerts are there in year 2014 or 2015?",
         sql="SELECT count(*) FROM concert WHERE year = 2014 OR year = 2015",
         response="SQL: SELECT count(*) FROM concert WHERE year = 2014"),
    dict(db="concert_singer", tier="medium", kind="ok",
         q="Show the stadium name and the number of concerts in each stadium.",
         sql="SELECT T2.name , count(*) FROM concert AS T1 JOIN stadium AS T2 "
             "ON T1.stadium_id = T2.stadium_id GROUP BY T1.stadium_id"),
    dict(db="concert_singer", tier="extra", kind="ok",
         q="Show the stadium name and capacity with most number of concerts in year 2014 or after.",
         sql="SELECT T2.name , T2.capacity FROM concert AS T1 JOIN stadium AS T2 "
             "ON T1.stadium_id = T2.stadium_id WHERE T1.year >= 2014 "
             "GROUP BY T2.stadium_id ORDER BY count(*) DESC LIMIT 1"),
    dict(db="concert_singer", tier="hard", kind="ok",
         q="Show names for all stadiums except for stadiums having a concert in year 2014.",
         sql="SELECT name FROM stadium EXCEPT SELECT T2.name FROM concert AS T1 JOIN stadium AS T2 "
             "ON T1.stadium_id = T2.stadium_id WHERE T1.year = 2014"),
    dict(db="concert_singer", tier="hard", kind="ok",
         q="Show countries where a singer above age 40 and a singer below 30 are from.",
         sql="SELECT country FROM singer WHERE age > 40 INTERSECT SELECT country FROM singer WHERE age < 30"),
    dict(db="concert_singer", tier="hard", kind="wrong",
         q="What are the names of the singers who performed in a concert in 2014?",
         sql="SELECT T2.name FROM singer_in_concert AS T1 JOIN singer AS T2 ON T1.singer_id = T2.singer_id "
             "JOIN concert AS T3 ON T1.concert_id = T3.concert_id WHERE T3.year = 2014",
         response="SQL: SELECT T2.name FROM singer_in_concert AS T1 JOIN singer AS T2 "
                  "ON T1.singer_id = T2.singer_id JOIN concert AS T3 ON T1.concert_id = T3.concert_id"),
    dict(db="concert_singer", tier="hard", kind="ok",
         q="Which year has most number of concerts?",
         sql="SELECT year FROM concert GROUP BY year ORDER BY count(*) DESC LIMIT 1"),
    dict(db="department_management", tier="hard", kind="ok",
         q="What are the distinct creation years of the departments managed by a secretary born in state 'Alabama'?",
         sql="SELECT DISTINCT T1.creation FROM department AS T1 JOIN management AS T2 "
             "ON T1.department_id = T2.department_id JOIN head AS T3 ON T2.head_id = T3.head_id "
             "WHERE T3.born_state = 'Alabama'"),
    dict(db="department_management", tier="medium", kind="ok",
         q="Which department has more than 1 head at a time? List the id, name and the number of heads.",
         sql="SELECT T1.department_id , T1.name , count(*) FROM management AS T2 JOIN department AS T1 "
             "ON T1.department_id = T2.department_id GROUP BY T1.department_id HAVING count(*) > 1"),
    dict(db="department_management", tier="easy", kind="ok",
         q="What is the average number of employees of the departments whose rank is between 10 and 15?",
         sql="SELECT avg(num_employees) FROM department WHERE ranking BETWEEN 10 AND 15"),
    dict(db="department_management", tier="extra", kind="invalid",
         q="How many departments are led by heads who are not mentioned?",
         sql="SELECT count(*) FROM department WHERE department_id NOT IN (SELECT department_id FROM management)",
         response="I am not able to answer this from the schema given."),
    dict(db="department_management", tier="extra", kind="ok",
         q="List the states where both the secretary of 'Treasury' department and the secretary "
           "of 'Homeland Security' were born.",
         sql="SELECT T3.born_state FROM department AS T1 JOIN management AS T2 "
             "ON T1.department_id = T2.department_id JOIN head AS T3 ON T2.head_id = T3.head_id "
             "WHERE T1.name = 'Treasury' INTERSECT SELECT T3.born_state FROM department AS T1 "
             "JOIN management AS T2 ON T1.department_id = T2.department_id JOIN head AS T3 "
             "ON T2.head_id = T3.head_id WHERE T1.name = 'Homeland Security'"),
]

# extra training questions so the train split has varied leading words
TRAIN_EXTRA = [
    ("concert_singer", "Find the number of concerts held in each year.",
     "SELECT year , count(*) FROM concert GROUP BY year"),
    ("concert_singer", "Find the name of the oldest singer.",
     "SELECT name FROM singer ORDER BY age DESC LIMIT 1"),
    ("concert_singer", "Return the names of singers from France.",
     "SELECT name FROM singer WHERE country = 'France'"),
    ("concert_singer", "Give the theme of every concert in 2015.",
     "SELECT theme FROM concert WHERE year = 2015"),
    ("concert_singer", "List the names of stadiums with capacity over 5000.",
     "SELECT name FROM stadium WHERE capacity > 5000"),
    ("concert_singer", "Count the number of stadiums.",
     "SELECT count(*) FROM stadium"),
    ("department_management", "Find the names of departments created before 1900.",
     "SELECT name FROM department WHERE creation < 1900"),
    ("department_management", "List the creation year, name and budget of each department.",
     "SELECT creation , name , budget_in_billions FROM department"),
    ("department_management", "Which head is the youngest?",
     "SELECT name FROM head ORDER BY age LIMIT 1"),
    ("department_management", "Show the distinct temporary acting values.",
     "SELECT DISTINCT temporary_acting FROM management"),
]
TRAIN_OTHERS = [
    ("department_management", "What is the maximum budget of any department?",
     "SELECT max(budget_in_billions) FROM department"),
    ("department_management", "How many heads are older than 60?",
     "SELECT count(*) FROM head WHERE age > 60"),
]

TRIAL_COUNT = 3
TRIAL_SIZE = 50
TRIAL_CORRECT = (35, 36, 37)  # EX 70.0 / 72.0 / 74.0


def trial50_examples() -> list[dict]:
    out = []
    for n in range(20, 20 + TRIAL_SIZE):
        out.append({
            "db_id": "concert_singer",
            "question": f"How many singers are older than {n}?",
            "query": f"SELECT count(*) FROM singer WHERE age > {n}",
        })
    return out


def trial_wrong_indices(trial: int) -> set[int]:
    return set(random.Random(1000 + trial).sample(range(TRIAL_SIZE), TRIAL_SIZE - TRIAL_CORRECT[trial]))


def mini20_response(item: dict, index: int) -> str:
    if "response" in item:
        return item["response"]
    sql = item["sql"]
    # vary the surface form: lower-cased keywords, fences, trailing semicolons
    recased = sql.replace("SELECT", "select").replace(" FROM ", " from ").replace(" WHERE ", " where ")
    if index % 3 == 0:
        return f"```sql\n{recased};\n```"
    if index % 3 == 1:
        return f"SQL: {recased}"
    return f"The query is below.\nSQL: {sql};"


# -- materialization ---------------------------------------------------------------


def _build_db(path: Path, scripts: list[Path]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.exists():
        path.unlink()
    con = sqlite3.connect(path)
    try:
        for script in scripts:
            con.executescript(script.read_text(encoding="utf-8"))
        con.commit()
    finally:
        con.close()


def materialize(dest: Path) -> Path:
    """Create a dataset root at ``dest`` with JSON files and SQLite databases."""
    dest = Path(dest)
    dest.mkdir(parents=True, exist_ok=True)
    for f in MINI.glob("*.json"):
        shutil.copy(f, dest / f.name)
    for db_id in DB_IDS:
        _build_db(dest / "database" / db_id / f"{db_id}.sqlite", [SQL_DIR / f"{db_id}.sql"])
    for variant in sorted((SQL_DIR / "suite").glob("*.sql")):
        db_id, name = variant.stem.split("__")
        _build_db(dest / "database_suite" / db_id / f"{name}.sqlite", [SQL_DIR / f"{db_id}.sql", variant])
    return dest


def tables_entry(db_id: str, db_path: Path) -> dict:
    """Spider-style schema description read back from a SQLite file."""
    con = sqlite3.connect(db_path)
    try:
        tables = [r[0] for r in con.execute("SELECT name FROM sqlite_master WHERE type = 'table' ORDER BY rowid")]
        columns, types, pks, index = [[-1, "*"]], ["text"], [], {}
        for t_idx, table in enumerate(tables):
            table_pk = []
            for _, name, ctype, _, _, pk in con.execute(f"PRAGMA table_info({table})"):
                index[(table.lower(), name.lower())] = len(columns)
                if pk:
                    table_pk.append(len(columns))
                columns.append([t_idx, name])
                ctype = ctype.lower()
                types.append("number" if ctype in ("int", "integer", "real") else "text")
            if table_pk:
                pks.append(table_pk[0] if len(table_pk) == 1 else table_pk)
        fks = []
        for table in tables:
            for row in con.execute(f"PRAGMA foreign_key_list({table})"):
                ref_table, src, dst = row[2], row[3], row[4]
                fks.append([index[(table.lower(), src.lower())], index[(ref_table.lower(), dst.lower())]])
    finally:
        con.close()
    return {
        "db_id": db_id,
        "table_names_original": tables,
        "table_names": [t.lower().replace("_", " ") for t in tables],
        "column_names_original": columns,
        "column_names": [[t, n.lower().replace("_", " ")] for t, n in columns],
        "column_types": types,
        "primary_keys": pks,
        "foreign_keys": fks,
    }


def _split_records(triples) -> list[dict]:
    return [{"db_id": db, "question": q, "query": sql} for db, q, sql in triples]


def write_static() -> None:
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        for db_id in DB_IDS:
            _build_db(tmp / f"{db_id}.sqlite", [SQL_DIR / f"{db_id}.sql"])
        tables = [tables_entry(db_id, tmp / f"{db_id}.sqlite") for db_id in DB_IDS]
    _dump(MINI / "tables.json", tables)
    mini = [(m["db"], m["q"], m["sql"]) for m in MINI20]
    _dump(MINI / "mini20.json", _split_records(mini))
    _dump(MINI / "dev.json", _split_records(mini[:5]))
    _dump(MINI / "train_spider.json", _split_records(mini + TRAIN_EXTRA))
    _dump(MINI / "train_others.json", _split_records(TRAIN_OTHERS))
    _dump(MINI / "trial50.json", trial50_examples())


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


def write_caches() -> None:
    sys.path.insert(0, str(HERE.parents[1] / "src"))
    from dnpsql.harness import ExperimentConfig, StrategyConfig, run_experiment
    from dnpsql.llm import CompletionRecord, MockBackend

    class Recorder:
        def __init__(self, answer):
            self.answer, self.records = answer, []

        def complete(self, req):
            text = self.answer(req)
            self.records.append(replace(CompletionRecord.create(req, text), created_at=FIXED_TIME))
            return text

    def question_of(req) -> str:
        return req.prompt.rsplit("Question: ", 1)[1].split("\n", 1)[0]

    REPLAY.mkdir(exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        root = materialize(Path(tmp) / "root")

        by_question = {m["q"]: mini20_response(m, i) for i, m in enumerate(MINI20)}
        rec = Recorder(lambda req: by_question[question_of(req)])
        cfg = ExperimentConfig(str(root), split="mini20", trials=1, workers=1, strategy=StrategyConfig("standard"))
        run_experiment(_no_validate(cfg), backend=rec)
        _write_records(REPLAY / "mini20.jsonl", rec.records)

        gold = {e["question"]: e["query"] for e in trial50_examples()}
        order = {e["question"]: i for i, e in enumerate(trial50_examples())}
        wrong = [trial_wrong_indices(t) for t in range(TRIAL_COUNT)]

        def answer(req):
            q = question_of(req)
            sql = gold[q]
            if order[q] in wrong[req.trial_index]:
                sql = sql.replace("count(*)", "count(*) + 1")
            return f"SQL: {sql}"

        rec = Recorder(answer)
        cfg = ExperimentConfig(str(root), split="trial50", trials=TRIAL_COUNT, workers=1)
        run_experiment(_no_validate(cfg), backend=rec)
        _write_records(REPLAY / "trial50.jsonl", rec.records)


def _no_validate(cfg):
    # the recorder stands in for the backend, so the file checks do not apply
    cfg.validate = lambda: None
    return cfg


def _write_records(path: Path, records) -> None:
    records = sorted(records, key=lambda r: (r.trial_index, r.key))
    path.write_text("".join(r.to_json() + "\n" for r in records), encoding="utf-8")


if __name__ == "__main__":
    write_static()
    write_caches()
    print("fixtures written")
