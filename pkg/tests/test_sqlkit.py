import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dnpsql.errors import IncompleteClauseSet, ParseError
from dnpsql.sqlkit import (
    ClauseSet,
    DifficultyLevel,
    assemble_clauses,
    classify_difficulty,
    hardness_components,
    is_order_sensitive,
    normalize_sql,
    split_clauses,
    tokenize,
)


def test_tokenize_keeps_literals_whole():
    toks = tokenize("SELECT 'a b' , \"c d\" FROM t -- note\nWHERE x >= 1.5e3")
    kinds = [(t.kind, t.text) for t in toks]
    assert ("string", "'a b'") in kinds
    assert ("dquote", '"c d"') in kinds
    assert ("number", "1.5e3") in kinds
    assert ("op", ">=") in kinds
    assert all("note" not in t.text for t in toks)


def test_tokenize_rejects_unterminated_literal():
    with pytest.raises(ParseError):
        tokenize("SELECT 'oops FROM t")


def test_split_basic_clauses():
    cs = split_clauses(
        "select name, count(*) from singer where age > 20 group by name having count(*) > 1 order by name limit 3"
    )
    assert cs.select == "SELECT name, count(*)"
    assert cs.from_ == "FROM singer"
    assert cs.where_ == "WHERE age > 20"
    assert cs.group_by == "GROUP BY name"
    assert cs.having == "HAVING count(*) > 1"
    assert cs.order_by == "ORDER BY name"
    assert cs.limit == "LIMIT 3"
    assert cs.trailing_set_op is None


def test_split_nested_keywords_stay_in_clause():
    cs = split_clauses("SELECT a FROM t WHERE b IN (SELECT b FROM u WHERE c = 1 ORDER BY c) ORDER BY a")
    assert cs.where_ == "WHERE b IN (SELECT b FROM u WHERE c = 1 ORDER BY c)"
    assert cs.order_by == "ORDER BY a"


def test_split_set_operation_is_opaque_tail():
    cs = split_clauses("SELECT a FROM t WHERE x = 1 UNION SELECT a FROM u ORDER BY a")
    assert cs.where_ == "WHERE x = 1"
    assert cs.order_by is None
    assert cs.trailing_set_op == "UNION SELECT a FROM u ORDER BY a"


def test_split_preserves_literal_case_and_spacing():
    cs = split_clauses("SELECT a FROM t WHERE name = 'Mixed  Case where'")
    assert cs.where_ == "WHERE name = 'Mixed  Case where'"


@pytest.mark.parametrize(
    "sql",
    [
        "SELECT a",
        "SELECT a FROM t WHERE",
        "SELECT a FROM t ORDER BY a WHERE b = 1",
        "SELECT a FROM t UNION",
        "SELECT (a FROM t",
        "SELECT a) FROM t",
        "",
        "DELETE FROM t",
    ],
)
def test_split_rejects_malformed(sql):
    with pytest.raises(ParseError) as err:
        split_clauses(sql)
    assert err.value.position >= 0


def test_assemble_requires_select_and_from():
    with pytest.raises(IncompleteClauseSet):
        assemble_clauses(ClauseSet(select="SELECT a", from_=""))


def test_assemble_prepends_missing_keywords():
    cs = ClauseSet(select="name", from_="singer", where_="age  >  3", order_by="order by age")
    assert assemble_clauses(cs) == "SELECT name FROM singer WHERE age > 3 ORDER BY age"


def test_assemble_does_not_mistake_prefixed_words():
    cs = ClauseSet(select="SELECT a", from_="fromage")
    assert assemble_clauses(cs) == "SELECT a FROM fromage"


@pytest.mark.parametrize(
    "raw, expected",
    [
        ("```sql\nSELECT a\nFROM t;\n```", "SELECT a FROM t"),
        ("SQL: SELECT a FROM t;;", "SELECT a FROM t"),
        ("Final SQL:  SELECT  a FROM t", "SELECT a FROM t"),
        ("```\nSQL: SELECT a FROM t\n```", "SELECT a FROM t"),
        ("SELECT 'a  b' FROM t", "SELECT 'a  b' FROM t"),
    ],
)
def test_normalize(raw, expected):
    assert normalize_sql(raw) == expected


_text = st.text(alphabet=st.sampled_from(list("selctfromwhr ;`'\"\n\tSQL:x1()*,=")), max_size=60)


@given(_text)
@settings(max_examples=300, deadline=None)
def test_normalize_idempotent(raw):
    once = normalize_sql(raw)
    assert normalize_sql(once) == once


_ident = st.sampled_from(["a", "b", "name", "t.x", "count(*)"])


@st.composite
def _queries(draw, depth=0):
    cols = ", ".join(draw(st.lists(_ident, min_size=1, max_size=3)))
    sql = f"SELECT {cols} FROM {draw(st.sampled_from(['t', 'u AS T1 JOIN v AS T2 ON T1.a = T2.a']))}"
    if draw(st.booleans()):
        if depth < 2 and draw(st.booleans()):
            sql += f" WHERE a IN ({draw(_queries(depth + 1))})"
        else:
            sql += " WHERE (a > 1 OR b = 'x (y')"
    if draw(st.booleans()):
        sql += " GROUP BY a"
        if draw(st.booleans()):
            sql += " HAVING count(*) > (SELECT 2 FROM w)"
    if draw(st.booleans()):
        sql += " ORDER BY a DESC"
    if draw(st.booleans()):
        sql += " LIMIT 5"
    return sql


def _balanced(text: str) -> bool:
    depth = 0
    for tok in tokenize(text):
        if tok.text == "(":
            depth += 1
        elif tok.text == ")":
            depth -= 1
        if depth < 0:
            return False
    return depth == 0


@given(_queries())
@settings(max_examples=200, deadline=None)
def test_clauses_have_balanced_parentheses(sql):
    cs = split_clauses(sql)
    for text in cs.present().values():
        assert _balanced(text)
    assert split_clauses(assemble_clauses(cs)) == cs


@pytest.mark.parametrize(
    "sql, expected",
    [
        ("SELECT a FROM t ORDER BY a", True),
        ("SELECT a FROM t WHERE b IN (SELECT b FROM u ORDER BY b LIMIT 1)", False),
        ("SELECT a FROM t UNION SELECT a FROM u ORDER BY a", True),
        ("SELECT a FROM t", False),
    ],
)
def test_order_sensitivity(sql, expected):
    assert is_order_sensitive(sql) is expected


def test_difficulty_levels_are_ordered():
    assert DifficultyLevel.EASY < DifficultyLevel.MEDIUM < DifficultyLevel.HARD < DifficultyLevel.EXTRA
    assert DifficultyLevel.HARD.label == "Hard"


def test_hardness_counts_like_and_or():
    # LIKE and OR each add to the first component
    assert hardness_components("SELECT a FROM t WHERE b LIKE '%x%' OR c = 1") == (3, 0, 1)


def test_hardness_not_after_is_is_not_negation():
    assert hardness_components("SELECT a FROM t WHERE b IS NOT NULL") == (1, 0, 0)
    assert hardness_components("SELECT count(*) FROM t WHERE b NOT IN (SELECT b FROM u)") == (1, 1, 1)


def test_set_operation_counts_once_in_component2():
    assert hardness_components("SELECT a FROM t UNION SELECT a FROM u") == (0, 1, 0)
    assert classify_difficulty("SELECT a FROM t UNION SELECT a FROM u") is DifficultyLevel.HARD


def test_unparseable_gold_raises():
    with pytest.raises(ParseError):
        classify_difficulty("SELECT FROM WHERE")
