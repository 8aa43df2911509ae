#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Unit tests cho SQL grammar: parse -> AST -> actions -> AST -> render
"""

import pytest

from src.core.exceptions import SqlGrammarError
from src.core.sql_grammar import (
    GRAMMAR,
    Action,
    ActionKind,
    Frontier,
    actions_to_ast,
    ast_to_actions,
    normalize_quotes,
    parse_sql,
    render_sql,
)


def _suite(sql_suite, schemas):
    return [(schemas[q['db_id']], q['query']) for q in sql_suite['queries']]


def test_suite_round_trip(sql_suite, schemas):
    """parse(render(parse(q))) == parse(q) for every suite query"""
    for schema, query in _suite(sql_suite, schemas):
        ast = parse_sql(query, schema).ast
        actions = ast_to_actions(ast)
        assert actions_to_ast(actions) == ast, query
        rendered = render_sql(ast, schema)
        assert parse_sql(rendered, schema).ast == ast, (query, rendered)


def test_suite_covers_every_production(sql_suite, schemas):
    used = set()
    for schema, query in _suite(sql_suite, schemas):
        used.update(node.rule for node in parse_sql(query, schema).ast.iter_nodes() if hasattr(node, 'rule'))
    assert {p.name for p in GRAMMAR.productions} <= used


def test_render_is_idempotent(sql_suite, schemas):
    for schema, query in _suite(sql_suite, schemas):
        once = render_sql(parse_sql(query, schema).ast, schema)
        twice = render_sql(parse_sql(once, schema).ast, schema)
        assert once == twice


def test_render_normalizes_casing(concert_singer):
    ast = parse_sql("select   NAME from Singer where Age > 30", concert_singer).ast
    assert render_sql(ast, concert_singer) == 'SELECT Name FROM singer WHERE Age > 30'


def test_render_join_uses_foreign_key(concert_singer):
    sql = "SELECT T2.name FROM concert AS T1 JOIN stadium AS T2 ON T1.stadium_id = T2.stadium_id"
    rendered = render_sql(parse_sql(sql, concert_singer).ast, concert_singer)
    assert rendered == ('SELECT stadium.Name FROM concert JOIN stadium '
                        'ON concert.Stadium_ID = stadium.Stadium_ID')


def test_render_fills_question_literals(concert_singer):
    ast = parse_sql("SELECT name FROM singer WHERE country = 'x'", concert_singer).ast
    actions = ast_to_actions(ast)
    decoded = actions_to_ast(actions)  # decoded trees carry no literal values
    assert render_sql(decoded, concert_singer, ["'France'"]) == "SELECT Name FROM singer WHERE Country = 'France'"
    assert render_sql(decoded, concert_singer) == "SELECT Name FROM singer WHERE Country = 'value'"


def test_double_quoted_literals(concert_singer):
    assert normalize_quotes('SELECT a FROM t WHERE b = "France"') == "SELECT a FROM t WHERE b = 'France'"
    ast = parse_sql('SELECT age FROM singer WHERE country = "France"', concert_singer).ast
    assert ast == parse_sql("SELECT age FROM singer WHERE country = 'France'", concert_singer).ast


@pytest.mark.parametrize('sql', [
    'SELECT age + 1 FROM singer',
    'SELECT name FROM singer LIMIT 3',
    'SELECT name FROM singer ORDER BY age ASC, name DESC',
    'SELECT name FROM no_such_table',
    'SELECT no_such_column FROM singer',
    'SELECT name FROM singer WHERE age > (SELECT avg(age) FROM singer WHERE age > (SELECT min(age) FROM singer))',
])
def test_outside_grammar(sql, concert_singer):
    with pytest.raises(SqlGrammarError):
        parse_sql(sql, concert_singer)


def test_grammar_error_carries_fragment(concert_singer):
    sql = 'SELECT age + 1 FROM singer'
    with pytest.raises(SqlGrammarError) as info:
        parse_sql(sql, concert_singer)
    start, end = info.value.span
    assert info.value.fragment
    assert sql[start:end].lower() == info.value.fragment.lower()


def test_unparseable_sql(concert_singer):
    with pytest.raises(SqlGrammarError):
        parse_sql('SELECT FROM WHERE', concert_singer)


def test_frontier_rejects_illegal_action():
    frontier = Frontier(GRAMMAR)
    assert frontier.node_type == 'sql'
    assert frontier.kind == ActionKind.APPLY_RULE
    select_rule = GRAMMAR.rule('Select').rule_id
    assert not frontier.is_legal(Action(ActionKind.APPLY_RULE, select_rule))
    with pytest.raises(SqlGrammarError):
        frontier.advance(Action(ActionKind.APPLY_RULE, select_rule))
    with pytest.raises(SqlGrammarError):
        frontier.advance(Action(ActionKind.SELECT_TABLE, 0))


def test_action_sequence_shape(concert_singer):
    """SELECT count(*) FROM singer: rules + one column + one table"""
    actions = ast_to_actions(parse_sql('SELECT count(*) FROM singer', concert_singer).ast)
    kinds = [a.kind for a in actions]
    assert kinds.count(ActionKind.SELECT_COLUMN) == 1
    assert kinds.count(ActionKind.SELECT_TABLE) == 1
    assert Action(ActionKind.SELECT_COLUMN, 0) in actions
    assert Action(ActionKind.SELECT_TABLE, 1) in actions
    assert actions[0] == Action(ActionKind.APPLY_RULE, GRAMMAR.rule('Single').rule_id)


def test_incomplete_action_sequence():
    with pytest.raises(SqlGrammarError):
        actions_to_ast([Action(ActionKind.APPLY_RULE, GRAMMAR.rule('Single').rule_id)])
