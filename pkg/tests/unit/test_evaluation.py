#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Unit tests cho exact set match, component F1 và schema linking metrics
"""

import numpy as np
import pytest

from src.core.evaluation import (
    COMPONENTS,
    SqlScoringSystem,
    component_match,
    exact_set_match,
    predicted_mentions,
    prf,
    schema_linking_metrics,
)
from src.core.sql_grammar import parse_sql


def _ast(schemas, db_id, sql):
    return parse_sql(sql, schemas[db_id]).ast


def test_exact_match_pairs(sql_suite, schemas):
    for pair in sql_suite['exact_match_pairs']:
        pred = _ast(schemas, pair['db_id'], pair['pred'])
        gold = _ast(schemas, pair['db_id'], pair['gold'])
        assert exact_set_match(pred, gold) is pair['match'], (pair['pred'], pair['gold'])


def test_exact_match_is_reflexive(sql_suite, schemas):
    for q in sql_suite['queries']:
        ast = _ast(schemas, q['db_id'], q['query'])
        assert exact_set_match(ast, ast)


def test_unparsed_prediction_never_matches(schemas):
    assert not exact_set_match(None, _ast(schemas, 'concert_singer', 'SELECT count(*) FROM singer'))


def test_component_table(sql_suite, schemas):
    for case in sql_suite['component_cases']:
        pred = _ast(schemas, case['db_id'], case['pred'])
        gold = _ast(schemas, case['db_id'], case['gold'])
        assert component_match(pred, gold) == case['components'], case['pred']


def test_scoring_system_report(schemas):
    golds = [
        _ast(schemas, 'concert_singer', 'SELECT name FROM singer WHERE age > 20'),
        _ast(schemas, 'concert_singer', 'SELECT count(*) FROM singer'),
        _ast(schemas, 'concert_singer', 'SELECT name FROM singer ORDER BY age DESC'),
        _ast(schemas, 'concert_singer', 'SELECT country FROM singer GROUP BY country'),
    ]
    preds = [
        _ast(schemas, 'concert_singer', 'SELECT name FROM singer WHERE age > 35'),
        _ast(schemas, 'concert_singer', 'SELECT count(*) FROM stadium'),
        _ast(schemas, 'concert_singer', 'SELECT name FROM singer ORDER BY age ASC'),
        None,
    ]
    report = SqlScoringSystem().score(preds, golds)
    assert report.exact_match == pytest.approx(0.25)
    assert report.per_example == [True, False, False, False]
    assert report.num_examples == 4
    assert report.num_unparsed == 1
    assert set(report.components) == set(COMPONENTS)
    assert report.components['WHERE'] == pytest.approx(1.0)
    # ORDER BY: one predicted, one gold, no match
    assert report.components['ORDER BY'] == 0.0
    # GROUP BY: gold only, the prediction is missing
    assert report.components['GROUP BY'] == 0.0
    # nobody uses a set operation
    assert report.components['IUE'] == 1.0
    assert 'per_example' not in report.to_dict()


def test_scoring_length_mismatch(schemas):
    with pytest.raises(ValueError):
        SqlScoringSystem().score([], [_ast(schemas, 'concert_singer', 'SELECT count(*) FROM singer')])


# ---------------------------------------------------------------------- #
#  Schema linking
# ---------------------------------------------------------------------- #

def test_prf_values():
    p, r, f = prf(4, 1, 2)
    assert p == pytest.approx(0.8)
    assert r == pytest.approx(0.667, abs=1e-3)
    assert f == pytest.approx(0.727, abs=1e-3)
    assert prf(0, 0, 0) == (0.0, 0.0, 0.0)


def test_linking_metrics_micro_average(concert_singer):
    # columns: 5 predicted, 4 correct, 6 gold; tables: 1 predicted, 1 gold, correct
    predicted = [{6, 7, 8, 9, 1}, {10}]
    gold = [{6, 7, 8, 12, 1}, {10, 13}]
    metrics = schema_linking_metrics(predicted, gold, [concert_singer, concert_singer])
    assert metrics.col_p == pytest.approx(0.8)
    assert metrics.col_r == pytest.approx(0.667, abs=1e-3)
    assert metrics.col_f == pytest.approx(0.727, abs=1e-3)
    assert (metrics.tab_p, metrics.tab_r, metrics.tab_f) == (1.0, 1.0, 1.0)
    assert metrics.to_dict()['counts']['col'] == {'tp': 4, 'fp': 1, 'fn': 2}


def test_linking_metrics_ignore_wildcard(concert_singer):
    metrics = schema_linking_metrics([{4}], [{4, 1}], [concert_singer])
    assert metrics.counts['col'] == {'tp': 0, 'fp': 0, 'fn': 0}
    assert metrics.col_f == 0.0
    assert metrics.tab_r == 0.0


def test_linking_metrics_empty():
    metrics = schema_linking_metrics([], [], [])
    assert metrics.col_f == 0.0 and metrics.tab_f == 0.0


def test_predicted_mentions_threshold(concert_singer):
    a_tilde = np.zeros((3, concert_singer.num_items), dtype=np.float32)
    a_tilde[0, 1] = 0.4
    a_tilde[2, 17] = 0.05
    a_tilde[1, 4] = 0.9  # wildcard
    assert predicted_mentions(a_tilde, concert_singer) == {1, 17}
    assert predicted_mentions(a_tilde, concert_singer, threshold=0.1) == {1}
    assert predicted_mentions(np.zeros((0, 0)), concert_singer) == set()
