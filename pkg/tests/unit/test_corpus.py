#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Unit tests cho corpus loader, gold mentions, exact-match linker và đồ thị tĩnh
"""

import json

import numpy as np
import pytest

from src.core.corpus import (
    Corpus,
    build_static_edges,
    extract_gold_mentions,
    extract_literals,
    exact_match_linking,
    load_examples,
)
from src.core.exceptions import CorpusFormatError, CorpusReferenceError, ExampleLookupError
from src.core.schema import Relation, tokenize_question


def _write(path, records):
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(records, f)
    return str(path)


def test_mini_corpus_loads(corpus):
    """Mini corpus: 2 databases, 50 train + 10 dev examples"""
    assert set(corpus.schemas) == {'concert_singer', 'orchestra_mini'}
    assert len(corpus.train) == 50
    assert len(corpus.dev) == 10
    assert corpus.train[0].example_id == 'examples-0000'
    assert corpus.dev[9].example_id == 'dev-0009'
    assert all(ex.gold_actions for ex in corpus.examples)


def test_schema_item_layout(concert_singer, orchestra):
    """Tables first, then columns; '*' is column 0"""
    assert concert_singer.num_tables == 4
    assert concert_singer.num_columns == 22
    assert concert_singer.num_items == 26
    assert concert_singer.wildcard_index == 0
    assert concert_singer.is_wildcard_item(4)
    assert concert_singer.item_name(17) == 'singer.Age'
    assert concert_singer.item_tokens(16) == ('song', 'release', 'year')
    assert orchestra.foreign_keys == {(8, 1)}


def test_unknown_db_id_raises(tmp_path, schemas):
    path = _write(tmp_path / 'bad.json', [{'db_id': 'no_such_db', 'question': 'How many?', 'query': 'SELECT 1'}])
    with pytest.raises(CorpusReferenceError) as info:
        load_examples(path, schemas)
    assert info.value.db_id == 'no_such_db'
    assert info.value.record_index == 0


def test_missing_field_names_record(tmp_path, schemas):
    records = [
        {'db_id': 'concert_singer', 'question': 'How many singers?', 'query': 'SELECT count(*) FROM singer'},
        {'db_id': 'concert_singer', 'question': 'How many stadiums?'},
    ]
    path = _write(tmp_path / 'bad.json', records)
    with pytest.raises(CorpusFormatError) as info:
        load_examples(path, schemas)
    assert info.value.record_index == 1
    assert 'bad.json' in str(info.value)


def test_unsupported_sql_fails_or_is_skipped(tmp_path, schemas):
    records = [
        {'db_id': 'concert_singer', 'question': 'How many singers?', 'query': 'SELECT count(*) FROM singer'},
        {'db_id': 'concert_singer', 'question': 'Ages plus one?', 'query': 'SELECT age + 1 FROM singer'},
    ]
    path = _write(tmp_path / 'mixed.json', records)
    with pytest.raises(CorpusFormatError):
        load_examples(path, schemas)
    kept = load_examples(path, schemas, skip_unsupported=True)
    assert [ex.example_id for ex in kept] == ['mixed-0000']


def test_links_out_of_range(tmp_path, schemas):
    records = [{'db_id': 'concert_singer', 'question': 'How many singers?',
                'query': 'SELECT count(*) FROM singer', 'links': [[2, 99]]}]
    with pytest.raises(CorpusFormatError):
        load_examples(_write(tmp_path / 'links.json', records), schemas)


def test_find_unknown_example(corpus):
    assert corpus.find('examples-0024').question == 'Show the ages for all French singers.'
    with pytest.raises(ExampleLookupError):
        corpus.find('examples-9999')


def test_missing_data_dir(tmp_path):
    with pytest.raises(FileNotFoundError):
        Corpus.from_dir(str(tmp_path / 'nowhere'))


# ---------------------------------------------------------------------- #
#  Gold mentions / literals
# ---------------------------------------------------------------------- #

def test_gold_mentions_include_join_columns(concert_singer):
    sql = ("SELECT T2.name FROM singer_in_concert AS T1 JOIN singer AS T2 "
           "ON T1.singer_id = T2.singer_id")
    # singer_in_concert=3, singer=1, singer.Name=4+9, singer.Singer_ID=4+8, singer_in_concert.Singer_ID=4+21
    assert extract_gold_mentions(sql, concert_singer) == {3, 1, 13, 12, 25}


def test_gold_mentions_of_count_star(concert_singer):
    assert extract_gold_mentions('SELECT count(*) FROM singer', concert_singer) == {1, 4}


def test_gold_mentions_inside_subquery(concert_singer):
    sql = "SELECT name FROM stadium WHERE stadium_id NOT IN (SELECT stadium_id FROM concert)"
    # stadium=0, concert=2, stadium.Name=7, stadium.Stadium_ID=5, concert.Stadium_ID=22
    assert extract_gold_mentions(sql, concert_singer) == {0, 2, 7, 5, 22}


def test_extract_literals_in_order():
    assert extract_literals("Singers from 'France' older than 30 or named \"Joe\"") == ["'France'", '30', "'Joe'"]
    assert extract_literals('How many singers do we have?') == []


# ---------------------------------------------------------------------- #
#  Exact-match baseline
# ---------------------------------------------------------------------- #

def test_exact_match_plural_and_table(corpus, concert_singer):
    example = corpus.find('examples-0024')  # show the ages for all french singers
    links = exact_match_linking(example, concert_singer)
    assert links.shape == (7, 26)
    assert links.dtype == np.float32
    assert links[2, 17] == 1.0   # ages -> singer.Age
    assert links[6, 1] == 1.0    # singers -> singer
    assert links[5].sum() == 0.0  # french has no lexical match
    assert links[1].sum() == 0.0  # stopword
    assert links[:, 4].sum() == 0.0  # wildcard never linked
    assert set(np.unique(links)) <= {0.0, 1.0}


def test_exact_match_ngram(make_example, concert_singer):
    example = make_example(concert_singer, 'What is the song release year?', 'SELECT song_release_year FROM singer')
    links = exact_match_linking(example, concert_singer)
    assert links[3, 16] == 1.0  # "song release year" at token 3
    assert links[3, 15] == 1.0  # "song" inside "song name"


def test_exact_match_skips_stopword_only_grams(make_example, orchestra, concert_singer):
    """'of' and 'is' occur inside column names but never link on their own"""
    example = make_example(orchestra, 'List the names of conductors', 'SELECT name FROM conductor')
    links = exact_match_linking(example, orchestra)
    assert links[3].sum() == 0.0      # of  vs  year of work / year of founded
    assert links[4, 0] == 1.0
    example = make_example(concert_singer, 'What is the age of each singer?', 'SELECT age FROM singer')
    links = exact_match_linking(example, concert_singer)
    assert links[1, 18] == 0.0        # is  vs  is male
    assert links[3, 17] == 1.0


def test_exact_match_grams_may_contain_stopwords(make_example, orchestra):
    example = make_example(orchestra, 'Show the year of work for each conductor',
                           'SELECT year_of_work FROM conductor')
    links = exact_match_linking(example, orchestra)
    assert links[2, 7] == 1.0          # "year of work"


@pytest.mark.parametrize('text, expected', [
    ('Which café serves crème brûlée?', ['which', 'café', 'serves', 'crème', 'brûlée']),
    ('Singers from Zürich or São Paulo', ['singers', 'from', 'zürich', 'or', 'são', 'paulo']),
    ("O'Brien's song_name in 2014.5", ["o'brien's", 'song_name', 'in', '2014.5']),
    ('Tên của ca sĩ?', ['tên', 'của', 'ca', 'sĩ']),
])
def test_question_tokenizer_keeps_non_ascii_words(text, expected):
    assert tokenize_question(text) == expected


# ---------------------------------------------------------------------- #
#  Static graph
# ---------------------------------------------------------------------- #

def test_static_edges_question_chain(make_example, orchestra):
    example = make_example(orchestra, 'List conductor names', 'SELECT name FROM conductor')
    graph = build_static_edges(example, orchestra)
    q = graph.num_question
    assert q == 3
    assert graph.num_nodes == 3 + 2 + 12
    block = graph.edge_types[:q, :q]
    assert (block == Relation.QUESTION_FORWARD).sum() == 2
    assert (block == Relation.QUESTION_BACKWARD).sum() == 2
    assert (block == Relation.QUESTION_SELF).sum() == 3
    assert (block == Relation.QUESTION_OTHER).sum() == 2
    assert (graph.edge_types[:q, q:] == Relation.NO_LINK).all()
    assert (graph.edge_types[q:, :q] == Relation.NO_LINK).all()
    assert (graph.weights == 1.0).all()


def test_static_edges_schema_relations(make_example, orchestra):
    example = make_example(orchestra, 'List conductor names', 'SELECT name FROM conductor')
    graph = build_static_edges(example, orchestra)
    q = graph.num_question
    schema_block = graph.edge_types[q:, q:]
    assert (schema_block == Relation.FOREIGN_KEY_FORWARD).sum() == 1
    assert (schema_block == Relation.FOREIGN_KEY_BACKWARD).sum() == 1
    # orchestra.Conductor_ID (item 10) -> conductor.Conductor_ID (item 3)
    assert schema_block[10, 3] == Relation.FOREIGN_KEY_FORWARD
    assert schema_block[3, 10] == Relation.FOREIGN_KEY_BACKWARD
    assert schema_block[3, 3] == Relation.PRIMARY_KEY_OF
    assert schema_block[4, 4] == Relation.SCHEMA_SELF
    assert schema_block[4, 0] == Relation.COLUMN_OF_TABLE
    assert schema_block[0, 4] == Relation.TABLE_OF_COLUMN
    assert schema_block[4, 5] == Relation.SAME_TABLE_COLUMN
    assert schema_block[0, 1] == Relation.SCHEMA_OTHER


def test_static_graph_fingerprint_is_stable(corpus):
    example = corpus.train[3]
    schema = corpus.schema_of(example)
    assert build_static_edges(example, schema).fingerprint() == build_static_edges(example, schema).fingerprint()
