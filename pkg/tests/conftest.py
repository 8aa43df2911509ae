#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Fixtures dùng chung: mini corpus (concert_singer + orchestra_mini), builtin encoder nhỏ,
RunConfig tí hon ghi vào thư mục tạm
"""

import json
import os
import shutil
import sys

import pytest

PROJECT_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, PROJECT_ROOT)

from src.core.config import CACHE_ROOT_ENV, RunConfig  # noqa: E402
from src.core.corpus import Corpus, Example, extract_literals, load_schemas  # noqa: E402
from src.core.schema import tokenize_question  # noqa: E402
from src.core.sql_grammar import ast_to_actions, parse_sql  # noqa: E402

FIXTURES_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), 'fixtures')
MINI_CORPUS_DIR = os.path.join(FIXTURES_DIR, 'mini_corpus')
SQL_SUITE_PATH = os.path.join(FIXTURES_DIR, 'sql_suite.json')


@pytest.fixture(autouse=True)
def _no_cache_override(monkeypatch):
    monkeypatch.delenv(CACHE_ROOT_ENV, raising=False)


@pytest.fixture(scope='session')
def schemas():
    return load_schemas(os.path.join(MINI_CORPUS_DIR, 'tables.json'))


@pytest.fixture(scope='session')
def concert_singer(schemas):
    return schemas['concert_singer']


@pytest.fixture(scope='session')
def orchestra(schemas):
    return schemas['orchestra_mini']


@pytest.fixture(scope='session')
def corpus():
    return Corpus.from_dir(MINI_CORPUS_DIR)


@pytest.fixture(scope='session')
def sql_suite():
    with open(SQL_SUITE_PATH, 'r', encoding='utf-8') as f:
        return json.load(f)


@pytest.fixture
def make_example():
    """Factory: build an Example the same way the corpus loader does"""
    def factory(schema, question, sql, links=None, example_id='adhoc-0000'):
        parsed = parse_sql(sql, schema)
        return Example(
            example_id=example_id,
            db_id=schema.db_id,
            question=question,
            question_tokens=tokenize_question(question),
            gold_sql=sql,
            gold_ast=parsed.ast,
            gold_mentions=parsed.mentions,
            gold_actions=ast_to_actions(parsed.ast),
            links=links,
            literals=extract_literals(question),
        )
    return factory


@pytest.fixture(scope='session')
def vocab_path(corpus, tmp_path_factory):
    from src.ai.trainer import ensure_vocab
    return ensure_vocab(corpus, str(tmp_path_factory.mktemp('vocab')))


@pytest.fixture(scope='session')
def builtin_encoder(vocab_path):
    from src.ai.plm_encoder import ContextualEncoder
    encoder = ContextualEncoder('builtin', vocab_path, builtin_layers=1, builtin_hidden=32, builtin_heads=4, seed=7)
    encoder.eval()
    return encoder


def tiny_run_config(root, data_dir=MINI_CORPUS_DIR, **overrides) -> RunConfig:
    """Small builtin-encoder configuration whose artefacts all live under root"""
    data = {
        'probe': {'tau': 0.7},
        'fusion': {'lam': 0.2},
        'model': {
            'encoder_name': 'builtin',
            'builtin_layers': 1,
            'builtin_hidden': 32,
            'builtin_heads': 4,
            'gnn_hidden_size': 32,
            'gnn_layers': 2,
            'gnn_heads': 4,
            'dropout': 0.0,
            'decoder_hidden': 32,
            'action_embed_size': 16,
            'type_embed_size': 16,
            'decoder_dropout': 0.0,
            'max_steps': 120,
        },
        'train': {
            'epochs': 1,
            'batch_size': 4,
            'seed': 13,
            'beam_size': 2,
            'snapshot_every': 1,
            'snapshot_examples': 2,
            'eval_every': 0,
        },
        'paths': {
            'data_dir': str(data_dir),
            'cache_dir': os.path.join(str(root), 'cache'),
            'ckpt_dir': os.path.join(str(root), 'ckpt'),
            'report_dir': os.path.join(str(root), 'output'),
        },
    }
    for section, values in overrides.items():
        if isinstance(values, dict):
            data.setdefault(section, {}).update(values)
        else:
            data[section] = values
    return RunConfig.from_dict(data).validate()


@pytest.fixture
def tiny_config(tmp_path):
    return tiny_run_config(tmp_path)


@pytest.fixture
def small_data_dir(tmp_path):
    """Five training and two dev examples from the mini corpus"""
    target = tmp_path / 'data'
    target.mkdir()
    shutil.copy(os.path.join(MINI_CORPUS_DIR, 'tables.json'), target / 'tables.json')
    for name, count in (('examples.json', 5), ('dev.json', 2)):
        with open(os.path.join(MINI_CORPUS_DIR, name), 'r', encoding='utf-8') as f:
            records = json.load(f)[:count]
        with open(target / name, 'w', encoding='utf-8') as f:
            json.dump(records, f, indent=2)
    return target


@pytest.fixture
def run_config_factory(tmp_path):
    """tiny_run_config bound to a fresh temporary root per call"""
    counter = {'n': 0}

    def factory(data_dir=MINI_CORPUS_DIR, **overrides):
        counter['n'] += 1
        return tiny_run_config(tmp_path / f"run{counter['n']}", data_dir, **overrides)
    return factory
