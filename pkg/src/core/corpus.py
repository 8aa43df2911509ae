#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Corpus - Đọc dữ liệu Spider (tables.json + examples.json), trích xuất gold mentions,
baseline exact-match linking và đồ thị tĩnh (question / schema / question-schema)
"""

import hashlib
import json
import logging
import os
import re
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, Optional, Sequence, Set, Tuple

import numpy as np

from src.core.exceptions import (
    CorpusFormatError,
    CorpusReferenceError,
    ExampleLookupError,
    SqlGrammarError,
)
from src.core.schema import DatabaseSchema, Relation, tokenize_question
from src.core.sql_grammar import Action, SqlAst, ast_to_actions, parse_sql

logger = logging.getLogger(__name__)

MAX_NGRAM = 5
STOPWORDS = frozenset({
    'a', 'an', 'the', 'of', 'for', 'in', 'on', 'at', 'to', 'by', 'with', 'and', 'or',
    'is', 'are', 'was', 'were', 'what', 'which', 'who', 'how', 'many', 'much', 'all',
    'show', 'list', 'find', 'give', 'me', 'each', 'that', 'their', 'its', 'from',
})

_QUOTED = re.compile(r"'([^']*)'|\"([^\"]*)\"")
_NUMBER = re.compile(r'(?<![\w.])-?\d+(?:\.\d+)?(?![\w.])')


@dataclass
class Example:
    """Một câu hỏi + SQL gold (đã parse thành AST và action sequence)"""
    example_id: str
    db_id: str
    question: str
    question_tokens: List[str]
    gold_sql: str
    gold_ast: SqlAst
    gold_mentions: FrozenSet[int]
    gold_actions: List[Action] = field(default_factory=list)
    links: Optional[List[Tuple[int, int]]] = None  # (token index, schema item) annotations
    literals: List[str] = field(default_factory=list)

    @property
    def num_tokens(self) -> int:
        return len(self.question_tokens)

    def to_record(self) -> dict:
        record = {
            'example_id': self.example_id,
            'db_id': self.db_id,
            'question_tokens': list(self.question_tokens),
            'gold_sql': self.gold_sql,
            'gold_actions': [[a.kind.value, a.index] for a in self.gold_actions],
            'gold_mentions': sorted(self.gold_mentions),
            'literals': list(self.literals),
        }
        if self.links is not None:
            record['links'] = [list(link) for link in self.links]
        return record


# ====================================================================== #
#  Gold supervision
# ====================================================================== #

def extract_gold_mentions(gold_sql: str, schema: DatabaseSchema) -> Set[int]:
    """Schema items (tables first, then columns) named anywhere in the SQL"""
    return set(parse_sql(gold_sql, schema).mentions)


def extract_literals(question: str) -> List[str]:
    """Quoted spans and numbers of the question, in order of appearance, as SQL literals"""
    found: List[Tuple[int, str]] = []
    for match in _QUOTED.finditer(question):
        text = match.group(1) if match.group(1) is not None else match.group(2)
        found.append((match.start(), "'" + text.replace("'", "''") + "'"))
    quoted_spans = [m.span() for m in _QUOTED.finditer(question)]
    for match in _NUMBER.finditer(question):
        if any(a <= match.start() < b for a, b in quoted_spans):
            continue
        found.append((match.start(), match.group(0)))
    return [text for _, text in sorted(found)]


# ====================================================================== #
#  Exact-match baseline linker
# ====================================================================== #

def _same_word(a: str, b: str) -> bool:
    if a == b:
        return True
    for long, short in ((a, b), (b, a)):
        if long == short + 's' or long == short + 'es':
            return True
    return False


def _same_sequence(left: Sequence[str], right: Sequence[str]) -> bool:
    return len(left) == len(right) and all(_same_word(a, b) for a, b in zip(left, right))


def _contained(gram: Sequence[str], name: Sequence[str]) -> bool:
    if all(tok in STOPWORDS for tok in gram):
        return False
    n = len(gram)
    return any(_same_sequence(gram, name[k:k + n]) for k in range(len(name) - n + 1))


def exact_match_linking(example: Example, schema: DatabaseSchema) -> np.ndarray:
    """Binary |Q| x |S| matrix: 1 where an n-gram (n <= 5) starting at token i matches item j"""
    tokens = example.question_tokens
    links = np.zeros((len(tokens), schema.num_items), dtype=np.float32)
    for j in range(schema.num_items):
        if schema.is_wildcard_item(j):
            continue
        name = schema.item_tokens(j)
        for i in range(len(tokens)):
            for n in range(1, min(MAX_NGRAM, len(tokens) - i) + 1):
                gram = tokens[i:i + n]
                if _same_sequence(gram, name) or _contained(gram, name):
                    links[i, j] = 1.0
                    break
    return links


# ====================================================================== #
#  Static heterogeneous graph
# ====================================================================== #

@dataclass
class HeteroGraph:
    """Nodes: question tokens, then tables, then columns. edge_types[j, i] is the relation j -> i"""
    num_question: int
    num_tables: int
    num_columns: int
    edge_types: np.ndarray  # int64 (|V|, |V|)
    weights: np.ndarray     # float32 (|V|, |V|)

    @property
    def num_schema(self) -> int:
        return self.num_tables + self.num_columns

    @property
    def num_nodes(self) -> int:
        return self.num_question + self.num_schema

    def fingerprint(self) -> str:
        digest = hashlib.sha1(np.ascontiguousarray(self.edge_types).tobytes())
        digest.update(np.ascontiguousarray(self.weights).tobytes())
        return digest.hexdigest()


def _schema_relation(schema: DatabaseSchema, a: int, b: int) -> Relation:
    """Relation from schema item a to schema item b"""
    if a == b:
        if not schema.is_table_item(a) and schema.item_to_column(a) in schema.primary_keys:
            return Relation.PRIMARY_KEY_OF
        return Relation.SCHEMA_SELF
    a_table, b_table = schema.is_table_item(a), schema.is_table_item(b)
    if a_table and b_table:
        return Relation.SCHEMA_OTHER
    if a_table:
        col = schema.columns[schema.item_to_column(b)]
        return Relation.TABLE_OF_COLUMN if col.table_index == a else Relation.SCHEMA_OTHER
    if b_table:
        col = schema.columns[schema.item_to_column(a)]
        return Relation.COLUMN_OF_TABLE if col.table_index == b else Relation.SCHEMA_OTHER
    ca, cb = schema.item_to_column(a), schema.item_to_column(b)
    if (ca, cb) in schema.foreign_keys:
        return Relation.FOREIGN_KEY_FORWARD
    if (cb, ca) in schema.foreign_keys:
        return Relation.FOREIGN_KEY_BACKWARD
    col_a, col_b = schema.columns[ca], schema.columns[cb]
    if not col_a.is_wildcard and col_a.table_index == col_b.table_index:
        return Relation.SAME_TABLE_COLUMN
    return Relation.SCHEMA_OTHER


def schema_relation_block(schema: DatabaseSchema) -> np.ndarray:
    n = schema.num_items
    block = np.empty((n, n), dtype=np.int64)
    for a in range(n):
        for b in range(n):
            block[a, b] = _schema_relation(schema, a, b)
    return block


def build_static_edges(example: Example, schema: DatabaseSchema) -> HeteroGraph:
    q = example.num_tokens
    s = schema.num_items
    v = q + s
    edges = np.full((v, v), int(Relation.NO_LINK), dtype=np.int64)

    question = np.full((q, q), int(Relation.QUESTION_OTHER), dtype=np.int64)
    idx = np.arange(q)
    question[idx, idx] = Relation.QUESTION_SELF
    question[idx[:-1], idx[:-1] + 1] = Relation.QUESTION_FORWARD
    question[idx[1:], idx[1:] - 1] = Relation.QUESTION_BACKWARD
    edges[:q, :q] = question
    edges[q:, q:] = schema_relation_block(schema)

    return HeteroGraph(
        num_question=q,
        num_tables=schema.num_tables,
        num_columns=schema.num_columns,
        edge_types=edges,
        weights=np.ones((v, v), dtype=np.float32),
    )


# ====================================================================== #
#  Loading
# ====================================================================== #

def _read_json_array(path: str) -> list:
    if not os.path.isfile(path):
        raise FileNotFoundError(f"corpus file not found: {path}")
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise CorpusFormatError(path, None, f"invalid JSON (line {e.lineno}, col {e.colno}): {e.msg}") from e
    if not isinstance(data, list):
        raise CorpusFormatError(path, None, "top-level value must be an array")
    return data


def load_schemas(tables_path: str) -> Dict[str, DatabaseSchema]:
    schemas: Dict[str, DatabaseSchema] = {}
    for index, record in enumerate(_read_json_array(tables_path)):
        if not isinstance(record, dict):
            raise CorpusFormatError(tables_path, index, "schema record must be an object")
        schema = DatabaseSchema.from_spider(record, tables_path, index)
        if schema.db_id in schemas:
            raise CorpusFormatError(tables_path, index, f"duplicate db_id '{schema.db_id}'")
        schemas[schema.db_id] = schema
    return schemas


def _parse_links(raw, path: str, index: int, num_tokens: int, num_items: int) -> Optional[List[Tuple[int, int]]]:
    if raw is None:
        return None
    links = []
    try:
        for token_index, item in raw:
            token_index, item = int(token_index), int(item)
            if not (0 <= token_index < num_tokens and 0 <= item < num_items):
                raise CorpusFormatError(path, index, f"link ({token_index}, {item}) out of range")
            links.append((token_index, item))
    except (TypeError, ValueError) as e:
        raise CorpusFormatError(path, index, f"malformed links annotation ({e})") from e
    return sorted(set(links))


def load_examples(examples_path: str, schemas: Dict[str, DatabaseSchema],
                  skip_unsupported: bool = False) -> List[Example]:
    stem = os.path.splitext(os.path.basename(examples_path))[0]
    examples: List[Example] = []
    skipped = 0
    for index, record in enumerate(_read_json_array(examples_path)):
        if not isinstance(record, dict):
            raise CorpusFormatError(examples_path, index, "example record must be an object")
        try:
            db_id, question, query = record['db_id'], record['question'], record['query']
        except KeyError as e:
            raise CorpusFormatError(examples_path, index, f"missing field {e}") from e
        if db_id not in schemas:
            raise CorpusReferenceError(db_id, index)
        schema = schemas[db_id]
        tokens = tokenize_question(str(question))
        if not tokens:
            raise CorpusFormatError(examples_path, index, "question has no tokens")
        try:
            parsed = parse_sql(str(query), schema)
            actions = ast_to_actions(parsed.ast)
        except SqlGrammarError as e:
            if skip_unsupported:
                skipped += 1
                logger.debug(f"⚠️ skip {examples_path}[{index}]: {e}")
                continue
            raise CorpusFormatError(examples_path, index, f"gold SQL outside the grammar: {e}") from e
        examples.append(Example(
            example_id=f"{stem}-{index:04d}",
            db_id=db_id,
            question=str(question),
            question_tokens=tokens,
            gold_sql=str(query),
            gold_ast=parsed.ast,
            gold_mentions=parsed.mentions,
            gold_actions=actions,
            links=_parse_links(record.get('links'), examples_path, index, len(tokens), schema.num_items),
            literals=extract_literals(str(question)),
        ))
    if skipped:
        logger.warning(f"⚠️ {skipped} example(s) in {examples_path} use SQL outside the grammar and were skipped")
    return examples


def load_corpus(path: str, examples_file: str = 'examples.json', tables_file: str = 'tables.json',
                skip_unsupported: bool = False) -> Tuple[List[DatabaseSchema], List[Example]]:
    """Load one Spider-format split: (schemas, validated examples)"""
    schemas = load_schemas(os.path.join(path, tables_file))
    examples = load_examples(os.path.join(path, examples_file), schemas, skip_unsupported)
    logger.info(f"✅ Loaded {len(schemas)} database(s), {len(examples)} example(s) from {path}")
    return list(schemas.values()), examples


class Corpus:
    """Schemas + train/dev splits, with example lookup by id"""

    def __init__(self, schemas: Dict[str, DatabaseSchema], train: List[Example], dev: List[Example]):
        self.schemas = schemas
        self.train = train
        self.dev = dev
        self._by_id = {ex.example_id: ex for ex in train + dev}

    @classmethod
    def from_dir(cls, data_dir: str, train_file: str = 'examples.json', dev_file: Optional[str] = 'dev.json',
                 tables_file: str = 'tables.json', skip_unsupported: bool = False) -> 'Corpus':
        if not os.path.isdir(data_dir):
            raise FileNotFoundError(f"data directory not found: {data_dir}")
        schemas = load_schemas(os.path.join(data_dir, tables_file))
        train = load_examples(os.path.join(data_dir, train_file), schemas, skip_unsupported)
        dev: List[Example] = []
        if dev_file:
            dev_path = os.path.join(data_dir, dev_file)
            if os.path.isfile(dev_path):
                dev = load_examples(dev_path, schemas, skip_unsupported)
            else:
                logger.warning(f"⚠️ dev split {dev_path} not found, evaluating on train only")
        logger.info(f"✅ Corpus: {len(schemas)} db, {len(train)} train, {len(dev)} dev")
        return cls(schemas, train, dev)

    @property
    def examples(self) -> List[Example]:
        return self.train + self.dev

    def schema_of(self, example: Example) -> DatabaseSchema:
        return self.schemas[example.db_id]

    def find(self, example_id: str) -> Example:
        try:
            return self._by_id[example_id]
        except KeyError:
            raise ExampleLookupError(f"unknown example id '{example_id}'") from None
