#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Database schema - bảng, cột, khóa chính/khóa ngoại của một database (Spider layout)
"""

import re
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Dict, List, Optional, Set, Tuple

from src.core.exceptions import CorpusFormatError

COLUMN_TYPES = ('text', 'number', 'time', 'boolean', 'others')
WILDCARD = '*'

_CAMEL = re.compile(r'(?<=[a-z0-9])(?=[A-Z])')
_QUESTION_TOKEN = re.compile(r"\w+(?:[.'’]\w+)*")


class Relation(IntEnum):
    """Edge types of the question/schema graph (ids are stable, never renumber)"""
    QUESTION_FORWARD = 0
    QUESTION_BACKWARD = 1
    QUESTION_SELF = 2
    QUESTION_OTHER = 3
    COLUMN_OF_TABLE = 4
    TABLE_OF_COLUMN = 5
    SAME_TABLE_COLUMN = 6
    PRIMARY_KEY_OF = 7
    FOREIGN_KEY_FORWARD = 8
    FOREIGN_KEY_BACKWARD = 9
    SCHEMA_SELF = 10
    SCHEMA_OTHER = 11
    SEMANTIC_LINK = 12
    NO_LINK = 13


NUM_RELATIONS = len(Relation)


def split_name(name: str) -> Tuple[str, ...]:
    """'Song_release_year' -> ('song', 'release', 'year'); 'songName' -> ('song', 'name')"""
    if name.strip() == WILDCARD:
        return (WILDCARD,)
    spaced = _CAMEL.sub(' ', name).replace('_', ' ')
    return tuple(tok for tok in spaced.lower().split() if tok)


def tokenize_question(text: str) -> List[str]:
    return _QUESTION_TOKEN.findall(text.lower())


@dataclass(frozen=True)
class Column:
    table_index: int  # -1 cho cột wildcard '*'
    name: str
    tokens: Tuple[str, ...]
    col_type: str

    @property
    def is_wildcard(self) -> bool:
        return self.table_index < 0


@dataclass
class DatabaseSchema:
    """Schema of one database; schema items are ordered tables first, then columns"""
    db_id: str
    table_names: List[str]
    table_tokens: List[Tuple[str, ...]]
    columns: List[Column]
    primary_keys: Set[int] = field(default_factory=set)
    foreign_keys: Set[Tuple[int, int]] = field(default_factory=set)

    def __post_init__(self):
        self._table_lookup: Dict[str, int] = {n.lower(): i for i, n in enumerate(self.table_names)}
        self._column_lookup: Dict[Tuple[int, str], int] = {}
        for ci, col in enumerate(self.columns):
            self._column_lookup.setdefault((col.table_index, col.name.lower()), ci)

    # ---- sizes -------------------------------------------------------- #
    @property
    def num_tables(self) -> int:
        return len(self.table_names)

    @property
    def num_columns(self) -> int:
        return len(self.columns)

    @property
    def num_items(self) -> int:
        return self.num_tables + self.num_columns

    @property
    def wildcard_index(self) -> Optional[int]:
        for ci, col in enumerate(self.columns):
            if col.is_wildcard:
                return ci
        return None

    # ---- schema item indexing ------------------------------------------ #
    def table_item(self, table_index: int) -> int:
        return table_index

    def column_item(self, column_index: int) -> int:
        return self.num_tables + column_index

    def is_table_item(self, item: int) -> bool:
        return item < self.num_tables

    def item_to_column(self, item: int) -> int:
        return item - self.num_tables

    def item_tokens(self, item: int) -> Tuple[str, ...]:
        if self.is_table_item(item):
            return self.table_tokens[item]
        return self.columns[self.item_to_column(item)].tokens

    def item_name(self, item: int) -> str:
        if self.is_table_item(item):
            return self.table_names[item]
        col = self.columns[self.item_to_column(item)]
        if col.is_wildcard:
            return WILDCARD
        return f"{self.table_names[col.table_index]}.{col.name}"

    def is_wildcard_item(self, item: int) -> bool:
        return not self.is_table_item(item) and self.columns[self.item_to_column(item)].is_wildcard

    # ---- name lookup --------------------------------------------------- #
    def find_table(self, name: str) -> Optional[int]:
        return self._table_lookup.get(name.lower())

    def find_column(self, table_index: int, name: str) -> Optional[int]:
        return self._column_lookup.get((table_index, name.lower()))

    def columns_of(self, table_index: int) -> List[int]:
        return [ci for ci, col in enumerate(self.columns) if col.table_index == table_index]

    # ---- validation ---------------------------------------------------- #
    def validate(self, path: str = '<memory>', record_index: Optional[int] = None) -> None:
        wildcards = [ci for ci, c in enumerate(self.columns) if c.is_wildcard]
        if len(wildcards) > 1:
            raise CorpusFormatError(path, record_index, f"{self.db_id}: more than one wildcard column")
        for ci, col in enumerate(self.columns):
            if col.is_wildcard:
                if col.name != WILDCARD:
                    raise CorpusFormatError(path, record_index,
                                            f"{self.db_id}: column {ci} has no table but is not '*'")
            elif not 0 <= col.table_index < self.num_tables:
                raise CorpusFormatError(path, record_index,
                                        f"{self.db_id}: column {ci} refers to missing table {col.table_index}")
            if col.col_type not in COLUMN_TYPES:
                raise CorpusFormatError(path, record_index,
                                        f"{self.db_id}: column {ci} has unknown type '{col.col_type}'")
        for ci in self.primary_keys:
            if not 0 <= ci < self.num_columns:
                raise CorpusFormatError(path, record_index, f"{self.db_id}: primary key {ci} out of range")
        for src, dst in self.foreign_keys:
            if src == dst or not (0 <= src < self.num_columns and 0 <= dst < self.num_columns):
                raise CorpusFormatError(path, record_index,
                                        f"{self.db_id}: invalid foreign key ({src}, {dst})")

    # ---- Spider layout ------------------------------------------------- #
    @classmethod
    def from_spider(cls, record: dict, path: str = '<memory>', record_index: Optional[int] = None) -> 'DatabaseSchema':
        try:
            db_id = record['db_id']
            table_names = list(record['table_names_original'])
            raw_columns = record['column_names_original']
            column_types = list(record['column_types'])
            natural_tables = record.get('table_names') or table_names
            natural_columns = record.get('column_names') or raw_columns
            primary_keys = record.get('primary_keys', [])
            foreign_keys = record.get('foreign_keys', [])
        except (KeyError, TypeError) as e:
            raise CorpusFormatError(path, record_index, f"missing schema field {e}") from e

        if len(raw_columns) != len(column_types) or len(natural_columns) != len(raw_columns):
            raise CorpusFormatError(path, record_index, f"{db_id}: column/type lists differ in length")
        if len(natural_tables) != len(table_names):
            raise CorpusFormatError(path, record_index, f"{db_id}: table name lists differ in length")

        columns = []
        try:
            for (table_index, name), (_, natural), col_type in zip(raw_columns, natural_columns, column_types):
                columns.append(Column(int(table_index), str(name), split_name(str(natural)), str(col_type)))
            # Spider nests composite keys as lists
            pks: Set[int] = set()
            for pk in primary_keys:
                pks.update(int(p) for p in (pk if isinstance(pk, list) else [pk]))
            fks = {(int(a), int(b)) for a, b in foreign_keys}
        except (TypeError, ValueError) as e:
            raise CorpusFormatError(path, record_index, f"{db_id}: malformed column or key entry ({e})") from e

        schema = cls(
            db_id=db_id,
            table_names=table_names,
            table_tokens=[split_name(str(n)) for n in natural_tables],
            columns=columns,
            primary_keys=pks,
            foreign_keys=fks,
        )
        schema.validate(path, record_index)
        return schema

    def to_spider(self) -> dict:
        return {
            'db_id': self.db_id,
            'table_names_original': list(self.table_names),
            'table_names': [' '.join(t) for t in self.table_tokens],
            'column_names_original': [[c.table_index, c.name] for c in self.columns],
            'column_names': [[c.table_index, ' '.join(c.tokens)] for c in self.columns],
            'column_types': [c.col_type for c in self.columns],
            'primary_keys': sorted(self.primary_keys),
            'foreign_keys': sorted([list(fk) for fk in self.foreign_keys]),
        }
