#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Evaluation - Chấm điểm SQL dự đoán: exact set match, component F1 và schema linking P/R/F
"""

import logging
from dataclasses import asdict, dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple

import numpy as np

from src.core.schema import DatabaseSchema
from src.core.sql_grammar import SqlAst, flatten_cons

logger = logging.getLogger(__name__)

COMPONENTS = (
    'SELECT', 'SELECT(no AGG)', 'WHERE', 'WHERE(no OP)', 'GROUP BY',
    'GROUP BY(no HAVING)', 'ORDER BY', 'AND/OR', 'IUE', 'KEYWORDS',
)

_SET_RULES = {'Intersect': 'intersect', 'Union': 'union', 'Except': 'except'}


def _multiset(items: Iterable) -> tuple:
    return tuple(sorted(items, key=repr))


# ====================================================================== #
#  Canonical forms (literal values ignored, set-valued parts unordered)
# ====================================================================== #

def _unit(node: SqlAst) -> Tuple[str, int]:
    return node.rule, node.children[0]


def _value(node: SqlAst):
    if node.rule == 'Subquery':
        return ('subquery', canonical_sql(node.children[0]))
    return ('literal',)


def _flatten(node: SqlAst, op: str) -> List[SqlAst]:
    if node.rule == op:
        return _flatten(node.children[0], op) + _flatten(node.children[1], op)
    return [node]


def canonical_cond(node: SqlAst):
    if node.rule in ('And', 'Or'):
        return (node.rule, _multiset(canonical_cond(c) for c in _flatten(node, node.rule)))
    unit = _unit(node.children[0])
    return (node.rule, unit) + tuple(_value(v) for v in node.children[1:])


def _leaf_conditions(node: Optional[SqlAst]) -> List[SqlAst]:
    if node is None:
        return []
    if node.rule in ('And', 'Or'):
        return _leaf_conditions(node.children[0]) + _leaf_conditions(node.children[1])
    return [node]


def _connectors(node: Optional[SqlAst]) -> List[str]:
    if node is None or node.rule not in ('And', 'Or'):
        return []
    return [node.rule] + _connectors(node.children[0]) + _connectors(node.children[1])


@dataclass
class QueryParts:
    """Các thành phần của một SELECT block"""
    distinct: bool
    select: tuple
    tables: tuple
    where: Optional[SqlAst]
    group: tuple
    having: Optional[SqlAst]
    order_desc: Optional[bool]
    order: tuple
    has_limit: bool

    @classmethod
    def of(cls, query: SqlAst) -> 'QueryParts':
        select, from_, where, group, order = query.children
        group_units, having = (), None
        if group.rule == 'GroupBy':
            group_units = tuple(_unit(u) for u in flatten_cons(group.children[0]))
            if group.children[1].rule == 'Having':
                having = group.children[1].children[0]
        order_desc, order_units, has_limit = None, (), False
        if order.rule != 'NoOrderBy':
            order_desc = order.rule == 'OrderDesc'
            order_units = tuple(_unit(u) for u in flatten_cons(order.children[0]))
            has_limit = order.children[1].rule == 'Limit'
        return cls(
            distinct=select.rule == 'SelectDistinct',
            select=_multiset(_unit(u) for u in flatten_cons(select.children[0])),
            tables=_multiset(flatten_cons(from_.children[0])),
            where=where.children[0] if where.rule == 'Where' else None,
            group=_multiset(group_units),
            having=having,
            order_desc=order_desc,
            order=order_units,
            has_limit=has_limit,
        )

    def canonical(self) -> tuple:
        return (
            self.distinct,
            self.select,
            self.tables,
            canonical_cond(self.where) if self.where is not None else None,
            self.group,
            canonical_cond(self.having) if self.having is not None else None,
            (self.order_desc, self.order, self.has_limit),
        )


def canonical_sql(ast: SqlAst) -> tuple:
    if ast.rule == 'Single':
        return ('single', QueryParts.of(ast.children[0]).canonical())
    left, right = ast.children
    return (_SET_RULES[ast.rule], QueryParts.of(left).canonical(), QueryParts.of(right).canonical())


def exact_set_match(pred: Optional[SqlAst], gold: SqlAst) -> bool:
    if pred is None:
        return False
    return canonical_sql(pred) == canonical_sql(gold)


# ====================================================================== #
#  Component matching
# ====================================================================== #

def _keywords(ast: SqlAst) -> Set[str]:
    words: Set[str] = set()
    if ast.rule in _SET_RULES:
        words.add(_SET_RULES[ast.rule])
    parts = QueryParts.of(ast.children[0])
    if parts.where is not None:
        words.add('where')
    if parts.group:
        words.add('group')
    if parts.having is not None:
        words.add('having')
    if parts.order_desc is not None:
        words.add('order')
    if parts.has_limit:
        words.add('limit')
    if parts.distinct:
        words.add('distinct')
    for cond in _leaf_conditions(parts.where) + _leaf_conditions(parts.having):
        if cond.rule in ('NotIn', 'NotLike'):
            words.add('not')
        if cond.rule in ('In', 'NotIn'):
            words.add('in')
        if cond.rule in ('Like', 'NotLike'):
            words.add('like')
        if cond.rule == 'Between':
            words.add('between')
    if 'Or' in _connectors(parts.where) + _connectors(parts.having):
        words.add('or')
    return words


def component_signatures(ast: SqlAst) -> Dict[str, Optional[tuple]]:
    """None means the component is absent from the query"""
    parts = QueryParts.of(ast.children[0])
    leaves = _leaf_conditions(parts.where)
    connectors = _connectors(parts.where) + _connectors(parts.having)
    keywords = _keywords(ast)
    iue = None
    if ast.rule in _SET_RULES:
        iue = (_SET_RULES[ast.rule], QueryParts.of(ast.children[1]).canonical())
    return {
        'SELECT': parts.select,
        'SELECT(no AGG)': _multiset(col for _, col in parts.select),
        'WHERE': _multiset(canonical_cond(c) for c in leaves) if leaves else None,
        'WHERE(no OP)': _multiset(_unit(c.children[0]) for c in leaves) if leaves else None,
        'GROUP BY': (parts.group, canonical_cond(parts.having) if parts.having is not None else None)
        if parts.group else None,
        'GROUP BY(no HAVING)': parts.group if parts.group else None,
        'ORDER BY': (parts.order_desc, parts.order, parts.has_limit) if parts.order_desc is not None else None,
        'AND/OR': _multiset(connectors) if connectors else None,
        'IUE': iue,
        'KEYWORDS': tuple(sorted(keywords)) if keywords else None,
    }


def component_match(pred: Optional[SqlAst], gold: SqlAst) -> Dict[str, bool]:
    gold_sig = component_signatures(gold)
    if pred is None:
        return {name: gold_sig[name] is None for name in COMPONENTS}
    pred_sig = component_signatures(pred)
    return {name: pred_sig[name] == gold_sig[name] for name in COMPONENTS}


# ====================================================================== #
#  Reports
# ====================================================================== #

def prf(tp: int, fp: int, fn: int) -> Tuple[float, float, float]:
    p = tp / (tp + fp) if tp + fp > 0 else 0.0
    r = tp / (tp + fn) if tp + fn > 0 else 0.0
    f = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return p, r, f


@dataclass
class LinkingMetrics:
    col_p: float = 0.0
    col_r: float = 0.0
    col_f: float = 0.0
    tab_p: float = 0.0
    tab_r: float = 0.0
    tab_f: float = 0.0
    counts: Dict[str, Dict[str, int]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            'col': {'p': self.col_p, 'r': self.col_r, 'f': self.col_f},
            'tab': {'p': self.tab_p, 'r': self.tab_r, 'f': self.tab_f},
            'counts': self.counts,
        }


@dataclass
class MatchReport:
    exact_match: float = 0.0
    components: Dict[str, float] = field(default_factory=dict)
    num_examples: int = 0
    num_unparsed: int = 0
    per_example: List[bool] = field(default_factory=list)

    def to_dict(self) -> dict:
        data = asdict(self)
        data.pop('per_example')
        return data


def predicted_mentions(a_tilde: np.ndarray, schema: DatabaseSchema, threshold: float = 0.0) -> Set[int]:
    """Schema items whose linking column has an entry above the threshold (wildcard excluded)"""
    if a_tilde.size == 0:
        return set()
    column_max = np.asarray(a_tilde).max(axis=0)
    return {int(j) for j in np.flatnonzero(column_max > threshold) if not schema.is_wildcard_item(int(j))}


def schema_linking_metrics(predicted: Sequence[Set[int]], gold: Sequence[Set[int]],
                           schemas: Sequence[DatabaseSchema]) -> LinkingMetrics:
    """Micro-averaged P/R/F over all examples, columns and tables counted separately"""
    counts = {'col': {'tp': 0, 'fp': 0, 'fn': 0}, 'tab': {'tp': 0, 'fp': 0, 'fn': 0}}
    for pred, gold_items, schema in zip(predicted, gold, schemas):
        pred_items = {j for j in pred if not schema.is_wildcard_item(j)}
        gold_items = {j for j in gold_items if not schema.is_wildcard_item(j)}
        for item in pred_items | gold_items:
            kind = 'tab' if schema.is_table_item(item) else 'col'
            if item in pred_items and item in gold_items:
                counts[kind]['tp'] += 1
            elif item in pred_items:
                counts[kind]['fp'] += 1
            else:
                counts[kind]['fn'] += 1
    col = prf(**counts['col'])
    tab = prf(**counts['tab'])
    return LinkingMetrics(*col, *tab, counts=counts)


class SqlScoringSystem:
    """Chấm điểm một tập dự đoán so với gold (exact match + component F1)"""

    def __init__(self, components: Sequence[str] = COMPONENTS):
        self.components = tuple(components)

    def score(self, preds: Sequence[Optional[SqlAst]], golds: Sequence[SqlAst]) -> MatchReport:
        if len(preds) != len(golds):
            raise ValueError(f"{len(preds)} predictions for {len(golds)} gold queries")
        totals = {name: {'pred': 0, 'gold': 0, 'match': 0} for name in self.components}
        per_example = []
        for pred, gold in zip(preds, golds):
            per_example.append(exact_set_match(pred, gold))
            gold_sig = component_signatures(gold)
            pred_sig = component_signatures(pred) if pred is not None else {n: None for n in self.components}
            for name in self.components:
                g, p = gold_sig[name], pred_sig[name]
                totals[name]['gold'] += g is not None
                totals[name]['pred'] += p is not None
                totals[name]['match'] += g is not None and p == g
        components = {}
        for name, t in totals.items():
            if t['pred'] == 0 and t['gold'] == 0:
                components[name] = 1.0
                continue
            components[name] = prf(t['match'], t['pred'] - t['match'], t['gold'] - t['match'])[2]
        n = len(golds)
        return MatchReport(
            exact_match=sum(per_example) / n if n else 0.0,
            components=components,
            num_examples=n,
            num_unparsed=sum(p is None for p in preds),
            per_example=per_example,
        )
