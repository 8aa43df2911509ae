#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
SQL Grammar - Ngữ pháp SQL rút gọn, cây AST và chuỗi action (APPLYRULE / SELECTTABLE / SELECTCOLUMN)

SQL text is parsed with sqlglot, then lowered into the reduced abstract grammar
below. While lowering, every table and column the query names (including JOIN
conditions, which the grammar itself drops) is collected as a gold schema mention.
"""

import logging
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterator, List, Optional, Sequence, Set, Tuple, Union

import sqlglot
from sqlglot import exp
from sqlglot.errors import ParseError, TokenError

from src.core.exceptions import SqlGrammarError
from src.core.schema import DatabaseSchema

logger = logging.getLogger(__name__)

TABLE_TYPE = 'tab_id'
COLUMN_TYPE = 'col_id'
ROOT_TYPE = 'sql'
MAX_NESTING = 1

# ASDL-style: type = Rule(field types) | Rule | ...
GRAMMAR_TEXT = """
sql = Single(query) | Intersect(query, query) | Union(query, query) | Except(query, query)
query = Query(select, from, where, group_by, order_by)
select = Select(select_items) | SelectDistinct(select_items)
select_items = ItemMore(col_unit, select_items) | ItemLast(col_unit)
col_unit = NoAgg(col_id) | Max(col_id) | Min(col_id) | Count(col_id) | CountDistinct(col_id) | Sum(col_id) | Avg(col_id)
from = From(tables)
tables = TableMore(tab_id, tables) | TableLast(tab_id)
where = NoWhere | Where(cond)
cond = And(cond, cond) | Or(cond, cond) | Equal(col_unit, value) | NotEqual(col_unit, value) | GreaterThan(col_unit, value) | GreaterEqual(col_unit, value) | LessThan(col_unit, value) | LessEqual(col_unit, value) | Like(col_unit, value) | NotLike(col_unit, value) | In(col_unit, value) | NotIn(col_unit, value) | Between(col_unit, value, value)
value = Literal | Subquery(sql)
group_by = NoGroupBy | GroupBy(col_units, having)
col_units = UnitMore(col_unit, col_units) | UnitLast(col_unit)
having = NoHaving | Having(cond)
order_by = NoOrderBy | OrderAsc(col_units, limit) | OrderDesc(col_units, limit)
limit = NoLimit | Limit
"""

_RULE_PATTERN = re.compile(r'^\s*(\w+)\s*(?:\(([^)]*)\))?\s*$')


@dataclass(frozen=True)
class Production:
    rule_id: int
    lhs: str
    name: str
    fields: Tuple[str, ...]


class SqlGrammar:
    """Production table of the reduced SQL grammar"""

    def __init__(self, text: str = GRAMMAR_TEXT):
        self.productions: List[Production] = []
        self.by_name: Dict[str, Production] = {}
        self.rules_of: Dict[str, List[int]] = {}
        for line in text.strip().splitlines():
            lhs, rhs = (part.strip() for part in line.split('=', 1))
            for alternative in rhs.split('|'):
                match = _RULE_PATTERN.match(alternative)
                if not match:
                    raise ValueError(f"bad grammar alternative '{alternative}'")
                name, args = match.group(1), match.group(2)
                field_types = tuple(a.strip() for a in args.split(',')) if args else ()
                prod = Production(len(self.productions), lhs, name, field_types)
                if name in self.by_name:
                    raise ValueError(f"duplicate rule name {name}")
                self.productions.append(prod)
                self.by_name[name] = prod
                self.rules_of.setdefault(lhs, []).append(prod.rule_id)
        self.nonterminals: List[str] = list(self.rules_of)
        self.node_types: List[str] = self.nonterminals + [TABLE_TYPE, COLUMN_TYPE]
        self._check()

    def _check(self):
        for prod in self.productions:
            for ftype in prod.fields:
                if ftype not in self.rules_of and ftype not in (TABLE_TYPE, COLUMN_TYPE):
                    raise ValueError(f"rule {prod.name} uses undefined type {ftype}")
        for nt in self.nonterminals:
            if not self.rules_of[nt]:
                raise ValueError(f"non-terminal {nt} has no production")

    @property
    def num_rules(self) -> int:
        return len(self.productions)

    def is_terminal(self, node_type: str) -> bool:
        return node_type in (TABLE_TYPE, COLUMN_TYPE)

    def type_id(self, node_type: str) -> int:
        return self.node_types.index(node_type)

    def rule(self, name: str) -> Production:
        return self.by_name[name]


GRAMMAR = SqlGrammar()


@dataclass
class SqlAst:
    """Node of the abstract syntax tree; int children are table/column indices"""
    rule: str
    children: List[Union['SqlAst', int]] = field(default_factory=list)
    # literal text, ignored by equality and by the action serialization
    value: Optional[str] = field(default=None, compare=False)

    def iter_nodes(self) -> Iterator['SqlAst']:
        yield self
        for child in self.children:
            if isinstance(child, SqlAst):
                yield from child.iter_nodes()


class ActionKind(str, Enum):
    APPLY_RULE = 'ApplyRule'
    SELECT_TABLE = 'SelectTable'
    SELECT_COLUMN = 'SelectColumn'


@dataclass(frozen=True)
class Action:
    kind: ActionKind
    index: int

    def __repr__(self):
        return f"{self.kind.value}({self.index})"


def kind_for_type(node_type: str) -> ActionKind:
    if node_type == TABLE_TYPE:
        return ActionKind.SELECT_TABLE
    if node_type == COLUMN_TYPE:
        return ActionKind.SELECT_COLUMN
    return ActionKind.APPLY_RULE


class Frontier:
    """Immutable stack of open fields: (node type, step index of the parent action)"""

    __slots__ = ('grammar', 'stack', 'step')

    def __init__(self, grammar: SqlGrammar = GRAMMAR, stack: Tuple[Tuple[str, int], ...] = None, step: int = 0):
        self.grammar = grammar
        self.stack = stack if stack is not None else ((ROOT_TYPE, -1),)
        self.step = step

    @property
    def done(self) -> bool:
        return not self.stack

    @property
    def node_type(self) -> str:
        return self.stack[-1][0]

    @property
    def parent_step(self) -> int:
        return self.stack[-1][1]

    @property
    def kind(self) -> ActionKind:
        return kind_for_type(self.node_type)

    def legal_rules(self) -> List[int]:
        return self.grammar.rules_of.get(self.node_type, [])

    def is_legal(self, action: Action, num_tables: int = None, num_columns: int = None) -> bool:
        if self.done or action.kind != self.kind:
            return False
        if action.kind == ActionKind.APPLY_RULE:
            return action.index in self.legal_rules()
        limit = num_tables if action.kind == ActionKind.SELECT_TABLE else num_columns
        return action.index >= 0 and (limit is None or action.index < limit)

    def advance(self, action: Action) -> 'Frontier':
        if not self.is_legal(action):
            expected = self.node_type if not self.done else '<end>'
            raise SqlGrammarError(f"action {action!r} is illegal for frontier type '{expected}'")
        rest = self.stack[:-1]
        if action.kind == ActionKind.APPLY_RULE:
            prod = self.grammar.productions[action.index]
            rest = rest + tuple((ftype, self.step) for ftype in reversed(prod.fields))
        return Frontier(self.grammar, rest, self.step + 1)


def ast_to_actions(ast: SqlAst, grammar: SqlGrammar = GRAMMAR) -> List[Action]:
    """Depth-first (pre-order) serialization of a grammar-conforming tree"""
    actions: List[Action] = []

    def visit(node, node_type: str):
        if grammar.is_terminal(node_type):
            if isinstance(node, SqlAst) or not isinstance(node, int) or node < 0:
                raise SqlGrammarError(f"expected a {node_type} index, got {node!r}")
            actions.append(Action(kind_for_type(node_type), int(node)))
            return
        if not isinstance(node, SqlAst) or node.rule not in grammar.by_name:
            raise SqlGrammarError(f"expected a '{node_type}' node, got {node!r}")
        prod = grammar.by_name[node.rule]
        if prod.lhs != node_type:
            raise SqlGrammarError(f"rule {prod.name} builds '{prod.lhs}', not '{node_type}'")
        if len(node.children) != len(prod.fields):
            raise SqlGrammarError(f"rule {prod.name} expects {len(prod.fields)} children, got {len(node.children)}")
        actions.append(Action(ActionKind.APPLY_RULE, prod.rule_id))
        for child, ftype in zip(node.children, prod.fields):
            visit(child, ftype)

    visit(ast, ROOT_TYPE)
    return actions


def actions_to_ast(actions: Sequence[Action], grammar: SqlGrammar = GRAMMAR) -> SqlAst:
    """Inverse of ast_to_actions"""
    position = 0

    def build(node_type: str):
        nonlocal position
        if position >= len(actions):
            raise SqlGrammarError(f"action sequence ends while '{node_type}' is still open")
        action = actions[position]
        position += 1
        if action.kind != kind_for_type(node_type):
            raise SqlGrammarError(f"action {action!r} at step {position - 1} cannot fill '{node_type}'")
        if action.kind != ActionKind.APPLY_RULE:
            return action.index
        prod = grammar.productions[action.index]
        if prod.lhs != node_type:
            raise SqlGrammarError(f"rule {prod.name} at step {position - 1} cannot expand '{node_type}'")
        return SqlAst(prod.name, [build(ftype) for ftype in prod.fields])

    root = build(ROOT_TYPE)
    if position != len(actions):
        raise SqlGrammarError(f"{len(actions) - position} trailing action(s) after the tree is complete")
    return root


# ====================================================================== #
#  SQL text -> AST (sqlglot)
# ====================================================================== #

@dataclass
class ParsedSql:
    ast: SqlAst
    mentions: frozenset  # schema item indices (tables first, then columns)


@dataclass
class _Scope:
    tables: List[int]
    aliases: Dict[str, int]
    parent: Optional['_Scope'] = None

    def chain(self):
        scope = self
        while scope is not None:
            yield scope
            scope = scope.parent


_DOUBLE_QUOTED = re.compile(r'"((?:[^"\\]|\\.)*)"')

_AGGREGATES = (
    (exp.Max, 'Max'),
    (exp.Min, 'Min'),
    (exp.Count, 'Count'),
    (exp.Sum, 'Sum'),
    (exp.Avg, 'Avg'),
)

_COMPARISONS = (
    (exp.EQ, 'Equal'),
    (exp.NEQ, 'NotEqual'),
    (exp.GTE, 'GreaterEqual'),
    (exp.GT, 'GreaterThan'),
    (exp.LTE, 'LessEqual'),
    (exp.LT, 'LessThan'),
    (exp.Like, 'Like'),
)

# Intersect/Except subclass Union in older sqlglot releases, so test them first
_SET_OPERATIONS = (
    (exp.Intersect, 'Intersect'),
    (exp.Except, 'Except'),
    (exp.Union, 'Union'),
)

_LITERALS = (exp.Literal, exp.Neg, exp.Null, exp.Boolean)


def normalize_quotes(sql: str) -> str:
    """Spider writes string literals in double quotes; sqlite would read identifiers"""
    def to_single(match):
        body = match.group(1).replace("'", "''")
        return f"'{body}'"
    return _DOUBLE_QUOTED.sub(to_single, sql)


def _arg(node: exp.Expression, *names):
    for name in names:
        value = node.args.get(name)
        if value is not None:
            return value
    return None


class _SqlLowering:
    def __init__(self, schema: DatabaseSchema, text: str):
        self.schema = schema
        self.text = text
        self.mentions: Set[int] = set()

    # ---- errors -------------------------------------------------------- #
    def error(self, message: str, node: Optional[exp.Expression] = None) -> SqlGrammarError:
        fragment = node.sql(dialect='sqlite') if node is not None else ''
        start = self.text.lower().find(fragment.lower()) if fragment else -1
        span = (start, start + len(fragment)) if start >= 0 else (0, 0)
        return SqlGrammarError(message, span, fragment)

    # ---- statements ---------------------------------------------------- #
    def statement(self, node: exp.Expression, outer: Optional[_Scope], depth: int) -> SqlAst:
        while isinstance(node, (exp.Subquery, exp.Paren)):
            node = node.this
        for klass, rule in _SET_OPERATIONS:
            if isinstance(node, klass):
                if _arg(node, 'order', 'limit'):
                    raise self.error("ORDER BY/LIMIT on a set operation is outside the grammar", node)
                left = self.query(node.this, outer, depth)
                right = self.query(node.expression, outer, depth)
                return SqlAst(rule, [left, right])
        if isinstance(node, exp.Select):
            return SqlAst('Single', [self.query(node, outer, depth)])
        raise self.error("not a SELECT statement", node)

    def query(self, node: exp.Expression, outer: Optional[_Scope], depth: int) -> SqlAst:
        while isinstance(node, (exp.Subquery, exp.Paren)):
            node = node.this
        if not isinstance(node, exp.Select):
            raise self.error("nested set operations are outside the grammar", node)
        if _arg(node, 'with', 'offset'):
            raise self.error("WITH/OFFSET are outside the grammar", node)
        scope, from_ast = self.from_clause(node, outer)

        items = [self.col_unit(e, scope) for e in node.expressions]
        if not items:
            raise self.error("empty SELECT list", node)
        select_rule = 'SelectDistinct' if node.args.get('distinct') else 'Select'
        select_ast = SqlAst(select_rule, [self.cons(items, 'ItemMore', 'ItemLast')])

        where = node.args.get('where')
        where_ast = SqlAst('Where', [self.cond(where.this, scope, depth)]) if where else SqlAst('NoWhere')

        group = node.args.get('group')
        having = node.args.get('having')
        if group:
            units = [self.col_unit(e, scope) for e in group.expressions]
            having_ast = SqlAst('Having', [self.cond(having.this, scope, depth)]) if having else SqlAst('NoHaving')
            group_ast = SqlAst('GroupBy', [self.cons(units, 'UnitMore', 'UnitLast'), having_ast])
        elif having:
            raise self.error("HAVING without GROUP BY is outside the grammar", having)
        else:
            group_ast = SqlAst('NoGroupBy')

        order = node.args.get('order')
        limit = node.args.get('limit')
        if order:
            directions = {bool(o.args.get('desc')) for o in order.expressions}
            if len(directions) > 1:
                raise self.error("mixed ASC/DESC ordering is outside the grammar", order)
            units = [self.col_unit(o.this if isinstance(o, exp.Ordered) else o, scope) for o in order.expressions]
            if limit:
                limit_value = _arg(limit, 'expression', 'this')
                limit_ast = SqlAst('Limit', value=limit_value.sql(dialect='sqlite') if limit_value is not None else None)
            else:
                limit_ast = SqlAst('NoLimit')
            rule = 'OrderDesc' if directions.pop() else 'OrderAsc'
            order_ast = SqlAst(rule, [self.cons(units, 'UnitMore', 'UnitLast'), limit_ast])
        elif limit:
            raise self.error("LIMIT without ORDER BY is outside the grammar", limit)
        else:
            order_ast = SqlAst('NoOrderBy')

        return SqlAst('Query', [select_ast, from_ast, where_ast, group_ast, order_ast])

    def from_clause(self, node: exp.Select, outer: Optional[_Scope]) -> Tuple[_Scope, SqlAst]:
        from_ = _arg(node, 'from', 'from_')
        if from_ is None:
            raise self.error("missing FROM clause", node)
        joins = node.args.get('joins') or []
        sources = [from_.this] + [j.this for j in joins]
        scope = _Scope(tables=[], aliases={}, parent=outer)
        for source in sources:
            if not isinstance(source, exp.Table):
                raise self.error("only plain tables are allowed in FROM", source)
            tidx = self.schema.find_table(source.name)
            if tidx is None:
                raise self.error(f"unknown table '{source.name}' in database {self.schema.db_id}", source)
            scope.tables.append(tidx)
            scope.aliases[source.name.lower()] = tidx
            if source.alias:
                scope.aliases[source.alias.lower()] = tidx
            self.mentions.add(self.schema.table_item(tidx))
        # JOIN ... ON columns are mentions even though the grammar drops the condition
        for join in joins:
            on = join.args.get('on')
            if on is not None:
                for column in on.find_all(exp.Column):
                    self.resolve_column(column, scope)
        return scope, SqlAst('From', [self.cons(scope.tables, 'TableMore', 'TableLast')])

    # ---- expressions --------------------------------------------------- #
    def resolve_column(self, node: exp.Expression, scope: _Scope) -> int:
        schema = self.schema
        if isinstance(node, exp.Star) or (isinstance(node, exp.Column) and isinstance(node.this, exp.Star)):
            ci = schema.wildcard_index
            if ci is None:
                raise self.error(f"database {schema.db_id} has no '*' column", node)
            self.mentions.add(schema.column_item(ci))
            return ci
        if not isinstance(node, exp.Column):
            raise self.error("expected a column reference", node)
        name, qualifier = node.name, node.table
        ci = None
        if qualifier:
            for s in scope.chain():
                if qualifier.lower() in s.aliases:
                    ci = schema.find_column(s.aliases[qualifier.lower()], name)
                    break
            else:
                raise self.error(f"unknown table alias '{qualifier}'", node)
        else:
            for s in scope.chain():
                for tidx in s.tables:
                    ci = schema.find_column(tidx, name)
                    if ci is not None:
                        break
                if ci is not None:
                    break
        if ci is None:
            raise self.error(f"unknown column '{node.sql(dialect='sqlite')}' in database {schema.db_id}", node)
        self.mentions.add(schema.column_item(ci))
        return ci

    def col_unit(self, node: exp.Expression, scope: _Scope) -> SqlAst:
        while isinstance(node, (exp.Alias, exp.Paren)):
            node = node.this
        if isinstance(node, (exp.Column, exp.Star)):
            return SqlAst('NoAgg', [self.resolve_column(node, scope)])
        for klass, rule in _AGGREGATES:
            if isinstance(node, klass):
                inner = node.this
                if isinstance(inner, exp.Distinct):
                    if rule != 'Count' or len(inner.expressions) != 1:
                        raise self.error("DISTINCT is only supported inside COUNT", node)
                    rule, inner = 'CountDistinct', inner.expressions[0]
                if inner is None:
                    raise self.error("aggregate without argument", node)
                return SqlAst(rule, [self.resolve_column(inner, scope)])
        raise self.error("expression is outside the grammar (column or aggregate expected)", node)

    def cond(self, node: exp.Expression, scope: _Scope, depth: int) -> SqlAst:
        while isinstance(node, exp.Paren):
            node = node.this
        if isinstance(node, exp.And):
            return SqlAst('And', [self.cond(node.this, scope, depth), self.cond(node.expression, scope, depth)])
        if isinstance(node, exp.Or):
            return SqlAst('Or', [self.cond(node.this, scope, depth), self.cond(node.expression, scope, depth)])
        if isinstance(node, exp.Not):
            inner = node.this
            while isinstance(inner, exp.Paren):
                inner = inner.this
            if isinstance(inner, exp.In):
                return self.membership('NotIn', inner, scope, depth)
            if isinstance(inner, exp.Like):
                return SqlAst('NotLike', [self.col_unit(inner.this, scope), self.value(inner.expression, scope, depth)])
            raise self.error("NOT is only supported before IN / LIKE", node)
        if isinstance(node, exp.In):
            return self.membership('In', node, scope, depth)
        if isinstance(node, exp.Between):
            return SqlAst('Between', [
                self.col_unit(node.this, scope),
                self.value(node.args.get('low'), scope, depth),
                self.value(node.args.get('high'), scope, depth),
            ])
        for klass, rule in _COMPARISONS:
            if isinstance(node, klass):
                return SqlAst(rule, [self.col_unit(node.this, scope), self.value(node.expression, scope, depth)])
        raise self.error("condition is outside the grammar", node)

    def membership(self, rule: str, node: exp.In, scope: _Scope, depth: int) -> SqlAst:
        left = self.col_unit(node.this, scope)
        query = node.args.get('query')
        if query is not None:
            return SqlAst(rule, [left, self.subquery(query, scope, depth)])
        values = node.expressions
        if len(values) == 1 and isinstance(values[0], (exp.Select, exp.Subquery, exp.Union)):
            return SqlAst(rule, [left, self.subquery(values[0], scope, depth)])
        for v in values:
            if not isinstance(v, _LITERALS):
                raise self.error("IN list must hold literals", v)
        text = '(' + ', '.join(v.sql(dialect='sqlite') for v in values) + ')'
        return SqlAst(rule, [left, SqlAst('Literal', value=text)])

    def value(self, node: Optional[exp.Expression], scope: _Scope, depth: int) -> SqlAst:
        if node is None:
            raise self.error("missing comparison operand")
        while isinstance(node, exp.Paren):
            node = node.this
        if isinstance(node, (exp.Subquery, exp.Select, exp.Union)):
            return self.subquery(node, scope, depth)
        if isinstance(node, _LITERALS):
            return SqlAst('Literal', value=node.sql(dialect='sqlite'))
        raise self.error("comparison operand must be a literal or a subquery", node)

    def subquery(self, node: exp.Expression, scope: _Scope, depth: int) -> SqlAst:
        if depth + 1 > MAX_NESTING:
            raise self.error(f"subqueries nested deeper than {MAX_NESTING} level(s)", node)
        return SqlAst('Subquery', [self.statement(node, scope, depth + 1)])

    # ---- helpers ------------------------------------------------------- #
    @staticmethod
    def cons(items: List, more_rule: str, last_rule: str) -> SqlAst:
        node = SqlAst(last_rule, [items[-1]])
        for item in reversed(items[:-1]):
            node = SqlAst(more_rule, [item, node])
        return node


def _parse_error_span(text: str, error: ParseError) -> Tuple[Tuple[int, int], str]:
    details = error.errors[0] if getattr(error, 'errors', None) else {}
    highlight = details.get('highlight') or ''
    line, col = details.get('line'), details.get('col')
    if line is None or col is None:
        return (0, 0), highlight
    lines = text.split('\n')
    offset = sum(len(l) + 1 for l in lines[:max(0, line - 1)])
    end = offset + col
    return (max(0, end - len(highlight)), end), highlight


def parse_sql(sql: str, schema: DatabaseSchema) -> ParsedSql:
    """Parse SQL text into the reduced grammar; raises SqlGrammarError"""
    text = normalize_quotes(sql.strip().rstrip(';'))
    try:
        tree = sqlglot.parse_one(text, read='sqlite')
    except ParseError as e:
        span, fragment = _parse_error_span(text, e)
        raise SqlGrammarError(f"cannot parse SQL: {str(e).splitlines()[0]}", span, fragment) from e
    except TokenError as e:
        raise SqlGrammarError(f"cannot tokenize SQL: {e}") from e
    if tree is None:
        raise SqlGrammarError("empty SQL statement")
    lowering = _SqlLowering(schema, text)
    ast = lowering.statement(tree, None, 0)
    return ParsedSql(ast=ast, mentions=frozenset(lowering.mentions))


# ====================================================================== #
#  AST -> SQL text
# ====================================================================== #

_AGG_SQL = {'Max': 'MAX', 'Min': 'MIN', 'Count': 'COUNT', 'Sum': 'SUM', 'Avg': 'AVG'}
_OP_SQL = {
    'Equal': '=', 'NotEqual': '!=', 'GreaterThan': '>', 'GreaterEqual': '>=',
    'LessThan': '<', 'LessEqual': '<=', 'Like': 'LIKE', 'NotLike': 'NOT LIKE',
    'In': 'IN', 'NotIn': 'NOT IN',
}
_SET_SQL = {'Intersect': 'INTERSECT', 'Union': 'UNION', 'Except': 'EXCEPT'}
PLACEHOLDER_LITERAL = "'value'"


def flatten_cons(node: SqlAst) -> List:
    """ItemMore(a, ItemMore(b, ItemLast(c))) -> [a, b, c]"""
    items = []
    while len(node.children) == 2:
        items.append(node.children[0])
        node = node.children[1]
    items.append(node.children[0])
    return items


class SqlRenderer:
    """Render an AST as normalized SQL (uppercase keywords, single spaces)"""

    def __init__(self, schema: DatabaseSchema, literals: Optional[Sequence[str]] = None):
        self.schema = schema
        self._literals = list(literals or [])

    def render(self, ast: SqlAst) -> str:
        return ' '.join(self.sql(ast).split())

    def sql(self, node: SqlAst) -> str:
        if node.rule == 'Single':
            return self.query(node.children[0])
        if node.rule in _SET_SQL:
            return f"{self.query(node.children[0])} {_SET_SQL[node.rule]} {self.query(node.children[1])}"
        raise SqlGrammarError(f"cannot render '{node.rule}' as a statement")

    def query(self, node: SqlAst) -> str:
        select, from_, where, group, order = node.children
        tables = flatten_cons(from_.children[0])
        qualify = len(tables) > 1
        parts = ['SELECT']
        if select.rule == 'SelectDistinct':
            parts.append('DISTINCT')
        parts.append(', '.join(self.col_unit(u, qualify) for u in flatten_cons(select.children[0])))
        parts.append('FROM ' + self.from_tables(tables))
        if where.rule == 'Where':
            parts.append('WHERE ' + self.cond(where.children[0], qualify))
        if group.rule == 'GroupBy':
            parts.append('GROUP BY ' + ', '.join(self.col_unit(u, qualify) for u in flatten_cons(group.children[0])))
            having = group.children[1]
            if having.rule == 'Having':
                parts.append('HAVING ' + self.cond(having.children[0], qualify))
        if order.rule in ('OrderAsc', 'OrderDesc'):
            direction = 'DESC' if order.rule == 'OrderDesc' else 'ASC'
            parts.append('ORDER BY ' + ', '.join(self.col_unit(u, qualify) for u in flatten_cons(order.children[0]))
                         + ' ' + direction)
            limit = order.children[1]
            if limit.rule == 'Limit':
                parts.append('LIMIT ' + (limit.value or self._next_number() or '1'))
        return ' '.join(parts)

    def from_tables(self, tables: List[int]) -> str:
        names = self.schema.table_names
        text = names[tables[0]]
        for position, tidx in enumerate(tables[1:], start=1):
            text += f" JOIN {names[tidx]}"
            on = self._join_condition(tables[:position], tidx)
            if on:
                text += f" ON {on}"
        return text

    def _join_condition(self, previous: List[int], tidx: int) -> Optional[str]:
        for src, dst in sorted(self.schema.foreign_keys):
            a, b = self.schema.columns[src], self.schema.columns[dst]
            if a.table_index == tidx and b.table_index in previous:
                return f"{self.column(dst, True)} = {self.column(src, True)}"
            if b.table_index == tidx and a.table_index in previous:
                return f"{self.column(src, True)} = {self.column(dst, True)}"
        return None

    def column(self, ci: int, qualify: bool) -> str:
        col = self.schema.columns[ci]
        if col.is_wildcard:
            return '*'
        if qualify:
            return f"{self.schema.table_names[col.table_index]}.{col.name}"
        return col.name

    def col_unit(self, node: SqlAst, qualify: bool) -> str:
        col = self.column(node.children[0], qualify)
        if node.rule == 'NoAgg':
            return col
        if node.rule == 'CountDistinct':
            return f"COUNT(DISTINCT {col})"
        return f"{_AGG_SQL[node.rule]}({col})"

    def cond(self, node: SqlAst, qualify: bool) -> str:
        if node.rule in ('And', 'Or'):
            left, right = node.children
            left_sql = self.cond(left, qualify)
            right_sql = self.cond(right, qualify)
            if node.rule == 'And' and left.rule == 'Or':
                left_sql = f"({left_sql})"
            if right.rule in ('And', 'Or') and (right.rule == node.rule or node.rule == 'And'):
                right_sql = f"({right_sql})"
            return f"{left_sql} {node.rule.upper()} {right_sql}"
        unit = self.col_unit(node.children[0], qualify)
        if node.rule == 'Between':
            return f"{unit} BETWEEN {self.value(node.children[1])} AND {self.value(node.children[2])}"
        value = self.value(node.children[1])
        if node.rule in ('In', 'NotIn') and not value.startswith('('):
            value = f"({value})"
        return f"{unit} {_OP_SQL[node.rule]} {value}"

    def value(self, node: SqlAst) -> str:
        if node.rule == 'Subquery':
            return f"({self.sql(node.children[0])})"
        if node.value is not None:
            return node.value
        if self._literals:
            return self._literals.pop(0)
        return PLACEHOLDER_LITERAL

    def _next_number(self) -> Optional[str]:
        for position, literal in enumerate(self._literals):
            if re.fullmatch(r'-?\d+', literal):
                return self._literals.pop(position)
        return None


def render_sql(ast: SqlAst, schema: DatabaseSchema, literals: Optional[Sequence[str]] = None) -> str:
    return SqlRenderer(schema, literals).render(ast)
