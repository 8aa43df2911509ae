#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Exceptions - Các lỗi của hệ thống Text-to-SQL
"""

from typing import Optional, Tuple


class Text2SqlError(Exception):
    """Base class cho mọi lỗi của parser"""


class CorpusFormatError(Text2SqlError):
    """Malformed corpus file (names the file and the record index)"""

    def __init__(self, path: str, record_index: Optional[int], message: str):
        self.path = path
        self.record_index = record_index
        where = f"{path}" if record_index is None else f"{path} [record {record_index}]"
        super().__init__(f"{where}: {message}")


class CorpusReferenceError(Text2SqlError):
    """An example references a db_id that is not in the schema file"""

    def __init__(self, db_id: str, record_index: int):
        self.db_id = db_id
        self.record_index = record_index
        super().__init__(f"example {record_index} references unknown db_id '{db_id}'")


class SqlGrammarError(Text2SqlError):
    """SQL outside the reduced grammar, or not parseable at all"""

    def __init__(self, message: str, span: Tuple[int, int] = (0, 0), fragment: str = ""):
        self.span = span
        self.fragment = fragment
        detail = f" at {span[0]}:{span[1]}" if span != (0, 0) or fragment else ""
        if fragment:
            detail += f" near '{fragment}'"
        super().__init__(f"{message}{detail}")


class EncoderCapacityError(Text2SqlError):
    """Joint question/schema sequence longer than the encoder accepts"""

    def __init__(self, example_id: str, length: int, limit: int):
        self.example_id = example_id
        self.length = length
        self.limit = limit
        super().__init__(f"example '{example_id}' needs {length} positions, encoder limit is {limit}")


class ProbingError(Text2SqlError):
    """Internal inconsistency while probing (e.g. dimension mismatch)"""


class GraphShapeError(Text2SqlError):
    """Linking matrices or graphs with incompatible shapes"""


class NumericalInstabilityError(Text2SqlError):
    """Non-finite attention scores inside the graph encoder"""

    def __init__(self, layer: int, head: int):
        self.layer = layer
        self.head = head
        super().__init__(f"non-finite attention score in RGAT layer {layer}, head {head}")


class DecodingTruncatedError(Text2SqlError):
    """Decoder hit the action cap before the frontier emptied"""

    def __init__(self, max_steps: int):
        self.max_steps = max_steps
        super().__init__(f"decoding stopped after {max_steps} actions without completing the tree")


class ConfigurationError(Text2SqlError):
    """Invalid or contradictory run configuration"""


class TrainingDivergedError(Text2SqlError):
    """Loss became NaN/inf"""

    def __init__(self, epoch: int, batch: int, detail: str = ""):
        self.epoch = epoch
        self.batch = batch
        super().__init__(f"non-finite loss at epoch {epoch}, batch {batch}{': ' + detail if detail else ''}")


class ExampleLookupError(Text2SqlError, KeyError):
    """Unknown example id"""

    def __str__(self):
        return Exception.__str__(self)


class CheckpointError(Text2SqlError):
    """Missing or unreadable checkpoint directory"""
