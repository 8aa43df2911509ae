#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Contextual Encoder - Mã hóa chuỗi [CLS] question [SEP] tables [SEP] columns bằng pretrained LM
Fallback: BertModel nhỏ khởi tạo cục bộ với vocabulary lấy từ corpus (khi không tải được model)
"""

import hashlib
import logging
import os
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Tuple

import torch
import torch.nn as nn
from transformers import AutoModel, AutoTokenizer, BertConfig, BertModel, BertTokenizer

from src.core.exceptions import EncoderCapacityError
from src.core.schema import COLUMN_TYPES, DatabaseSchema

logger = logging.getLogger(__name__)

BUILTIN_ENCODER = 'builtin'
VOCAB_FILE = 'vocab.txt'
SPECIAL_TOKENS = ['[PAD]', '[UNK]', '[CLS]', '[SEP]', '[MASK]']
TABLE_WORD = 'table'


@dataclass
class JointEncoding:
    """Một vector cho mỗi node: question tokens, rồi schema items (tables trước, columns sau)"""
    question_vectors: torch.Tensor  # (|Q|, h)
    schema_vectors: torch.Tensor    # (|S|, h)

    @property
    def dim(self) -> int:
        return self.question_vectors.shape[-1]

    def all_vectors(self) -> torch.Tensor:
        return torch.cat([self.question_vectors, self.schema_vectors], dim=0)


@dataclass
class JointInput:
    input_ids: List[int]
    spans: List[Tuple[int, int]]  # [start, end) subword positions per node
    num_question: int


def build_vocab(words: Iterable[str]) -> List[str]:
    """Word-level vocabulary for the builtin encoder (special tokens first, then sorted words)"""
    vocab = set(words) | set(COLUMN_TYPES) | {TABLE_WORD}
    vocab -= set(SPECIAL_TOKENS)
    return SPECIAL_TOKENS + sorted(w for w in vocab if w and not w.isspace())


def write_vocab(path: str, words: Sequence[str]) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        f.write('\n'.join(words) + '\n')
    return path


class ContextualEncoder(nn.Module):
    """Pretrained (hoặc builtin) contextual encoder với mean pooling theo node"""

    def __init__(self, encoder_name: str = BUILTIN_ENCODER, vocab_path: Optional[str] = None,
                 builtin_layers: int = 4, builtin_hidden: int = 128, builtin_heads: int = 4,
                 seed: int = 42, mask_token: str = '[MASK]'):
        super().__init__()
        self.requested_name = encoder_name
        self.vocab_path = vocab_path
        self.forward_calls = 0
        self.source = BUILTIN_ENCODER
        self.tokenizer = None
        self.model = None

        if encoder_name != BUILTIN_ENCODER:
            try:
                logger.info(f"🔄 Loading contextual encoder {encoder_name}...")
                self.tokenizer = AutoTokenizer.from_pretrained(encoder_name)
                self.model = AutoModel.from_pretrained(encoder_name)
                self.source = encoder_name
                logger.info(f"✅ Encoder {encoder_name} loaded (hidden {self.model.config.hidden_size})")
            except Exception as e:
                logger.warning(f"⚠️ Failed to load {encoder_name}: {e}")
                logger.info("🔄 Falling back to builtin encoder...")
                self.tokenizer = None
                self.model = None

        if self.model is None:
            self._build_builtin(builtin_layers, builtin_hidden, builtin_heads, seed)

        self.mask_token = mask_token if mask_token in self.tokenizer.get_vocab() else self.tokenizer.mask_token
        self.mask_token_id = self.tokenizer.convert_tokens_to_ids(self.mask_token)
        self._word_cache = {}

    def _build_builtin(self, layers: int, hidden: int, heads: int, seed: int):
        if not self.vocab_path or not os.path.isfile(self.vocab_path):
            raise FileNotFoundError(
                f"builtin encoder needs a vocabulary file, none at {self.vocab_path!r} (run preprocess first)")
        self.tokenizer = BertTokenizer(vocab_file=self.vocab_path, do_lower_case=True)
        config = BertConfig(
            vocab_size=len(self.tokenizer.vocab),
            hidden_size=hidden,
            num_hidden_layers=layers,
            num_attention_heads=heads,
            intermediate_size=hidden * 4,
            max_position_embeddings=512,
        )
        # khởi tạo cố định theo seed, không ảnh hưởng RNG toàn cục
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(seed)
            self.model = BertModel(config)
        self.source = BUILTIN_ENCODER
        logger.info(f"✅ Builtin encoder ready ({layers} layers, hidden {hidden}, vocab {config.vocab_size})")

    # ------------------------------------------------------------------ #
    @property
    def name(self) -> str:
        return self.source

    @property
    def hidden_size(self) -> int:
        return self.model.config.hidden_size

    @property
    def max_length(self) -> int:
        limit = self.model.config.max_position_embeddings
        tok_limit = getattr(self.tokenizer, 'model_max_length', limit) or limit
        return min(limit, tok_limit)

    @property
    def device(self) -> torch.device:
        return next(self.model.parameters()).device

    def freeze(self) -> None:
        for p in self.model.parameters():
            p.requires_grad_(False)

    @property
    def frozen(self) -> bool:
        return not any(p.requires_grad for p in self.model.parameters())

    def parameter_checksum(self) -> str:
        digest = hashlib.sha1()
        for name, tensor in sorted(self.model.state_dict().items()):
            digest.update(name.encode('utf-8'))
            digest.update(tensor.detach().cpu().contiguous().numpy().tobytes())
        return digest.hexdigest()

    # ------------------------------------------------------------------ #
    def _word_ids(self, word: str) -> List[int]:
        ids = self._word_cache.get(word)
        if ids is None:
            pieces = self.tokenizer.tokenize(word) or [self.tokenizer.unk_token]
            ids = self.tokenizer.convert_tokens_to_ids(pieces)
            self._word_cache[word] = ids
        return ids

    def _append(self, ids: List[int], words: Sequence[str]) -> Tuple[int, int]:
        start = len(ids)
        for word in words:
            ids.extend(self._word_ids(word))
        return start, len(ids)

    def prepare(self, question_tokens: Sequence[str], schema: DatabaseSchema) -> JointInput:
        """[CLS] q1..qn [SEP] table [SEP] ... type column [SEP] ..."""
        tok = self.tokenizer
        ids = [tok.cls_token_id]
        spans = []
        for word in question_tokens:
            spans.append(self._append(ids, [word]))
        ids.append(tok.sep_token_id)
        for t in range(schema.num_tables):
            spans.append(self._append(ids, schema.table_tokens[t]))
            ids.append(tok.sep_token_id)
        for col in schema.columns:
            self._append(ids, [col.col_type])
            spans.append(self._append(ids, col.tokens))
            ids.append(tok.sep_token_id)
        return JointInput(ids, spans, len(question_tokens))

    def encode_joint(self, question_tokens: Sequence[str], schema: DatabaseSchema,
                     mask_position: Optional[int] = None, example_id: str = '<unnamed>',
                     prepared: Optional[JointInput] = None) -> JointEncoding:
        joint = prepared or self.prepare(question_tokens, schema)
        if len(joint.input_ids) > self.max_length:
            raise EncoderCapacityError(example_id, len(joint.input_ids), self.max_length)
        ids = list(joint.input_ids)
        if mask_position is not None:
            if not 0 <= mask_position < joint.num_question:
                raise IndexError(f"mask position {mask_position} outside question of length {joint.num_question}")
            start, end = joint.spans[mask_position]
            ids[start:end] = [self.mask_token_id] * (end - start)

        device = self.device
        input_ids = torch.tensor([ids], dtype=torch.long, device=device)
        attention_mask = torch.ones_like(input_ids)
        self.forward_calls += 1
        hidden = self.model(input_ids=input_ids, attention_mask=attention_mask).last_hidden_state[0]

        pooling = torch.zeros(len(joint.spans), hidden.shape[0], dtype=hidden.dtype, device=device)
        for node, (start, end) in enumerate(joint.spans):
            pooling[node, start:end] = 1.0 / max(1, end - start)
        vectors = pooling @ hidden
        return JointEncoding(vectors[:joint.num_question], vectors[joint.num_question:])

    def save_vocab(self, directory: str) -> Optional[str]:
        """Builtin vocabulary travels with checkpoints and caches"""
        if self.source != BUILTIN_ENCODER:
            return None
        os.makedirs(directory, exist_ok=True)
        return self.tokenizer.save_vocabulary(directory)[0]
