#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
AST Decoder - LSTM decoder sinh cây SQL theo thứ tự depth-first bằng các action
APPLYRULE / SELECTTABLE / SELECTCOLUMN, bị ràng buộc bởi ngữ pháp
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import torch
import torch.nn as nn
import torch.nn.functional as F

from src.core.exceptions import DecodingTruncatedError, SqlGrammarError
from src.core.sql_grammar import GRAMMAR, Action, ActionKind, Frontier, SqlGrammar

logger = logging.getLogger(__name__)


@dataclass
class DecoderMemory:
    """Encoder outputs the decoder attends to and points into"""
    question: torch.Tensor  # (|Q|, d)
    schema: torch.Tensor    # (|T| + |C|, d)
    num_tables: int

    @property
    def tables(self) -> torch.Tensor:
        return self.schema[:self.num_tables]

    @property
    def columns(self) -> torch.Tensor:
        return self.schema[self.num_tables:]

    @property
    def nodes(self) -> torch.Tensor:
        return torch.cat([self.question, self.schema], dim=0)


@dataclass
class DecoderState:
    h: torch.Tensor          # (1, hidden)
    c: torch.Tensor          # (1, hidden)
    prev_action: torch.Tensor  # (1, action)
    frontier: Frontier
    action_history: Tuple[torch.Tensor, ...] = ()
    hidden_history: Tuple[torch.Tensor, ...] = ()


@dataclass
class StepOutput:
    log_probs: torch.Tensor  # (n_choices,) masked log-distribution for the frontier kind
    kind: ActionKind
    h: torch.Tensor
    c: torch.Tensor


@dataclass
class Hypothesis:
    actions: List[Action]
    score: float


class AstDecoder(nn.Module):
    """Grammar-constrained LSTM decoder với bilinear pointer cho bảng / cột"""

    def __init__(self, encoder_dim: int, hidden_size: int = 512, action_embed_size: int = 128,
                 type_embed_size: int = 128, dropout: float = 0.2, context_attention: bool = True,
                 max_steps: int = 200, grammar: SqlGrammar = GRAMMAR):
        super().__init__()
        self.grammar = grammar
        self.hidden_size = hidden_size
        self.max_steps = max_steps
        self.context_attention = context_attention

        self.rule_embed = nn.Embedding(grammar.num_rules, action_embed_size)
        self.table_action = nn.Linear(encoder_dim, action_embed_size)
        self.column_action = nn.Linear(encoder_dim, action_embed_size)
        self.type_embed = nn.Embedding(len(grammar.node_types), type_embed_size)
        self.start_action = nn.Parameter(torch.zeros(1, action_embed_size))
        self.start_parent_hidden = nn.Parameter(torch.zeros(1, hidden_size))

        self.lstm = nn.LSTMCell(2 * action_embed_size + hidden_size + type_embed_size, hidden_size)
        self.init_state = nn.Linear(encoder_dim, hidden_size)
        if context_attention:
            self.attn_query = nn.Linear(hidden_size, encoder_dim, bias=False)
            self.combine = nn.Linear(hidden_size + encoder_dim, hidden_size, bias=False)

        self.rule_out = nn.Linear(hidden_size, grammar.num_rules)
        self.table_query = nn.Linear(hidden_size, action_embed_size, bias=False)
        self.table_key = nn.Linear(encoder_dim, action_embed_size, bias=False)
        self.column_query = nn.Linear(hidden_size, action_embed_size, bias=False)
        self.column_key = nn.Linear(encoder_dim, action_embed_size, bias=False)
        self.dropout = nn.Dropout(dropout)

        rule_mask = torch.full((len(grammar.node_types), grammar.num_rules), float('-inf'))
        for type_index, node_type in enumerate(grammar.node_types):
            for rule_id in grammar.rules_of.get(node_type, []):
                rule_mask[type_index, rule_id] = 0.0
        self.register_buffer('rule_mask', rule_mask, persistent=False)

    # ------------------------------------------------------------------ #
    def initial_state(self, memory: DecoderMemory) -> DecoderState:
        pooled = memory.nodes.mean(dim=0, keepdim=True)
        h = torch.tanh(self.init_state(pooled))
        return DecoderState(h=h, c=torch.zeros_like(h), prev_action=self.start_action, frontier=Frontier(self.grammar))

    def action_embedding(self, action: Action, memory: DecoderMemory) -> torch.Tensor:
        if action.kind == ActionKind.APPLY_RULE:
            return self.rule_embed.weight[action.index].unsqueeze(0)
        if action.kind == ActionKind.SELECT_TABLE:
            return self.table_action(memory.tables[action.index]).unsqueeze(0)
        return self.column_action(memory.columns[action.index]).unsqueeze(0)

    def decode_step(self, state: DecoderState, memory: DecoderMemory) -> StepOutput:
        frontier = state.frontier
        if frontier.done:
            raise SqlGrammarError("decode_step called with an empty frontier")
        parent = frontier.parent_step
        parent_action = state.action_history[parent] if parent >= 0 else self.start_action
        parent_hidden = state.hidden_history[parent] if parent >= 0 else self.start_parent_hidden
        type_index = self.grammar.type_id(frontier.node_type)
        type_vec = self.type_embed.weight[type_index].unsqueeze(0)

        lstm_input = self.dropout(torch.cat([state.prev_action, parent_action, parent_hidden, type_vec], dim=-1))
        h, c = self.lstm(lstm_input, (state.h, state.c))
        out = h
        if self.context_attention:
            nodes = memory.nodes
            weights = torch.softmax(self.attn_query(h) @ nodes.transpose(0, 1), dim=-1)
            context = weights @ nodes
            out = torch.tanh(self.combine(torch.cat([h, context], dim=-1)))
        out = self.dropout(out)

        kind = frontier.kind
        if kind == ActionKind.APPLY_RULE:
            if not frontier.legal_rules():
                raise SqlGrammarError(f"no production for non-terminal '{frontier.node_type}'")
            logits = self.rule_out(out)[0] + self.rule_mask[type_index]
        elif kind == ActionKind.SELECT_TABLE:
            if memory.num_tables == 0:
                raise SqlGrammarError("SELECTTABLE over a schema without tables")
            logits = (self.table_query(out) @ self.table_key(memory.tables).transpose(0, 1))[0]
        else:
            if memory.columns.shape[0] == 0:
                raise SqlGrammarError("SELECTCOLUMN over a schema without columns")
            logits = (self.column_query(out) @ self.column_key(memory.columns).transpose(0, 1))[0]
        return StepOutput(F.log_softmax(logits, dim=-1), kind, h, c)

    def advance(self, state: DecoderState, step: StepOutput, action: Action, memory: DecoderMemory) -> DecoderState:
        embedding = self.action_embedding(action, memory)
        return DecoderState(
            h=step.h,
            c=step.c,
            prev_action=embedding,
            frontier=state.frontier.advance(action),
            action_history=state.action_history + (embedding,),
            hidden_history=state.hidden_history + (step.h,),
        )

    # ------------------------------------------------------------------ #
    def score_actions(self, memory: DecoderMemory, actions: Sequence[Action]) -> torch.Tensor:
        """Teacher-forced per-step log-probabilities of a gold action sequence"""
        state = self.initial_state(memory)
        step_log_probs = []
        for action in actions:
            step = self.decode_step(state, memory)
            if action.kind != step.kind:
                raise SqlGrammarError(f"gold action {action!r} does not fit frontier '{state.frontier.node_type}'")
            step_log_probs.append(step.log_probs[action.index])
            state = self.advance(state, step, action, memory)
        if not state.frontier.done:
            raise SqlGrammarError("gold action sequence leaves open frontier nodes")
        return torch.stack(step_log_probs)

    def sql_loss(self, memory: DecoderMemory, actions: Sequence[Action]) -> torch.Tensor:
        """Negative log-likelihood of the gold actions"""
        return -self.score_actions(memory, actions).sum()

    @torch.no_grad()
    def greedy_decode(self, memory: DecoderMemory) -> Hypothesis:
        state = self.initial_state(memory)
        actions: List[Action] = []
        score = 0.0
        while not state.frontier.done:
            if len(actions) >= self.max_steps:
                raise DecodingTruncatedError(self.max_steps)
            step = self.decode_step(state, memory)
            index = int(step.log_probs.argmax())
            action = Action(step.kind, index)
            score += float(step.log_probs[index])
            actions.append(action)
            state = self.advance(state, step, action, memory)
        return Hypothesis(actions, score)

    @torch.no_grad()
    def beam_decode(self, memory: DecoderMemory, beam_size: int) -> Hypothesis:
        if beam_size < 1:
            raise ValueError("beam size must be >= 1")
        live: List[Tuple[DecoderState, List[Action], float]] = [(self.initial_state(memory), [], 0.0)]
        finished: List[Hypothesis] = []
        for _ in range(self.max_steps):
            candidates = []
            for state, actions, score in live:
                step = self.decode_step(state, memory)
                k = min(beam_size, step.log_probs.shape[0])
                top_lp, top_idx = step.log_probs.topk(k)
                for lp, idx in zip(top_lp.tolist(), top_idx.tolist()):
                    if lp == float('-inf'):
                        continue
                    candidates.append((score + lp, state, step, actions, Action(step.kind, idx)))
            candidates.sort(key=lambda item: item[0], reverse=True)
            live = []
            for total, state, step, actions, action in candidates[:beam_size]:
                new_state = self.advance(state, step, action, memory)
                if new_state.frontier.done:
                    finished.append(Hypothesis(actions + [action], total))
                else:
                    live.append((new_state, actions + [action], total))
            best_finished = max((h.score for h in finished), default=float('-inf'))
            # log-probs only decrease, so no live hypothesis can overtake
            if not live or len(finished) >= beam_size or max(s for _, _, s in live) <= best_finished:
                break
        if not finished:
            raise DecodingTruncatedError(self.max_steps)
        return max(finished, key=lambda h: h.score)

    def decode(self, memory: DecoderMemory, beam_size: int = 1) -> Hypothesis:
        """Best completed hypothesis; beam search never returns less than greedy"""
        if beam_size <= 1:
            return self.greedy_decode(memory)
        best: Optional[Hypothesis] = None
        try:
            best = self.beam_decode(memory, beam_size)
        except DecodingTruncatedError:
            logger.debug("⚠️ beam search found no complete tree, using greedy rollout")
        try:
            greedy = self.greedy_decode(memory)
        except DecodingTruncatedError:
            if best is None:
                raise
            return best
        return greedy if best is None or greedy.score > best.score else best
