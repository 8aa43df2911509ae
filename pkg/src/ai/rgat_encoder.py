#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
RGAT Encoder - Relational graph attention trên đồ thị question/schema,
relation embedding được nhân với trọng số cạnh M
"""

import logging
import math
from typing import Tuple

import torch
import torch.nn as nn

from src.ai.graph_learner import WeightedGraph
from src.ai.plm_encoder import JointEncoding
from src.core.exceptions import NumericalInstabilityError
from src.core.schema import NUM_RELATIONS

logger = logging.getLogger(__name__)


class RelationalAttentionLayer(nn.Module):
    """Một lớp RGAT dense: mọi cặp node đều attend, r^none cũng có embedding riêng"""

    def __init__(self, hidden_size: int, num_heads: int, dropout: float = 0.0, layer_index: int = 0):
        super().__init__()
        if hidden_size % num_heads != 0:
            raise ValueError(f"hidden size {hidden_size} not divisible by {num_heads} heads")
        self.hidden_size = hidden_size
        self.num_heads = num_heads
        self.head_dim = hidden_size // num_heads
        self.layer_index = layer_index
        self.w_q = nn.Linear(hidden_size, hidden_size, bias=False)
        self.w_k = nn.Linear(hidden_size, hidden_size, bias=False)
        self.w_v = nn.Linear(hidden_size, hidden_size, bias=False)
        self.w_o = nn.Linear(hidden_size, hidden_size, bias=False)
        self.layer_norm = nn.LayerNorm(hidden_size)
        self.ffn = nn.Sequential(
            nn.Linear(hidden_size, hidden_size * 4),
            nn.ReLU(),
            nn.Dropout(dropout),
            nn.Linear(hidden_size * 4, hidden_size),
        )
        self.attn_dropout = nn.Dropout(dropout)
        self.last_attention = None

    def forward(self, x: torch.Tensor, relations: torch.Tensor, graph: WeightedGraph) -> torch.Tensor:
        """x: (|V|, d); relations: (R, d) shared relation table"""
        v_count = x.shape[0]
        h, dk = self.num_heads, self.head_dim
        q = self.w_q(x).view(v_count, h, dk)
        k = self.w_k(x).view(v_count, h, dk)
        v = self.w_v(x).view(v_count, h, dk)

        # rel[j, i] = M_ji * F(E_ji), split into heads
        rel = relations[graph.edge_types] * graph.weights.to(x.dtype).unsqueeze(-1)
        rel = rel.view(v_count, v_count, h, dk)

        scores = torch.einsum('ihd,jhd->hij', q, k) + torch.einsum('ihd,jihd->hij', q, rel)
        scores = scores / math.sqrt(dk)
        if not torch.isfinite(scores).all():
            bad_head = int((~torch.isfinite(scores)).flatten(1).any(dim=1).nonzero()[0])
            raise NumericalInstabilityError(self.layer_index, bad_head)

        attn = torch.softmax(scores, dim=-1)
        self.last_attention = attn.detach()
        attn = self.attn_dropout(attn)

        out = torch.einsum('hij,jhd->ihd', attn, v) + torch.einsum('hij,jihd->ihd', attn, rel)
        out = out.reshape(v_count, self.hidden_size)
        return self.ffn(self.layer_norm(x + self.w_o(out)))


class RgatEncoder(nn.Module):
    """L lớp RGAT với bảng relation embedding dùng chung cho mọi lớp"""

    def __init__(self, input_dim: int, hidden_size: int = 256, num_layers: int = 8, num_heads: int = 8,
                 dropout: float = 0.2, num_relations: int = NUM_RELATIONS):
        super().__init__()
        self.hidden_size = hidden_size
        self.input_proj = nn.Identity() if input_dim == hidden_size else nn.Linear(input_dim, hidden_size)
        self.relation_embedding = nn.Embedding(num_relations, hidden_size)
        self.layers = nn.ModuleList(
            RelationalAttentionLayer(hidden_size, num_heads, dropout, layer_index=l) for l in range(num_layers)
        )

    def init_node_states(self, encoding: JointEncoding) -> torch.Tensor:
        """X^0: question rows, then tables, then columns"""
        return self.input_proj(encoding.all_vectors())

    def encode_graph(self, x0: torch.Tensor, graph: WeightedGraph) -> Tuple[torch.Tensor, torch.Tensor]:
        x = x0
        for layer in self.layers:
            x = layer(x, self.relation_embedding.weight, graph)
        return x[:graph.num_question], x[graph.num_question:]

    def forward(self, encoding: JointEncoding, graph: WeightedGraph) -> Tuple[torch.Tensor, torch.Tensor]:
        return self.encode_graph(self.init_node_states(encoding), graph)
