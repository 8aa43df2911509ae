#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Implicit Graph Learner - similarity học được giữa question và schema, giữ max theo từng schema,
trộn với A_init và lắp thành đồ thị có trọng số (edge types + weights)
"""

import logging
from dataclasses import dataclass
from typing import Optional

import torch
import torch.nn as nn
import torch.nn.functional as F

from src.core.corpus import HeteroGraph
from src.core.exceptions import GraphShapeError
from src.core.schema import Relation

logger = logging.getLogger(__name__)

NORM_EPS = 1e-12


def implicit_similarity(q_proj: torch.Tensor, s_proj: torch.Tensor, eps: float = NORM_EPS) -> torch.Tensor:
    """ReLU(cosine) between projected question rows and projected schema rows; 0 for near-zero norms"""
    q_norm = torch.linalg.vector_norm(q_proj, dim=-1, keepdim=True)
    s_norm = torch.linalg.vector_norm(s_proj, dim=-1, keepdim=True)
    valid = (q_norm >= eps) & (s_norm.transpose(0, 1) >= eps)
    denom = torch.where(valid, q_norm * s_norm.transpose(0, 1), torch.ones_like(q_norm * s_norm.transpose(0, 1)))
    cosine = (q_proj @ s_proj.transpose(0, 1)) / denom
    return F.relu(cosine) * valid.to(cosine.dtype)


def sparsify_per_schema(a: torch.Tensor) -> torch.Tensor:
    """Keep only the column maximum of every schema column (first row wins ties)"""
    if a.shape[0] == 0 or a.shape[1] == 0:
        return a
    top = a.argmax(dim=0, keepdim=True)
    mask = torch.zeros_like(a).scatter_(0, top, 1.0)
    return a * mask


def fuse_graphs(a_init: torch.Tensor, a_t: torch.Tensor, lam: float) -> torch.Tensor:
    if a_init.shape != a_t.shape:
        raise GraphShapeError(f"A_init {tuple(a_init.shape)} and A_t {tuple(a_t.shape)} differ in shape")
    return lam * a_init.detach().to(a_t.dtype) + (1.0 - lam) * a_t


class SimilarityModule(nn.Module):
    """W1 / W2 projections of question and schema vectors"""

    def __init__(self, input_dim: int, similarity_dim: Optional[int] = None):
        super().__init__()
        dim = similarity_dim or input_dim
        self.w1 = nn.Linear(input_dim, dim, bias=False)
        self.w2 = nn.Linear(input_dim, dim, bias=False)

    def forward(self, q_vectors: torch.Tensor, s_vectors: torch.Tensor) -> torch.Tensor:
        return implicit_similarity(self.w1(q_vectors), self.w2(s_vectors))


@dataclass
class WeightedGraph:
    edge_types: torch.Tensor  # long (|V|, |V|); [j, i] = relation of j -> i
    weights: torch.Tensor     # (|V|, |V|)
    num_question: int

    @property
    def num_nodes(self) -> int:
        return self.edge_types.shape[0]


def assemble_weighted_graph(static: HeteroGraph, a_tilde: torch.Tensor) -> WeightedGraph:
    q, s = static.num_question, static.num_schema
    if tuple(a_tilde.shape) != (q, s):
        raise GraphShapeError(f"linking matrix {tuple(a_tilde.shape)} does not fit a ({q}, {s}) graph")
    device = a_tilde.device
    edges = torch.as_tensor(static.edge_types, dtype=torch.long, device=device).clone()
    block = torch.where(
        a_tilde > 0,
        torch.full_like(a_tilde, int(Relation.SEMANTIC_LINK), dtype=torch.long),
        torch.full_like(a_tilde, int(Relation.NO_LINK), dtype=torch.long),
    )
    edges[:q, q:] = block
    edges[q:, :q] = block.transpose(0, 1)

    top = torch.cat([a_tilde.new_ones(q, q), a_tilde], dim=1)
    bottom = torch.cat([a_tilde.transpose(0, 1), a_tilde.new_ones(s, s)], dim=1)
    weights = torch.cat([top, bottom], dim=0)
    return WeightedGraph(edges, weights, q)
