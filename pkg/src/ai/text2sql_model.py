#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Text2SQL Model - ghép contextual encoder + implicit graph learner + RGAT + AST decoder
"""

import logging
from dataclasses import dataclass
from typing import Callable, Optional

import torch
import torch.nn as nn

from src.ai.ast_decoder import AstDecoder, DecoderMemory, Hypothesis
from src.ai.graph_learner import (
    SimilarityModule,
    WeightedGraph,
    assemble_weighted_graph,
    fuse_graphs,
    sparsify_per_schema,
)
from src.ai.plm_encoder import ContextualEncoder, JointEncoding
from src.ai.rgat_encoder import RgatEncoder
from src.core.config import ModelConfig
from src.core.corpus import Example, HeteroGraph
from src.core.schema import DatabaseSchema

logger = logging.getLogger(__name__)

LinkTransform = Callable[[torch.Tensor], torch.Tensor]


@dataclass
class LinkingOutput:
    encoding: JointEncoding
    a_t: torch.Tensor      # sparsified implicit graph
    a_tilde: torch.Tensor  # fused graph fed to the encoder
    graph: WeightedGraph


@dataclass
class ModelOutput:
    linking: LinkingOutput
    memory: DecoderMemory
    loss_sql: Optional[torch.Tensor] = None


class Text2SqlModel(nn.Module):
    """Toàn bộ parser: encode -> link -> RGAT -> decode"""

    def __init__(self, encoder: ContextualEncoder, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.encoder = encoder
        dim = encoder.hidden_size
        self.similarity = SimilarityModule(dim, cfg.similarity_dim)
        self.rgat = RgatEncoder(dim, cfg.gnn_hidden_size, cfg.gnn_layers, cfg.gnn_heads, cfg.dropout)
        self.decoder = AstDecoder(
            encoder_dim=cfg.gnn_hidden_size,
            hidden_size=cfg.decoder_hidden,
            action_embed_size=cfg.action_embed_size,
            type_embed_size=cfg.type_embed_size,
            dropout=cfg.decoder_dropout,
            context_attention=cfg.context_attention,
            max_steps=cfg.max_steps,
        )
        if cfg.freeze_encoder:
            encoder.freeze()

    @property
    def device(self) -> torch.device:
        return next(self.rgat.parameters()).device

    def link(self, example: Example, schema: DatabaseSchema, static: HeteroGraph, a_init: torch.Tensor,
             lam: float, transform: Optional[LinkTransform] = None) -> LinkingOutput:
        """Implicit graph A^(t), fusion with A_init, weighted graph; transform rewrites the fused graph"""
        encoding = self.encoder.encode_joint(example.question_tokens, schema, example_id=example.example_id)
        a_t = sparsify_per_schema(self.similarity(encoding.question_vectors, encoding.schema_vectors))
        a_init = a_init.to(device=a_t.device, dtype=a_t.dtype)
        a_tilde = fuse_graphs(a_init, a_t, lam)
        if transform is not None:
            a_tilde = transform(a_tilde)
        graph = assemble_weighted_graph(static, a_tilde)
        return LinkingOutput(encoding, a_t, a_tilde, graph)

    def forward(self, example: Example, schema: DatabaseSchema, static: HeteroGraph, a_init: torch.Tensor,
                lam: float, transform: Optional[LinkTransform] = None, teacher_forcing: bool = True) -> ModelOutput:
        linking = self.link(example, schema, static, a_init, lam, transform)
        q_out, s_out = self.rgat(linking.encoding, linking.graph)
        memory = DecoderMemory(q_out, s_out, schema.num_tables)
        loss = self.decoder.sql_loss(memory, example.gold_actions) if teacher_forcing else None
        return ModelOutput(linking, memory, loss)

    @torch.no_grad()
    def parse(self, example: Example, schema: DatabaseSchema, static: HeteroGraph, a_init: torch.Tensor,
              lam: float, transform: Optional[LinkTransform] = None, beam_size: int = 1):
        output = self.forward(example, schema, static, a_init, lam, transform, teacher_forcing=False)
        hypothesis: Hypothesis = self.decoder.decode(output.memory, beam_size)
        return hypothesis, output
