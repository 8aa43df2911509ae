#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Initial Graph Probing - Xây dựng A_init bằng cách che (mask) từng token của câu hỏi
và đo độ dịch chuyển (Euclidean) của embedding các schema item
"""

import logging
from concurrent.futures import ThreadPoolExecutor, as_completed
from typing import Dict, Iterable, Tuple

import numpy as np
import torch
from tqdm import tqdm

from src.ai.plm_encoder import ContextualEncoder, JointEncoding
from src.core.config import ProbeConfig
from src.core.corpus import Example
from src.core.exceptions import ProbingError
from src.core.schema import DatabaseSchema
from src.utils.cache_store import ProbeCache, ProbeResult

logger = logging.getLogger(__name__)


def impact_score(base: JointEncoding, perturbed: JointEncoding, i: int, j: int) -> float:
    """||s_j(base) - s_j(perturbed)||_2; i only names the masked token"""
    if base.schema_vectors.shape != perturbed.schema_vectors.shape:
        raise ProbingError(
            f"schema encodings differ in shape {tuple(base.schema_vectors.shape)} "
            f"vs {tuple(perturbed.schema_vectors.shape)} (masked token {i})")
    return float(torch.linalg.vector_norm(base.schema_vectors[j] - perturbed.schema_vectors[j]))


def filter_probe_scores(raw: np.ndarray, tau: float, normalize: bool = True) -> Tuple[np.ndarray, bool]:
    """Max-normalize (optional) then zero every entry below tau; returns (A_init, all_zero)"""
    raw = np.asarray(raw, dtype=np.float64)
    peak = raw.max() if raw.size else 0.0
    if not peak > 0:
        return np.zeros(raw.shape, dtype=np.float32), True
    scores = raw / peak if normalize else raw
    a_init = np.where(scores >= tau, scores, 0.0)
    return a_init.astype(np.float32), False


@torch.no_grad()
def probe_scores(encoder: ContextualEncoder, example: Example, schema: DatabaseSchema) -> np.ndarray:
    """Raw |Q| x |S| impact matrix from |Q| + 1 encoder passes"""
    was_training = encoder.training
    encoder.eval()
    try:
        joint = encoder.prepare(example.question_tokens, schema)
        base = encoder.encode_joint(example.question_tokens, schema, example_id=example.example_id, prepared=joint)
        raw = np.zeros((example.num_tokens, schema.num_items), dtype=np.float32)
        for i in range(example.num_tokens):
            perturbed = encoder.encode_joint(example.question_tokens, schema, mask_position=i,
                                             example_id=example.example_id, prepared=joint)
            if perturbed.schema_vectors.shape != base.schema_vectors.shape:
                raise ProbingError(f"{example.example_id}: masked encoding changed shape at token {i}")
            raw[i] = torch.linalg.vector_norm(base.schema_vectors - perturbed.schema_vectors, dim=-1).cpu().numpy()
    finally:
        encoder.train(was_training)
    return raw


def probe_initial_graph(example: Example, schema: DatabaseSchema, cfg: ProbeConfig,
                        encoder: ContextualEncoder) -> ProbeResult:
    raw = probe_scores(encoder, example, schema)
    a_init, all_zero = filter_probe_scores(raw, cfg.tau, cfg.score_normalization)
    if all_zero:
        logger.warning(f"⚠️ {example.example_id}: probe scores are all zero, no linking prior")
    return ProbeResult(example.example_id, a_init, raw, all_zero)


class GraphProber:
    """Chạy probing cho cả corpus; worker threads tính toán, một writer duy nhất ghi cache"""

    def __init__(self, encoder: ContextualEncoder, cfg: ProbeConfig, cache: ProbeCache):
        self.encoder = encoder
        self.cfg = cfg
        self.cache = cache
        self.stats = {'hits': 0, 'probed': 0, 'all_zero': 0}

    def probe_corpus(self, examples: Iterable[Example], schemas: Dict[str, DatabaseSchema],
                     show_progress: bool = True) -> Dict[str, ProbeResult]:
        results: Dict[str, ProbeResult] = {}
        todo = []
        for example in examples:
            schema = schemas[example.db_id]
            cached = self.cache.load(example.example_id, (example.num_tokens, schema.num_items))
            if cached is not None:
                results[example.example_id] = cached
                self.stats['hits'] += 1
            else:
                todo.append(example)

        if todo:
            logger.info(f"🔄 Probing {len(todo)} example(s) with {self.encoder.name} "
                        f"(tau={self.cfg.tau}, workers={self.cfg.workers})...")
        was_training = self.encoder.training
        self.encoder.eval()
        progress = tqdm(total=len(todo), desc='probing', disable=not show_progress or not todo)
        with ThreadPoolExecutor(max_workers=self.cfg.workers) as executor:
            futures = {
                executor.submit(probe_initial_graph, ex, schemas[ex.db_id], self.cfg, self.encoder): ex
                for ex in todo
            }
            for future in as_completed(futures):
                result = future.result()
                self.cache.save(result)
                results[result.example_id] = result
                self.stats['probed'] += 1
                self.stats['all_zero'] += int(result.all_zero)
                progress.update(1)
        progress.close()
        self.encoder.train(was_training)

        logger.info(f"✅ Probing done: {self.stats['probed']} probed, {self.stats['hits']} cache hit(s)")
        return results
