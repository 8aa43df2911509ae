#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Unit tests cho Initial Graph Probing + probe cache
"""

import numpy as np
import pytest
import torch

from src.ai.plm_encoder import JointEncoding
from src.ai.probing import GraphProber, filter_probe_scores, impact_score, probe_initial_graph, probe_scores
from src.core.config import ProbeConfig
from src.core.exceptions import EncoderCapacityError, ProbingError
from src.utils.cache_store import ProbeCache, ProbeResult


def _encoding(schema_rows):
    schema_vectors = torch.tensor(schema_rows, dtype=torch.float32)
    return JointEncoding(torch.zeros(1, schema_vectors.shape[1]), schema_vectors)


def test_impact_score_unit_distance():
    base = _encoding([[1.0, 0.0]])
    perturbed = _encoding([[0.0, 0.0]])
    assert impact_score(base, perturbed, 0, 0) == pytest.approx(1.0)


def test_impact_score_shape_mismatch():
    with pytest.raises(ProbingError):
        impact_score(_encoding([[1.0, 0.0]]), _encoding([[1.0, 0.0], [0.0, 1.0]]), 0, 0)


def test_filter_keeps_entries_at_threshold():
    raw = np.array([[0.69, 0.7, 1.0]])
    a_init, all_zero = filter_probe_scores(raw, tau=0.7, normalize=True)
    np.testing.assert_allclose(a_init, [[0.0, 0.7, 1.0]], rtol=1e-6)
    assert not all_zero


def test_filter_normalizes_by_example_max():
    raw = np.array([[2.0, 1.0], [0.5, 1.6]])
    a_init, _ = filter_probe_scores(raw, tau=0.7, normalize=True)
    np.testing.assert_allclose(a_init, [[1.0, 0.0], [0.0, 0.8]], rtol=1e-6)


def test_filter_tau_zero_keeps_everything():
    raw = np.array([[0.2, 0.0], [0.4, 0.8]])
    a_init, _ = filter_probe_scores(raw, tau=0.0, normalize=True)
    np.testing.assert_allclose(a_init, raw / 0.8, rtol=1e-6)


def test_filter_all_zero_scores():
    a_init, all_zero = filter_probe_scores(np.zeros((3, 4)), tau=0.7)
    assert all_zero
    assert a_init.shape == (3, 4)
    assert not a_init.any()


def test_filter_monotone_in_tau():
    rng = np.random.default_rng(0)
    raw = rng.random((6, 9))
    previous = None
    for tau in (0.0, 0.2, 0.5, 0.7, 0.9, 1.0):
        kept = filter_probe_scores(raw, tau)[0] > 0
        if previous is not None:
            assert not (kept & ~previous).any()
        previous = kept


def test_probe_matches_brute_force(builtin_encoder, corpus):
    """Row i equals the schema-vector shift when token i alone is masked"""
    example = corpus.find('examples-0024')
    schema = corpus.schema_of(example)
    raw = probe_scores(builtin_encoder, example, schema)
    assert raw.shape == (example.num_tokens, schema.num_items)
    with torch.no_grad():
        base = builtin_encoder.encode_joint(example.question_tokens, schema)
        for i in range(example.num_tokens):
            masked = builtin_encoder.encode_joint(example.question_tokens, schema, mask_position=i)
            for j in (0, 1, 17):
                assert raw[i, j] == pytest.approx(impact_score(base, masked, i, j), rel=1e-4, abs=1e-5)


def test_probe_forward_count_and_frozen_weights(builtin_encoder, corpus):
    example = corpus.train[0]
    schema = corpus.schema_of(example)
    checksum = builtin_encoder.parameter_checksum()
    calls = builtin_encoder.forward_calls
    result = probe_initial_graph(example, schema, ProbeConfig(tau=0.7), builtin_encoder)
    assert builtin_encoder.forward_calls - calls == example.num_tokens + 1
    assert builtin_encoder.parameter_checksum() == checksum
    assert result.a_init.shape == (example.num_tokens, schema.num_items)
    assert result.a_init.min() >= 0.0
    if not result.all_zero:
        assert result.a_init.max() == pytest.approx(1.0)


def test_encoder_capacity(builtin_encoder, make_example, concert_singer):
    question = ' '.join(['singer'] * 600)
    example = make_example(concert_singer, question, 'SELECT count(*) FROM singer', example_id='long-0000')
    with pytest.raises(EncoderCapacityError) as info:
        builtin_encoder.encode_joint(example.question_tokens, concert_singer, example_id=example.example_id)
    assert info.value.example_id == 'long-0000'
    assert info.value.limit == builtin_encoder.max_length


# ---------------------------------------------------------------------- #
#  Cache
# ---------------------------------------------------------------------- #

def test_cache_key_depends_on_settings(tmp_path):
    a = ProbeCache(str(tmp_path), 'builtin', 0.7, True)
    b = ProbeCache(str(tmp_path), 'builtin', 0.5, True)
    c = ProbeCache(str(tmp_path), 'bert-base-uncased', 0.7, True)
    d = ProbeCache(str(tmp_path), 'builtin', 0.7, False)
    keys = {cache.key('examples-0000') for cache in (a, b, c, d)}
    assert len(keys) == 4
    assert a.key('examples-0000') == ProbeCache(str(tmp_path), 'builtin', 0.7, True).key('examples-0000')


def test_cache_round_trip_and_corruption(tmp_path):
    cache = ProbeCache(str(tmp_path), 'builtin', 0.7, True)
    raw = np.arange(6, dtype=np.float32).reshape(2, 3)
    result = ProbeResult('examples-0001', filter_probe_scores(raw, 0.7)[0], raw, False)
    cache.save(result)
    loaded = cache.load('examples-0001', (2, 3))
    np.testing.assert_array_equal(loaded.a_init, result.a_init)
    assert cache.load('examples-0001', (3, 3)) is None  # stale shape
    assert cache.load('examples-0002') is None

    with open(cache.path('examples-0001'), 'wb') as f:
        f.write(b'not an npz archive')
    assert cache.load('examples-0001', (2, 3)) is None


def test_prober_uses_cache(builtin_encoder, corpus, tmp_path):
    examples = corpus.train[:3]
    cfg = ProbeConfig(tau=0.7, workers=2)
    cache = ProbeCache(str(tmp_path), builtin_encoder.name, cfg.tau, cfg.score_normalization)
    first = GraphProber(builtin_encoder, cfg, cache)
    results = first.probe_corpus(examples, corpus.schemas, show_progress=False)
    assert first.stats['probed'] == 3 and first.stats['hits'] == 0

    calls = builtin_encoder.forward_calls
    second = GraphProber(builtin_encoder, cfg, cache)
    again = second.probe_corpus(examples, corpus.schemas, show_progress=False)
    assert second.stats == {'hits': 3, 'probed': 0, 'all_zero': 0}
    assert builtin_encoder.forward_calls == calls
    for ex in examples:
        np.testing.assert_array_equal(results[ex.example_id].a_init, again[ex.example_id].a_init)
