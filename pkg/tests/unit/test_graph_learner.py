#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Unit tests cho implicit similarity, sparsification, fusion và weighted graph
"""

import math

import numpy as np
import pytest
import torch

from src.ai.graph_learner import (
    SimilarityModule,
    assemble_weighted_graph,
    fuse_graphs,
    implicit_similarity,
    sparsify_per_schema,
)
from src.core.corpus import build_static_edges
from src.core.exceptions import GraphShapeError
from src.core.schema import Relation


def test_similarity_parallel_and_opposite():
    q = torch.tensor([[1.0, 0.0], [-1.0, 0.0], [0.0, 3.0]])
    s = torch.tensor([[2.0, 0.0]])
    a = implicit_similarity(q, s)
    assert a[0, 0].item() == pytest.approx(1.0)
    assert a[1, 0].item() == 0.0  # cosine -1 clipped
    assert a[2, 0].item() == pytest.approx(0.0, abs=1e-7)


def test_similarity_zero_vector_is_zero():
    q = torch.tensor([[0.0, 0.0], [1.0, 1.0]])
    s = torch.tensor([[1.0, 1.0], [0.0, 0.0]])
    a = implicit_similarity(q, s)
    assert torch.isfinite(a).all()
    assert a[0].sum().item() == 0.0
    assert a[:, 1].sum().item() == 0.0
    assert a[1, 0].item() == pytest.approx(1.0)


def test_similarity_range():
    torch.manual_seed(0)
    a = implicit_similarity(torch.randn(7, 5), torch.randn(11, 5))
    assert a.shape == (7, 11)
    assert (a >= 0).all() and (a <= 1.0 + 1e-6).all()


def test_similarity_module_gradcheck():
    torch.manual_seed(0)
    module = SimilarityModule(4, 3).double()
    q = torch.randn(3, 4, dtype=torch.float64, requires_grad=True)
    s = torch.randn(5, 4, dtype=torch.float64, requires_grad=True)
    assert torch.autograd.gradcheck(lambda a, b: module(a, b), (q, s), eps=1e-6, atol=1e-4)


def test_sparsify_keeps_column_max():
    a = torch.tensor([[0.2, 0.9, 0.0],
                      [0.8, 0.1, 0.0],
                      [0.8, 0.3, 0.0]])
    out = sparsify_per_schema(a)
    expected = torch.tensor([[0.0, 0.9, 0.0],
                             [0.8, 0.0, 0.0],
                             [0.0, 0.0, 0.0]])
    assert torch.equal(out, expected)  # ties: first row wins
    assert ((out > 0).sum(dim=0) <= 1).all()


def test_sparsify_passes_gradient_to_max_only():
    a = torch.tensor([[0.2, 0.9], [0.8, 0.1]], requires_grad=True)
    sparsify_per_schema(a).sum().backward()
    assert torch.equal(a.grad, torch.tensor([[0.0, 1.0], [1.0, 0.0]]))


def test_fuse_examples():
    a_init = torch.tensor([[1.0, 0.0]])
    a_t = torch.tensor([[0.5, 0.0]])
    assert fuse_graphs(a_init, a_t, 0.2)[0, 0].item() == pytest.approx(0.6)
    assert torch.equal(fuse_graphs(a_init, a_t, 0.0), a_t)
    assert torch.equal(fuse_graphs(a_init, a_t, 1.0), a_init)


def test_fuse_detaches_init():
    a_init = torch.ones(2, 2, requires_grad=True)
    a_t = torch.full((2, 2), 0.5, requires_grad=True)
    fuse_graphs(a_init, a_t, 0.2).sum().backward()
    assert a_init.grad is None
    assert torch.allclose(a_t.grad, torch.full((2, 2), 0.8))


def test_fuse_shape_mismatch():
    with pytest.raises(GraphShapeError):
        fuse_graphs(torch.zeros(2, 3), torch.zeros(3, 2), 0.5)


def test_assemble_weighted_graph(make_example, orchestra):
    example = make_example(orchestra, 'List conductor names', 'SELECT name FROM conductor')
    static = build_static_edges(example, orchestra)
    q, s = static.num_question, static.num_schema
    a_tilde = torch.zeros(q, s)
    a_tilde[1, 0] = 0.9   # conductor -> table conductor
    a_tilde[2, 4] = 0.3   # names -> conductor.Name
    graph = assemble_weighted_graph(static, a_tilde)

    assert graph.num_nodes == q + s
    assert graph.edge_types[1, q + 0].item() == Relation.SEMANTIC_LINK
    assert graph.edge_types[q + 0, 1].item() == Relation.SEMANTIC_LINK
    assert graph.edge_types[0, q + 0].item() == Relation.NO_LINK
    assert graph.weights[2, q + 4].item() == pytest.approx(0.3)
    assert graph.weights[q + 4, 2].item() == pytest.approx(0.3)
    assert graph.weights[0, q + 0].item() == 0.0
    assert torch.equal(graph.weights[:q, :q], torch.ones(q, q))
    assert torch.equal(graph.weights[q:, q:], torch.ones(s, s))
    # static question/schema blocks untouched
    assert np.array_equal(graph.edge_types[:q, :q].numpy(), static.edge_types[:q, :q])
    assert np.array_equal(graph.edge_types[q:, q:].numpy(), static.edge_types[q:, q:])
    # edge types and weights stay symmetric across the linking blocks
    assert torch.equal(graph.weights[:q, q:], graph.weights[q:, :q].T)


def test_assemble_shape_mismatch(make_example, orchestra):
    example = make_example(orchestra, 'List conductor names', 'SELECT name FROM conductor')
    static = build_static_edges(example, orchestra)
    with pytest.raises(GraphShapeError):
        assemble_weighted_graph(static, torch.zeros(static.num_question + 1, static.num_schema))


# ---------------------------------------------------------------------- #
#  Float64 scalar-loop references over many seeds
# ---------------------------------------------------------------------- #

SEEDS = list(range(20))
GRAD_SEEDS = list(range(10))


def _loop_similarity(q, s):
    out = torch.zeros(q.shape[0], s.shape[0], dtype=torch.float64)
    for i in range(q.shape[0]):
        for j in range(s.shape[0]):
            qn = math.sqrt(sum(float(x) ** 2 for x in q[i]))
            sn = math.sqrt(sum(float(x) ** 2 for x in s[j]))
            if qn < 1e-12 or sn < 1e-12:
                continue
            dot = sum(float(a) * float(b) for a, b in zip(q[i], s[j]))
            out[i, j] = max(0.0, dot / (qn * sn))
    return out


def _loop_sparsify(a):
    out = torch.zeros_like(a)
    for j in range(a.shape[1]):
        best = 0
        for i in range(1, a.shape[0]):
            if float(a[i, j]) > float(a[best, j]):
                best = i
        out[best, j] = a[best, j]
    return out


@pytest.mark.parametrize('seed', SEEDS)
def test_similarity_matches_scalar_loop(seed):
    gen = torch.Generator().manual_seed(seed)
    q = torch.randn(1 + seed % 6, 5, generator=gen, dtype=torch.float64)
    s = torch.randn(2 + seed % 7, 5, generator=gen, dtype=torch.float64)
    if seed % 4 == 0:
        s[0] = 0.0
    assert torch.allclose(implicit_similarity(q, s), _loop_similarity(q, s), atol=1e-12)


@pytest.mark.parametrize('seed', SEEDS)
def test_similarity_module_matches_projected_loop(seed):
    torch.manual_seed(seed)
    module = SimilarityModule(6, 4).double()
    q = torch.randn(3, 6, dtype=torch.float64)
    s = torch.randn(5, 6, dtype=torch.float64)
    with torch.no_grad():
        expected = _loop_similarity(q @ module.w1.weight.T, s @ module.w2.weight.T)
        assert torch.allclose(module(q, s), expected, atol=1e-12)


@pytest.mark.parametrize('seed', SEEDS)
def test_sparsify_matches_scalar_loop(seed):
    gen = torch.Generator().manual_seed(seed)
    a = torch.rand(1 + seed % 5, 1 + seed % 8, generator=gen, dtype=torch.float64)
    a = torch.round(a * 4) / 4  # coarse grid forces ties
    assert torch.equal(sparsify_per_schema(a), _loop_sparsify(a))


@pytest.mark.parametrize('seed', SEEDS)
def test_fuse_matches_scalar_loop(seed):
    gen = torch.Generator().manual_seed(seed)
    a_init = torch.rand(3, 4, generator=gen, dtype=torch.float64)
    a_t = torch.rand(3, 4, generator=gen, dtype=torch.float64)
    lam = seed / (len(SEEDS) - 1)
    out = fuse_graphs(a_init, a_t, lam)
    for i in range(3):
        for j in range(4):
            assert out[i, j].item() == pytest.approx(lam * a_init[i, j].item() + (1 - lam) * a_t[i, j].item(),
                                                     abs=1e-14)


def _away_from_relu_kink(module, seed, margin=0.1):
    """Inputs whose projected cosines all stay at least `margin` away from 0"""
    gen = torch.Generator().manual_seed(seed)
    for _ in range(500):
        q = torch.randn(3, 4, generator=gen, dtype=torch.float64)
        s = torch.randn(4, 4, generator=gen, dtype=torch.float64)
        with torch.no_grad():
            qp, sp = module.w1(q), module.w2(s)
            cosine = (qp @ sp.T) / (qp.norm(dim=-1, keepdim=True) * sp.norm(dim=-1).unsqueeze(0))
        if (cosine.abs() > margin).all():
            return q, s
    raise AssertionError(f"no kink-free inputs for seed {seed}")


@pytest.mark.parametrize('seed', GRAD_SEEDS)
def test_similarity_gradcheck_many_points(seed):
    torch.manual_seed(100 + seed)
    module = SimilarityModule(4, 3).double()
    q, s = _away_from_relu_kink(module, seed)
    q.requires_grad_(True)
    s.requires_grad_(True)
    assert torch.autograd.gradcheck(lambda a, b: module(a, b), (q, s), eps=1e-6, atol=1e-5)


@pytest.mark.parametrize('seed', GRAD_SEEDS)
def test_sparsify_gradcheck_many_points(seed):
    gen = torch.Generator().manual_seed(seed)
    # distinct values so the column argmax does not move under the finite-difference step
    a = (torch.randperm(20, generator=gen).to(torch.float64) / 20 + 0.01).reshape(4, 5)
    a.requires_grad_(True)
    assert torch.autograd.gradcheck(sparsify_per_schema, (a,), eps=1e-6, atol=1e-6)


@pytest.mark.parametrize('seed', GRAD_SEEDS)
def test_fuse_gradcheck_many_points(seed):
    gen = torch.Generator().manual_seed(seed)
    a_init = torch.rand(3, 4, generator=gen, dtype=torch.float64)
    a_t = torch.rand(3, 4, generator=gen, dtype=torch.float64, requires_grad=True)
    lam = (seed + 1) / 11
    assert torch.autograd.gradcheck(lambda t: fuse_graphs(a_init, t, lam), (a_t,), eps=1e-6, atol=1e-6)
