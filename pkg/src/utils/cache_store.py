#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Cache store - preprocessed corpus (JSONL) và probe cache (.npz mỗi example)
"""

import hashlib
import json
import logging
import os
from dataclasses import dataclass
from typing import Iterable, List, Optional

import numpy as np

logger = logging.getLogger(__name__)

PREPROCESSED_FILE = 'preprocessed.jsonl'
PROBE_DIR = 'probe'


@dataclass
class ProbeResult:
    example_id: str
    a_init: np.ndarray   # (|Q|, |S|) filtered probe graph
    raw: np.ndarray      # (|Q|, |S|) Euclidean impact scores
    all_zero: bool = False

    @property
    def shape(self):
        return self.a_init.shape


def write_preprocessed(cache_dir: str, records: Iterable[dict]) -> str:
    """One JSON record per example, keys sorted so reruns produce identical bytes"""
    os.makedirs(cache_dir, exist_ok=True)
    path = os.path.join(cache_dir, PREPROCESSED_FILE)
    tmp_path = path + '.tmp'
    with open(tmp_path, 'w', encoding='utf-8') as f:
        for record in records:
            f.write(json.dumps(record, sort_keys=True, ensure_ascii=False) + '\n')
    os.replace(tmp_path, path)
    return path


def read_preprocessed(cache_dir: str) -> List[dict]:
    path = os.path.join(cache_dir, PREPROCESSED_FILE)
    with open(path, 'r', encoding='utf-8') as f:
        return [json.loads(line) for line in f if line.strip()]


def file_sha1(path: str) -> str:
    digest = hashlib.sha1()
    with open(path, 'rb') as f:
        for chunk in iter(lambda: f.read(1 << 16), b''):
            digest.update(chunk)
    return digest.hexdigest()


class ProbeCache:
    """Probe cache: một file .npz cho mỗi (example id, encoder, tau, normalization)"""

    def __init__(self, cache_dir: str, encoder_name: str, tau: float, normalization: bool):
        self.directory = os.path.join(cache_dir, PROBE_DIR)
        self.encoder_name = encoder_name
        self.tau = float(tau)
        self.normalization = bool(normalization)
        os.makedirs(self.directory, exist_ok=True)

    def key(self, example_id: str) -> str:
        blob = json.dumps([example_id, self.encoder_name, repr(self.tau), self.normalization])
        return hashlib.sha1(blob.encode('utf-8')).hexdigest()

    def path(self, example_id: str) -> str:
        return os.path.join(self.directory, f"{self.key(example_id)}.npz")

    def contains(self, example_id: str) -> bool:
        return os.path.isfile(self.path(example_id))

    def load(self, example_id: str, expected_shape: Optional[tuple] = None) -> Optional[ProbeResult]:
        """None on miss; a corrupted entry is reported and treated as a miss"""
        path = self.path(example_id)
        if not os.path.isfile(path):
            return None
        try:
            with np.load(path, allow_pickle=False) as data:
                shape = tuple(int(x) for x in data['shape'])
                a_init = data['a_init'].astype(np.float32)
                raw = data['raw'].astype(np.float32)
                all_zero = bool(data['all_zero'])
                stored_id = str(data['example_id'])
            if a_init.shape != shape or raw.shape != shape or stored_id != example_id:
                raise ValueError(f"header {shape} does not match stored arrays")
            if expected_shape is not None and shape != tuple(expected_shape):
                raise ValueError(f"cached shape {shape}, expected {tuple(expected_shape)}")
            if not (np.isfinite(a_init).all() and np.isfinite(raw).all()):
                raise ValueError("non-finite values")
        except Exception as e:
            logger.warning(f"⚠️ Corrupted probe cache entry for {example_id} ({e}), re-probing")
            return None
        return ProbeResult(example_id, a_init, raw, all_zero)

    def save(self, result: ProbeResult) -> str:
        path = self.path(result.example_id)
        tmp_path = path + '.tmp.npz'
        np.savez(
            tmp_path,
            example_id=np.array(result.example_id),
            shape=np.array(result.a_init.shape, dtype=np.int64),
            a_init=result.a_init.astype(np.float32),
            raw=result.raw.astype(np.float32),
            all_zero=np.array(result.all_zero),
        )
        os.replace(tmp_path, path)
        return path
