#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Report - report.json, đường cong linking F1 theo epoch và heatmap alignment từ snapshot
"""

import glob
import json
import logging
import os
import re
from typing import Dict, List, Optional, Sequence

import matplotlib

matplotlib.use('Agg')
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from src.core.corpus import Example  # noqa: E402
from src.core.evaluation import LinkingMetrics, MatchReport  # noqa: E402
from src.core.schema import DatabaseSchema  # noqa: E402

logger = logging.getLogger(__name__)

REPORT_FILE = 'report.json'
CURVE_FILE = 'linking_f1.png'
HEATMAP_DIR = 'heatmaps'


def emit_report(history: Sequence[dict], match: MatchReport, linking: LinkingMetrics, out_dir: str,
                config_hash: str, baseline: Optional[LinkingMetrics] = None,
                extra: Optional[dict] = None) -> Dict[str, str]:
    """Writes report.json and the linking-F1 curve; returns the written paths"""
    if not history:
        raise ValueError("cannot emit a report without training history")
    os.makedirs(out_dir, exist_ok=True)
    report = {
        'exact_match': match.exact_match,
        'components': match.components,
        'linking': linking.to_dict(),
        'config_hash': config_hash,
        'num_examples': match.num_examples,
        'num_unparsed': match.num_unparsed,
        'history': list(history),
    }
    if baseline is not None:
        report['baseline_linking'] = baseline.to_dict()
    if extra:
        report.update(extra)
    report_path = os.path.join(out_dir, REPORT_FILE)
    with open(report_path, 'w', encoding='utf-8') as f:
        json.dump(report, f, indent=2, sort_keys=True)

    curve_path = plot_linking_curve(history, os.path.join(out_dir, CURVE_FILE), baseline)
    logger.info(f"✅ Report written to {report_path}")
    return {'report': report_path, 'curve': curve_path}


def plot_linking_curve(history: Sequence[dict], path: str, baseline: Optional[LinkingMetrics] = None) -> str:
    epochs = [h['epoch'] for h in history]
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(epochs, [h['col_f1'] for h in history], marker='o', label='Col F1')
    ax.plot(epochs, [h['tab_f1'] for h in history], marker='s', label='Tab F1')
    if baseline is not None:
        ax.axhline(baseline.col_f, color='tab:blue', linestyle='--', linewidth=1, label='Col F1 (exact match)')
        ax.axhline(baseline.tab_f, color='tab:orange', linestyle='--', linewidth=1, label='Tab F1 (exact match)')
    ax.set_xlabel('epoch')
    ax.set_ylabel('F1')
    ax.set_ylim(0.0, 1.05)
    ax.set_title('Schema linking F1')
    ax.legend(loc='lower right', fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_alignment_heatmap(matrix: np.ndarray, tokens: Sequence[str], schema: DatabaseSchema,
                           path: str, title: str = '') -> str:
    """One |Q| x |S| heatmap, question tokens on rows and schema items on columns"""
    matrix = np.asarray(matrix)
    q, s = matrix.shape
    fig, ax = plt.subplots(figsize=(max(4.0, 0.45 * s + 2), max(3.0, 0.4 * q + 1.5)))
    image = ax.imshow(matrix, cmap='Blues', vmin=0.0, vmax=max(1.0, float(matrix.max()) if matrix.size else 1.0),
                      aspect='auto')
    ax.set_yticks(range(q))
    ax.set_yticklabels(tokens, fontsize=8)
    ax.set_xticks(range(s))
    ax.set_xticklabels([schema.item_name(j) for j in range(s)], rotation=75, ha='right', fontsize=7)
    if title:
        ax.set_title(title, fontsize=9)
    fig.colorbar(image, ax=ax, fraction=0.03)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def list_snapshots(snapshot_dir: str) -> List[tuple]:
    """[(epoch, path)] sorted by epoch"""
    found = []
    for path in glob.glob(os.path.join(snapshot_dir, 'epoch-*.npz')):
        match = re.fullmatch(r'epoch-(\d+)\.npz', os.path.basename(path))
        if match:
            found.append((int(match.group(1)), path))
    return sorted(found)


def render_alignment_sequence(example: Example, schema: DatabaseSchema, snapshot_dir: str,
                              out_dir: str) -> List[str]:
    """Heatmap of one example for every snapshot that contains it"""
    target = os.path.join(out_dir, HEATMAP_DIR, example.example_id)
    os.makedirs(target, exist_ok=True)
    written = []
    for epoch, path in list_snapshots(snapshot_dir):
        with np.load(path) as data:
            if example.example_id not in data.files:
                continue
            matrix = data[example.example_id]
        out_path = os.path.join(target, f"epoch-{epoch}.png")
        plot_alignment_heatmap(matrix, example.question_tokens, schema, out_path,
                               title=f"{example.example_id} epoch {epoch}")
        written.append(out_path)
    if not written:
        logger.warning(f"⚠️ No snapshot contains {example.example_id} (snapshots: {snapshot_dir})")
    return written


def render_all_heatmaps(examples: Sequence[Example], schemas: Dict[str, DatabaseSchema], snapshot_dir: str,
                        out_dir: str) -> List[str]:
    written = []
    snapshots = list_snapshots(snapshot_dir)
    if not snapshots:
        return written
    with np.load(snapshots[-1][1]) as data:
        ids = set(data.files)
    for example in examples:
        if example.example_id in ids:
            written.extend(render_alignment_sequence(example, schemas[example.db_id], snapshot_dir, out_dir))
    return written
