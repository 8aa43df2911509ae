#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Chạy lại bảng ablation, bảng oracle và so sánh synonym-set ở quy mô nhỏ

Mỗi dòng = một lần train (cùng seed) với một ablation flag / oracle mode;
kết quả trung bình trên nhiều seed được ghi vào một file JSON.
"""

import argparse
import copy
import json
import logging
import os
import sys
from statistics import mean

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import main  # noqa: E402
from src.core.config import ABLATIONS, ORACLE_MODES, RunConfig, setup_logging  # noqa: E402

logger = logging.getLogger('text2sql.ablation')

ROWS = [('full', [], None)] \
    + [(f"w/o {name}", [name], None) for name in ABLATIONS] \
    + [(f"oracle {mode}", [], mode) for mode in ORACLE_MODES if mode != 'full']  # full needs links on every example


def run_row(base: RunConfig, name: str, ablations, oracle, seed: int, out_root: str, dev_file: str = None) -> dict:
    config = copy.deepcopy(base)
    config.ablations = list(ablations)
    config.oracle = oracle
    config.train.seed = seed
    if dev_file:
        config.paths.dev_file = dev_file
    tag = f"{name.replace(' ', '_').replace('/', '')}-seed{seed}"
    config.paths.ckpt_dir = os.path.join(out_root, 'ckpt', tag)
    config.paths.report_dir = os.path.join(out_root, 'runs', tag)
    config.validate()

    logger.info(f"🔄 {name} (seed {seed}, dev={config.paths.dev_file})")
    result = main.cmd_train(config)['result']
    return {
        'exact_match': result.match.exact_match,
        'col_f': result.linking.col_f,
        'tab_f': result.linking.tab_f,
    }


def summarize(runs):
    return {key: mean(r[key] for r in runs) for key in runs[0]}


def main_cli(argv=None) -> int:
    parser = argparse.ArgumentParser(description='Desk-scale ablation / oracle / synonym tables')
    parser.add_argument('--config', help='JSON run configuration')
    parser.add_argument('--data-dir')
    parser.add_argument('--out', default='./output/ablation')
    parser.add_argument('--seeds', type=int, nargs='+', default=[1, 2, 3])
    parser.add_argument('--epochs', type=int)
    parser.add_argument('--synonym-dev', default='dev_syn.json',
                        help='synonym-substituted dev split (skipped when missing)')
    parser.add_argument('--log-level', default='INFO')
    args = parser.parse_args(argv)
    setup_logging(args.log_level)

    base = RunConfig.from_json_file(args.config) if args.config else RunConfig()
    if args.data_dir:
        base.paths.data_dir = args.data_dir
    if args.epochs:
        base.train.epochs = args.epochs
    os.makedirs(args.out, exist_ok=True)

    table = {}
    try:
        for name, ablations, oracle in ROWS:
            runs = [run_row(base, name, ablations, oracle, seed, args.out) for seed in args.seeds]
            table[name] = {'mean': summarize(runs), 'runs': runs}
            logger.info(f"📈 {name}: {table[name]['mean']}")

        synonym = {}
        if os.path.isfile(os.path.join(base.paths.data_dir, args.synonym_dev)):
            for name, ablations in (('full', []), ('exact_match', ['exact_match'])):
                runs = [run_row(base, f"syn {name}", ablations, None, seed, args.out, args.synonym_dev)
                        for seed in args.seeds]
                synonym[name] = {'mean': summarize(runs), 'runs': runs}
            wins = sum(
                int(f['col_f'] > e['col_f'] and f['tab_f'] > e['tab_f'])
                for f, e in zip(synonym['full']['runs'], synonym['exact_match']['runs'])
            )
            synonym['full_beats_exact_match'] = f"{wins}/{len(args.seeds)}"
        else:
            logger.warning(f"⚠️ {args.synonym_dev} not found, synonym comparison skipped")
    except Exception as e:
        logger.error(f"❌ {type(e).__name__}: {e}")
        return 1

    summary = {'config_hash': base.config_hash(), 'seeds': args.seeds, 'rows': table, 'synonym': synonym}
    path = os.path.join(args.out, 'ablation_table.json')
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(summary, f, indent=2, sort_keys=True)

    print(f"\n{'row':<22}{'EM':>8}{'Col F':>8}{'Tab F':>8}")
    for name, row in table.items():
        m = row['mean']
        print(f"{name:<22}{m['exact_match']:>8.3f}{m['col_f']:>8.3f}{m['tab_f']:>8.3f}")
    logger.info(f"✅ Summary written to {path}")
    return 0


if __name__ == '__main__':
    sys.exit(main_cli())
