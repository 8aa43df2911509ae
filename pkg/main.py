#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Text-to-SQL với schema linking tăng cường ngữ nghĩa
Probing -> implicit graph learning -> RGAT -> AST decoder

Các lệnh: preprocess, probe, train, eval, inspect
"""

import argparse
import json
import logging
import os
import sys
import warnings
from typing import List, Optional

warnings.filterwarnings("ignore", category=FutureWarning)
warnings.filterwarnings("ignore", category=UserWarning)

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from src.core.config import ABLATIONS, LOGGING_CONFIG, ORACLE_MODES, RunConfig, setup_logging  # noqa: E402
from src.core.exceptions import Text2SqlError  # noqa: E402

logger = logging.getLogger('text2sql')


def check_dependencies() -> bool:
    """Kiểm tra các dependencies cần thiết"""
    required_packages = ['torch', 'transformers', 'numpy', 'matplotlib', 'sqlglot', 'tqdm']
    missing_packages = []
    for package in required_packages:
        try:
            __import__(package)
        except ImportError:
            missing_packages.append(package)
    if missing_packages:
        logger.error(f"❌ Missing packages: {', '.join(missing_packages)} (pip install -r requirements.txt)")
        return False
    return True


# ====================================================================== #
#  Config
# ====================================================================== #

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description='Semantic schema-linking Text-to-SQL parser')
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help='JSON run configuration')
    common.add_argument('--data-dir')
    common.add_argument('--cache-dir')
    common.add_argument('--ckpt-dir')
    common.add_argument('--report-dir')
    common.add_argument('--train-file')
    common.add_argument('--dev-file')
    common.add_argument('--encoder', help="Hugging Face model id or 'builtin'")
    common.add_argument('--tau', type=float)
    common.add_argument('--lambda', dest='lam', type=float)
    common.add_argument('--mu', type=float)
    common.add_argument('--epochs', type=int)
    common.add_argument('--batch-size', type=int)
    common.add_argument('--seed', type=int)
    common.add_argument('--beam', type=int)
    common.add_argument('--freeze-encoder', action='store_true', default=None)
    common.add_argument('--ablate', action='append', choices=ABLATIONS, default=None)
    common.add_argument('--oracle', choices=ORACLE_MODES)
    common.add_argument('--skip-unsupported', action='store_true',
                        help='skip examples whose SQL is outside the grammar instead of failing')
    common.add_argument('--log-level', default=LOGGING_CONFIG['level'])
    common.add_argument('--log-file')

    sub = parser.add_subparsers(dest='command', required=True)
    sub.add_parser('preprocess', parents=[common], help='validate corpus, build graphs and gold actions')
    sub.add_parser('probe', parents=[common], help='build the probe graph cache')
    sub.add_parser('train', parents=[common], help='train and write checkpoint + report')
    eval_parser = sub.add_parser('eval', parents=[common], help='evaluate a checkpoint')
    eval_parser.add_argument('--checkpoint', help='checkpoint directory (default: latest)')
    eval_parser.add_argument('--split', choices=('dev', 'train'), default='dev')
    inspect_parser = sub.add_parser('inspect', parents=[common], help='alignment heatmaps of one example')
    inspect_parser.add_argument('example_id')
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    config = RunConfig.from_json_file(args.config) if args.config else RunConfig()
    overrides = {
        ('paths', 'data_dir'): args.data_dir,
        ('paths', 'cache_dir'): args.cache_dir,
        ('paths', 'ckpt_dir'): args.ckpt_dir,
        ('paths', 'report_dir'): args.report_dir,
        ('paths', 'train_file'): args.train_file,
        ('paths', 'dev_file'): args.dev_file,
        ('model', 'encoder_name'): args.encoder,
        ('model', 'freeze_encoder'): args.freeze_encoder,
        ('probe', 'tau'): args.tau,
        ('fusion', 'lam'): args.lam,
        ('train', 'mu'): args.mu,
        ('train', 'epochs'): args.epochs,
        ('train', 'batch_size'): args.batch_size,
        ('train', 'seed'): args.seed,
        ('train', 'beam_size'): args.beam,
    }
    for (section, key), value in overrides.items():
        if value is not None:
            setattr(getattr(config, section), key, value)
    if args.ablate:
        config.ablations = sorted(set(config.ablations) | set(args.ablate))
    if args.oracle:
        config.oracle = args.oracle
    config.train.tau = config.probe.tau
    config.train.lam = config.fusion.lam
    return config.validate()


def load_corpus(config: RunConfig, skip_unsupported: bool = False):
    from src.core.corpus import Corpus
    paths = config.paths
    return Corpus.from_dir(paths.data_dir, paths.train_file, paths.dev_file, skip_unsupported=skip_unsupported)


# ====================================================================== #
#  Commands
# ====================================================================== #

def cmd_preprocess(config: RunConfig, skip_unsupported: bool = False) -> str:
    """Validate the corpus and write one cache record per example"""
    from src.ai.trainer import ensure_vocab
    from src.core.corpus import build_static_edges
    from src.utils.cache_store import write_preprocessed

    corpus = load_corpus(config, skip_unsupported)
    records = []
    for example in corpus.examples:
        graph = build_static_edges(example, corpus.schema_of(example))
        record = example.to_record()
        record['num_nodes'] = graph.num_nodes
        record['graph_sha1'] = graph.fingerprint()
        records.append(record)
    path = write_preprocessed(config.paths.cache_dir, records)
    vocab = ensure_vocab(corpus, config.paths.cache_dir)
    logger.info(f"✅ Preprocessed {len(records)} example(s) -> {path} (vocab: {vocab})")
    return path


def cmd_probe(config: RunConfig, skip_unsupported: bool = False) -> dict:
    from src.ai.plm_encoder import ContextualEncoder
    from src.ai.probing import GraphProber
    from src.ai.trainer import ensure_vocab
    from src.core.gpu_config import get_device
    from src.utils.cache_store import ProbeCache

    corpus = load_corpus(config, skip_unsupported)
    mc = config.model
    encoder = ContextualEncoder(
        mc.encoder_name, ensure_vocab(corpus, config.paths.cache_dir),
        mc.builtin_layers, mc.builtin_hidden, mc.builtin_heads,
        seed=config.train.seed, mask_token=config.probe.mask_token,
    ).to(get_device())
    cache = ProbeCache(config.paths.cache_dir, encoder.name, config.probe.tau, config.probe.score_normalization)
    prober = GraphProber(encoder, config.probe, cache)
    prober.probe_corpus(corpus.examples, corpus.schemas)
    stats = dict(prober.stats, forward_calls=encoder.forward_calls)
    logger.info(f"✅ Probe cache at {cache.directory}: {stats}")
    return stats


def _write_predictions(path: str, predictions) -> None:
    with open(path, 'w', encoding='utf-8') as f:
        for p in predictions:
            f.write(json.dumps({'example_id': p.example_id, 'pred_sql': p.pred_sql, 'gold_sql': p.gold_sql,
                                'exact': p.exact, 'score': p.score}, sort_keys=True) + '\n')


def _finish_report(trainer, config: RunConfig, history: List[dict], examples, split: str) -> dict:
    from src.utils.report import emit_report, render_all_heatmaps

    result = trainer.evaluate(examples)
    paths = emit_report(history, result.match, result.linking, config.paths.report_dir, config.config_hash(),
                        baseline=result.baseline_linking, extra={'split': split})
    _write_predictions(os.path.join(config.paths.report_dir, 'predictions.jsonl'), result.predictions)
    snapshot_dir = os.path.join(config.paths.report_dir, 'snapshots')
    render_all_heatmaps(trainer.corpus.train, trainer.corpus.schemas, snapshot_dir, config.paths.report_dir)
    logger.info(f"🎯 {split}: exact match {result.match.exact_match:.3f} | "
                f"Col F {result.linking.col_f:.3f} Tab F {result.linking.tab_f:.3f} | "
                f"exact-match linker Col F {result.baseline_linking.col_f:.3f} "
                f"Tab F {result.baseline_linking.tab_f:.3f}")
    return {'result': result, 'paths': paths}


def cmd_train(config: RunConfig, skip_unsupported: bool = False) -> dict:
    from src.ai.trainer import Text2SqlTrainer

    corpus = load_corpus(config, skip_unsupported)
    trainer = Text2SqlTrainer(config, corpus)
    outcome = trainer.train()
    split = 'dev' if corpus.dev else 'train'
    report = _finish_report(trainer, config, outcome.history, corpus.dev or corpus.train, split)
    report['train'] = outcome
    return report


def _read_history(report_dir: str) -> List[dict]:
    from src.ai.trainer import METRICS_FILE
    path = os.path.join(report_dir, METRICS_FILE)
    if not os.path.isfile(path):
        return []
    with open(path, 'r', encoding='utf-8') as f:
        return [json.loads(line) for line in f if line.strip()]


def cmd_eval(config: RunConfig, checkpoint: Optional[str] = None, split: str = 'dev',
             skip_unsupported: bool = False) -> dict:
    from src.ai.trainer import Text2SqlTrainer, find_latest_checkpoint, read_checkpoint_meta

    corpus = load_corpus(config, skip_unsupported)
    checkpoint = checkpoint or find_latest_checkpoint(config.paths.ckpt_dir)
    trainer = Text2SqlTrainer.from_checkpoint(checkpoint, config, corpus)
    examples = corpus.dev if split == 'dev' and corpus.dev else corpus.train
    history = _read_history(config.paths.report_dir)
    if not history:
        # checkpoint without a metrics log: a single point from this evaluation
        linking = trainer.evaluate(examples).linking
        history = [{'epoch': read_checkpoint_meta(checkpoint).get('epoch', 0),
                    'col_f1': linking.col_f, 'tab_f1': linking.tab_f}]
    return _finish_report(trainer, config, history, examples, split if examples is corpus.dev else 'train')


def cmd_inspect(config: RunConfig, example_id: str, skip_unsupported: bool = False) -> List[str]:
    from src.utils.report import render_alignment_sequence

    corpus = load_corpus(config, skip_unsupported)
    example = corpus.find(example_id)
    snapshot_dir = os.path.join(config.paths.report_dir, 'snapshots')
    written = render_alignment_sequence(example, corpus.schema_of(example), snapshot_dir, config.paths.report_dir)
    logger.info(f"✅ {len(written)} heatmap(s) for {example_id}")
    return written


def main(argv: Optional[List[str]] = None) -> int:
    """Hàm main chính"""
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level, args.log_file)
    if not check_dependencies():
        return 1
    try:
        config = config_from_args(args)
        skip = bool(args.skip_unsupported)
        if args.command == 'preprocess':
            cmd_preprocess(config, skip)
        elif args.command == 'probe':
            cmd_probe(config, skip)
        elif args.command == 'train':
            cmd_train(config, skip)
        elif args.command == 'eval':
            cmd_eval(config, args.checkpoint, args.split, skip)
        elif args.command == 'inspect':
            cmd_inspect(config, args.example_id, skip)
    except (Text2SqlError, OSError) as e:
        logger.error(f"❌ {type(e).__name__}: {e}")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
