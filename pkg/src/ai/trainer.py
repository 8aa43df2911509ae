#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Trainer - Vòng lặp huấn luyện L = L_SQL + mu * L_g, oracle linking, snapshot alignment,
checkpoint và đánh giá
"""

import glob
import json
import logging
import math
import os
import re
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Set, Tuple

import numpy as np
import torch
from tqdm import tqdm
from transformers import get_linear_schedule_with_warmup

from src.ai.plm_encoder import BUILTIN_ENCODER, VOCAB_FILE, ContextualEncoder, build_vocab, write_vocab
from src.ai.probing import GraphProber
from src.ai.text2sql_model import Text2SqlModel
from src.core.config import RunConfig
from src.core.corpus import Corpus, Example, HeteroGraph, build_static_edges, exact_match_linking
from src.core.evaluation import (
    LinkingMetrics,
    MatchReport,
    SqlScoringSystem,
    predicted_mentions,
    schema_linking_metrics,
)
from src.core.exceptions import (
    CheckpointError,
    ConfigurationError,
    DecodingTruncatedError,
    TrainingDivergedError,
)
from src.core.gpu_config import get_device, get_rng_state, set_random_seed, set_rng_state
from src.core.schema import DatabaseSchema
from src.core.sql_grammar import SqlAst, actions_to_ast, render_sql
from src.utils.cache_store import ProbeCache, ProbeResult

logger = logging.getLogger(__name__)

LOG_EPS = 1e-6
METRICS_FILE = 'metrics.jsonl'
SNAPSHOT_DIR = 'snapshots'
GOLD_MASS_FILE = 'gold_mass.json'


# ====================================================================== #
#  Losses
# ====================================================================== #

def graph_regularization_loss(a_t: torch.Tensor, gold_mentions, eps: float = LOG_EPS) -> torch.Tensor:
    """-sum over gold-mentioned items of log(clamp(column sum, eps, 1))"""
    items = sorted(gold_mentions)
    if not items:
        return a_t.sum() * 0.0
    column_sums = a_t.sum(dim=0)[torch.as_tensor(items, dtype=torch.long, device=a_t.device)]
    return -torch.log(column_sums.clamp(min=eps, max=1.0)).sum()


def total_loss(l_sql, l_g, mu: float):
    return l_sql + mu * l_g


# ====================================================================== #
#  Oracle linking and gold-link bookkeeping
# ====================================================================== #

def inject_oracle_linking(a_tilde: torch.Tensor, example: Example, schema: DatabaseSchema,
                          mode: str) -> torch.Tensor:
    """Replace the selected kinds of schema columns of the fused graph with gold information"""
    q, s = a_tilde.shape
    if mode == 'full':
        if example.links is None:
            raise ConfigurationError(f"oracle 'full' needs token links, example {example.example_id} has none")
        oracle = torch.zeros_like(a_tilde)
        for token_index, item in example.links:
            oracle[token_index, item] = 1.0
        return oracle
    if mode not in ('columns', 'tables', 'schema'):
        raise ConfigurationError(f"unknown oracle mode '{mode}'")
    is_table = torch.tensor([schema.is_table_item(j) for j in range(s)], device=a_tilde.device)
    selected = {'columns': ~is_table, 'tables': is_table, 'schema': torch.ones_like(is_table)}[mode]
    mentioned = torch.zeros(s, dtype=a_tilde.dtype, device=a_tilde.device)
    if example.gold_mentions:
        mentioned[sorted(example.gold_mentions)] = 1.0
    uniform = (mentioned / q).unsqueeze(0).expand(q, s)
    return torch.where(selected.unsqueeze(0), uniform, a_tilde)


def gold_link_mask(example: Example, schema: DatabaseSchema) -> np.ndarray:
    """Annotated (token, item) cells, or every cell of the gold-mentioned columns"""
    mask = np.zeros((example.num_tokens, schema.num_items), dtype=bool)
    if example.links:
        for token_index, item in example.links:
            mask[token_index, item] = True
        return mask
    for item in example.gold_mentions:
        if not schema.is_wildcard_item(item):
            mask[:, item] = True
    return mask


def gold_link_mass(a_tilde: np.ndarray, example: Example, schema: DatabaseSchema) -> float:
    return float(np.asarray(a_tilde)[gold_link_mask(example, schema)].sum())


# ====================================================================== #
#  Results
# ====================================================================== #

@dataclass
class Prediction:
    example_id: str
    pred_sql: Optional[str]
    gold_sql: str
    exact: bool
    score: Optional[float]
    a_tilde: np.ndarray


@dataclass
class EvaluationResult:
    match: MatchReport
    linking: LinkingMetrics
    baseline_linking: LinkingMetrics
    predictions: List[Prediction] = field(default_factory=list)


@dataclass
class TrainResult:
    history: List[dict]
    checkpoint_dir: str
    gold_mass: Dict[int, Dict[str, float]]


def corpus_vocabulary(corpus: Corpus) -> List[str]:
    words: Set[str] = set()
    for example in corpus.examples:
        words.update(example.question_tokens)
    for schema in corpus.schemas.values():
        for tokens in schema.table_tokens:
            words.update(tokens)
        for col in schema.columns:
            words.update(col.tokens)
    return build_vocab(words)


def ensure_vocab(corpus: Corpus, cache_dir: str) -> str:
    path = os.path.join(cache_dir, VOCAB_FILE)
    return write_vocab(path, corpus_vocabulary(corpus))


def find_latest_checkpoint(ckpt_dir: str) -> str:
    candidates = []
    for path in glob.glob(os.path.join(ckpt_dir, 'epoch-*')):
        match = re.fullmatch(r'epoch-(\d+)', os.path.basename(path))
        if match and os.path.isfile(os.path.join(path, 'model.pt')):
            candidates.append((int(match.group(1)), path))
    if not candidates:
        raise CheckpointError(f"no checkpoint found under {ckpt_dir}")
    return max(candidates)[1]


def read_checkpoint_meta(checkpoint_dir: str) -> dict:
    path = os.path.join(checkpoint_dir, 'meta.json')
    try:
        with open(path, 'r', encoding='utf-8') as f:
            return json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise CheckpointError(f"cannot read {path}: {e}") from e


# ====================================================================== #
#  Trainer
# ====================================================================== #

class Text2SqlTrainer:
    """Huấn luyện / đánh giá parser trên một corpus theo RunConfig"""

    def __init__(self, config: RunConfig, corpus: Corpus, device: Optional[torch.device] = None,
                 vocab_path: Optional[str] = None, encoder_name: Optional[str] = None):
        self.config = config.validate()
        self.corpus = corpus
        self.device = device or get_device()
        self.lam = config.effective_lambda()
        self.mu = config.effective_mu()

        set_random_seed(config.train.seed)
        self.vocab_path = vocab_path or ensure_vocab(corpus, config.paths.cache_dir)
        mc = config.model
        encoder = ContextualEncoder(
            encoder_name or mc.encoder_name, self.vocab_path,
            mc.builtin_layers, mc.builtin_hidden, mc.builtin_heads,
            seed=config.train.seed, mask_token=config.probe.mask_token,
        )
        self.model = Text2SqlModel(encoder, mc).to(self.device)
        self.optimizer = None
        self.scheduler = None
        self._static: Dict[str, HeteroGraph] = {}
        self._a_init: Dict[str, torch.Tensor] = {}
        self.probes: Dict[str, ProbeResult] = {}
        self.gold_mass: Dict[int, Dict[str, float]] = {}
        self._encoder_tuned = False  # set once weights differ from the initial encoder

    # ---- graph inputs -------------------------------------------------- #
    @property
    def needs_probe(self) -> bool:
        return not any(self.config.has(a) for a in ('no_probe', 'exact_match', 'no_linking'))

    def ensure_probes(self, examples: Optional[List[Example]] = None) -> Dict[str, ProbeResult]:
        """Probe with the encoder as it is now; called before any parameter update"""
        if not self.needs_probe:
            return self.probes
        examples = examples if examples is not None else self.corpus.examples
        missing = [ex for ex in examples if ex.example_id not in self.probes]
        if missing:
            if self._encoder_tuned:
                raise ConfigurationError(
                    f"{len(missing)} example(s) have no A_init and the encoder is no longer the initial one "
                    f"(e.g. {missing[0].example_id}); run probe before training or loading a checkpoint")
            cfg = self.config.probe
            cache = ProbeCache(self.config.paths.cache_dir, self.model.encoder.name, cfg.tau, cfg.score_normalization)
            prober = GraphProber(self.model.encoder, cfg, cache)
            self.probes.update(prober.probe_corpus(missing, self.corpus.schemas))
        return self.probes

    def static_graph(self, example: Example) -> HeteroGraph:
        if example.example_id not in self._static:
            self._static[example.example_id] = build_static_edges(example, self.corpus.schema_of(example))
        return self._static[example.example_id]

    def a_init(self, example: Example) -> torch.Tensor:
        cached = self._a_init.get(example.example_id)
        if cached is not None:
            return cached
        schema = self.corpus.schema_of(example)
        if self.config.has('exact_match'):
            matrix = exact_match_linking(example, schema)
        elif not self.needs_probe:
            matrix = np.zeros((example.num_tokens, schema.num_items), dtype=np.float32)
        else:
            if example.example_id not in self.probes:
                raise ConfigurationError(f"probe cache has no entry for {example.example_id}; run probe first")
            matrix = self.probes[example.example_id].a_init
        tensor = torch.as_tensor(matrix, dtype=torch.float32, device=self.device)
        self._a_init[example.example_id] = tensor
        return tensor

    def link_transform(self, example: Example) -> Optional[Callable[[torch.Tensor], torch.Tensor]]:
        if self.config.has('no_linking'):
            return torch.zeros_like
        if self.config.oracle:
            schema = self.corpus.schema_of(example)
            mode = self.config.oracle
            return lambda a: inject_oracle_linking(a, example, schema, mode)
        return None

    def _forward(self, example: Example, teacher_forcing: bool = True):
        return self.model(example, self.corpus.schema_of(example), self.static_graph(example),
                          self.a_init(example), self.lam, self.link_transform(example), teacher_forcing)

    # ---- optimisation -------------------------------------------------- #
    def _build_optimizer(self, steps_total: int):
        tc = self.config.train
        encoder_params = [p for p in self.model.encoder.parameters() if p.requires_grad]
        encoder_ids = {id(p) for p in self.model.encoder.parameters()}
        other_params = [p for p in self.model.parameters() if p.requires_grad and id(p) not in encoder_ids]
        groups = [{'params': other_params, 'lr': tc.gnn_learning_rate}]
        if encoder_params:
            groups.append({'params': encoder_params, 'lr': tc.learning_rate})
        self.optimizer = torch.optim.AdamW(groups, weight_decay=tc.weight_decay)
        self.scheduler = get_linear_schedule_with_warmup(
            self.optimizer, int(tc.warmup_ratio * steps_total), max(1, steps_total))

    def _set_train_mode(self):
        self.model.train()
        if self.model.encoder.frozen:
            self.model.encoder.eval()

    def train(self, show_progress: bool = True) -> TrainResult:
        tc = self.config.train
        paths = self.config.paths
        train_set = self.corpus.train
        if not train_set:
            raise ConfigurationError("training split is empty")
        self.ensure_probes()
        self._encoder_tuned = True

        batches_per_epoch = math.ceil(len(train_set) / tc.batch_size)
        self._build_optimizer(batches_per_epoch * tc.epochs)
        os.makedirs(paths.report_dir, exist_ok=True)
        metrics_path = os.path.join(paths.report_dir, METRICS_FILE)
        open(metrics_path, 'w', encoding='utf-8').close()

        logger.info(f"🔄 Training on {len(train_set)} example(s) for {tc.epochs} epoch(s) "
                    f"(lambda={self.lam}, mu={self.mu}, ablations={self.config.ablations or '-'}, "
                    f"oracle={self.config.oracle or '-'})")
        self.snapshot(0)
        history: List[dict] = []
        checkpoint_dir = ''
        generator = torch.Generator().manual_seed(tc.seed)

        for epoch in tqdm(range(1, tc.epochs + 1), desc='epochs', disable=not show_progress):
            self._set_train_mode()
            order = torch.randperm(len(train_set), generator=generator).tolist()
            sum_sql, sum_g = 0.0, 0.0
            link_preds, link_golds, link_schemas = [], [], []
            for batch_index in range(batches_per_epoch):
                batch = [train_set[i] for i in order[batch_index * tc.batch_size:(batch_index + 1) * tc.batch_size]]
                self.optimizer.zero_grad()
                for example in batch:
                    schema = self.corpus.schema_of(example)
                    output = self._forward(example)
                    loss_sql = output.loss_sql
                    loss_g = graph_regularization_loss(output.linking.a_t, example.gold_mentions) \
                        if self.mu > 0 else None
                    loss = total_loss(loss_sql, loss_g, self.mu) if loss_g is not None else loss_sql
                    if not torch.isfinite(loss):
                        raise TrainingDivergedError(epoch, batch_index, f"example {example.example_id}")
                    (loss / len(batch)).backward()
                    sum_sql += float(loss_sql)
                    sum_g += float(loss_g) if loss_g is not None else 0.0
                    a_tilde = output.linking.a_tilde.detach().cpu().numpy()
                    link_preds.append(predicted_mentions(a_tilde, schema, self.config.link_threshold))
                    link_golds.append(set(example.gold_mentions))
                    link_schemas.append(schema)
                if tc.max_grad_norm > 0:
                    torch.nn.utils.clip_grad_norm_(self.model.parameters(), tc.max_grad_norm)
                self.optimizer.step()
                self.scheduler.step()

            linking = schema_linking_metrics(link_preds, link_golds, link_schemas)
            record = {
                'epoch': epoch,
                'loss_sql': sum_sql / len(train_set),
                'col_f1': linking.col_f,
                'tab_f1': linking.tab_f,
                'em_train': None,
                'em_dev': None,
            }
            if self.mu > 0:
                record['loss_g'] = sum_g / len(train_set)
            if epoch == tc.epochs or (tc.eval_every > 0 and epoch % tc.eval_every == 0):
                record['em_train'] = self.evaluate(train_set, beam_size=1).match.exact_match
                if self.corpus.dev:
                    record['em_dev'] = self.evaluate(self.corpus.dev, beam_size=1).match.exact_match
            history.append(record)
            with open(metrics_path, 'a', encoding='utf-8') as f:
                f.write(json.dumps(record, sort_keys=True) + '\n')
            logger.info(f"📈 epoch {epoch}: loss_sql={record['loss_sql']:.4f}"
                        + (f" loss_g={record['loss_g']:.4f}" if 'loss_g' in record else '')
                        + f" col_f1={linking.col_f:.3f} tab_f1={linking.tab_f:.3f}"
                        + (f" em_train={record['em_train']:.3f}" if record['em_train'] is not None else ''))

            if epoch == tc.epochs or (tc.snapshot_every > 0 and epoch % tc.snapshot_every == 0):
                self.snapshot(epoch)
            if epoch == tc.epochs or (tc.save_every > 0 and epoch % tc.save_every == 0):
                checkpoint_dir = self.save_checkpoint(epoch)

        logger.info(f"✅ Training finished, checkpoint: {checkpoint_dir}")
        return TrainResult(history, checkpoint_dir, self.gold_mass)

    # ---- inference ----------------------------------------------------- #
    @torch.no_grad()
    def predict(self, example: Example, beam_size: Optional[int] = None) -> Tuple[Prediction, Optional[SqlAst]]:
        """Decoded prediction (None AST when decoding hit the step cap)"""
        schema = self.corpus.schema_of(example)
        beam = beam_size if beam_size is not None else self.config.train.beam_size
        try:
            hypothesis, output = self.model.parse(example, schema, self.static_graph(example), self.a_init(example),
                                                  self.lam, self.link_transform(example), beam)
        except DecodingTruncatedError as e:
            logger.warning(f"⚠️ {example.example_id}: {e}")
            output = self._forward(example, teacher_forcing=False)
            return Prediction(example.example_id, None, example.gold_sql, False, None,
                              output.linking.a_tilde.cpu().numpy()), None
        ast = actions_to_ast(hypothesis.actions)
        sql = render_sql(ast, schema, example.literals)
        return Prediction(example.example_id, sql, example.gold_sql, False, hypothesis.score,
                          output.linking.a_tilde.cpu().numpy()), ast

    def evaluate(self, examples: List[Example], beam_size: Optional[int] = None) -> EvaluationResult:
        self.ensure_probes(examples)
        was_training = self.model.training
        self.model.eval()
        preds, asts, golds = [], [], []
        link_preds, baseline_preds, link_golds, schemas = [], [], [], []
        try:
            for example in examples:
                schema = self.corpus.schema_of(example)
                prediction, ast = self.predict(example, beam_size)
                preds.append(prediction)
                asts.append(ast)
                golds.append(example.gold_ast)
                link_preds.append(predicted_mentions(prediction.a_tilde, schema, self.config.link_threshold))
                baseline_preds.append(predicted_mentions(exact_match_linking(example, schema), schema))
                link_golds.append(set(example.gold_mentions))
                schemas.append(schema)
        finally:
            self.model.train(was_training)
        match = SqlScoringSystem().score(asts, golds)
        for prediction, exact in zip(preds, match.per_example):
            prediction.exact = exact
        return EvaluationResult(
            match=match,
            linking=schema_linking_metrics(link_preds, link_golds, schemas),
            baseline_linking=schema_linking_metrics(baseline_preds, link_golds, schemas),
            predictions=preds,
        )

    # ---- snapshots ----------------------------------------------------- #
    @torch.no_grad()
    def snapshot(self, epoch: int) -> str:
        """Dump the fused linking graph of the first training examples"""
        count = self.config.train.snapshot_examples
        examples = self.corpus.train[:count]
        directory = os.path.join(self.config.paths.report_dir, SNAPSHOT_DIR)
        os.makedirs(directory, exist_ok=True)
        was_training = self.model.training
        self.model.eval()
        arrays, masses = {}, {}
        try:
            for example in examples:
                a_tilde = self._forward(example, teacher_forcing=False).linking.a_tilde.cpu().numpy()
                arrays[example.example_id] = a_tilde
                masses[example.example_id] = gold_link_mass(a_tilde, example, self.corpus.schema_of(example))
        finally:
            self.model.train(was_training)
        path = os.path.join(directory, f"epoch-{epoch}.npz")
        np.savez(path, **arrays)
        self.gold_mass[epoch] = masses
        with open(os.path.join(directory, GOLD_MASS_FILE), 'w', encoding='utf-8') as f:
            json.dump({str(k): v for k, v in sorted(self.gold_mass.items())}, f, indent=2, sort_keys=True)
        logger.debug(f"📸 snapshot epoch {epoch}: {len(arrays)} example(s) -> {path}")
        return path

    # ---- checkpoints --------------------------------------------------- #
    def save_checkpoint(self, epoch: int) -> str:
        directory = os.path.join(self.config.paths.ckpt_dir, f"epoch-{epoch}")
        os.makedirs(directory, exist_ok=True)
        torch.save(self.model.state_dict(), os.path.join(directory, 'model.pt'))
        torch.save({
            'optimizer': self.optimizer.state_dict() if self.optimizer else None,
            'scheduler': self.scheduler.state_dict() if self.scheduler else None,
            'rng_state': get_rng_state(),
        }, os.path.join(directory, 'optimizer.pt'))
        meta = {
            'epoch': epoch,
            'seed': self.config.train.seed,
            'config_hash': self.config.config_hash(),
            'encoder': self.model.encoder.name,
        }
        with open(os.path.join(directory, 'meta.json'), 'w', encoding='utf-8') as f:
            json.dump(meta, f, indent=2, sort_keys=True)
        self.config.save(os.path.join(directory, 'config.json'))
        self.model.encoder.save_vocab(directory)
        logger.info(f"💾 Checkpoint saved: {directory}")
        return directory

    @classmethod
    def from_checkpoint(cls, checkpoint_dir: str, config: RunConfig, corpus: Corpus,
                        device: Optional[torch.device] = None) -> 'Text2SqlTrainer':
        """Rebuild the model as it was trained and load its parameters"""
        meta = read_checkpoint_meta(checkpoint_dir)
        if meta.get('config_hash') != config.config_hash():
            logger.warning(f"⚠️ Config hash {config.config_hash()} differs from checkpoint "
                           f"{meta.get('config_hash')} ({checkpoint_dir})")
        encoder_name = meta.get('encoder')
        vocab_path = None
        if encoder_name == BUILTIN_ENCODER:
            vocab_path = os.path.join(checkpoint_dir, VOCAB_FILE)
            if not os.path.isfile(vocab_path):
                raise CheckpointError(f"builtin-encoder checkpoint {checkpoint_dir} has no {VOCAB_FILE}")
        trainer = cls(config, corpus, device, vocab_path=vocab_path, encoder_name=encoder_name)
        # A_init comes from the untouched encoder, never from fine-tuned weights
        trainer.ensure_probes()
        trainer.load_checkpoint(checkpoint_dir)
        return trainer

    def load_checkpoint(self, checkpoint_dir: str, restore_optimizer: bool = False) -> dict:
        model_path = os.path.join(checkpoint_dir, 'model.pt')
        if not os.path.isfile(model_path):
            raise CheckpointError(f"missing {model_path}")
        state = torch.load(model_path, map_location=self.device)
        self.model.load_state_dict(state)
        self._encoder_tuned = True
        opt_path = os.path.join(checkpoint_dir, 'optimizer.pt')
        if restore_optimizer and os.path.isfile(opt_path):
            extra = torch.load(opt_path, map_location='cpu', weights_only=False)
            if self.optimizer is not None and extra.get('optimizer'):
                self.optimizer.load_state_dict(extra['optimizer'])
            if self.scheduler is not None and extra.get('scheduler'):
                self.scheduler.load_state_dict(extra['scheduler'])
            set_rng_state(extra['rng_state'])
        meta = read_checkpoint_meta(checkpoint_dir)
        logger.info(f"✅ Loaded checkpoint epoch {meta.get('epoch')} from {checkpoint_dir}")
        return meta
