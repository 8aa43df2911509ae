# Cấu hình hệ thống Text-to-SQL (schema linking + RGAT + AST decoder)

import copy
import hashlib
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Dict, List, Optional

from src.core.exceptions import ConfigurationError

# Cấu hình Initial Graph Probing
PROBE_CONFIG = {
    'tau': 0.7,
    'mask_token': '[MASK]',
    'score_normalization': True,  # chia cho max score của từng example
    'workers': 1,
}

# Cấu hình Implicit Graph Learning + fusion
GRAPH_CONFIG = {
    'lambda': 0.2,
    'similarity_dim': None,  # None = bằng hidden size của encoder
    'link_threshold': 0.0,   # ngưỡng để tính predicted mentions
}

# Cấu hình Contextual Encoder + RGAT
ENCODER_CONFIG = {
    'encoder_name': 'google/bert_uncased_L-4_H-256_A-4',
    'builtin_layers': 4,
    'builtin_hidden': 128,
    'builtin_heads': 4,
    'freeze_encoder': False,
    'gnn_hidden_size': 256,  # 512 cho full-scale
    'gnn_layers': 8,
    'gnn_heads': 8,
    'dropout': 0.2,
}

# Cấu hình AST Decoder
DECODER_CONFIG = {
    'hidden_size': 512,
    'action_embed_size': 128,
    'type_embed_size': 128,
    'dropout': 0.2,
    'context_attention': True,
    'beam_size': 4,
    'max_steps': 200,
}

# Cấu hình Training (desk-scale; full-scale: epochs 200, batch 20)
TRAIN_CONFIG = {
    'mu': 1.0,
    'learning_rate': 1e-4,
    'gnn_learning_rate': 5e-4,
    'weight_decay': 1e-4,
    'warmup_ratio': 0.1,
    'batch_size': 8,
    'epochs': 100,
    'seed': 42,
    'snapshot_every': 10,
    'snapshot_examples': 8,
    'max_grad_norm': 5.0,
    'save_every': 0,  # 0 = chỉ lưu checkpoint cuối
    'eval_every': 1,
}

# Cấu hình đường dẫn
PATH_CONFIG = {
    'data_dir': './data',
    'train_file': 'examples.json',
    'dev_file': 'dev.json',
    'cache_dir': './cache',
    'ckpt_dir': './ckpt',
    'report_dir': './output',
}

# Cấu hình Logging
LOGGING_CONFIG = {
    'level': 'INFO',
    'format': '%(asctime)s - %(name)s - %(levelname)s - %(message)s',
    'file': 'text2sql.log'
}

CACHE_ROOT_ENV = 'TEXT2SQL_CACHE_ROOT'

ABLATIONS = ('no_probe', 'no_implicit', 'no_reg', 'exact_match', 'no_linking')
ORACLE_MODES = ('columns', 'tables', 'schema', 'full')

logger = logging.getLogger(__name__)


def setup_logging(level: str = None, log_file: Optional[str] = None) -> None:
    """Cấu hình logging cho entry point (chỉ gọi một lần)"""
    handlers = [logging.StreamHandler(sys.stdout)]
    if log_file:
        handlers.append(logging.FileHandler(log_file, mode='a', encoding='utf-8'))
    logging.basicConfig(
        level=getattr(logging, (level or LOGGING_CONFIG['level']).upper(), logging.INFO),
        format=LOGGING_CONFIG['format'],
        handlers=handlers,
        force=True,
    )


@dataclass
class ProbeConfig:
    tau: float = PROBE_CONFIG['tau']
    mask_token: str = PROBE_CONFIG['mask_token']
    score_normalization: bool = PROBE_CONFIG['score_normalization']
    workers: int = PROBE_CONFIG['workers']

    def validate(self):
        if self.score_normalization and not 0.0 <= self.tau <= 1.0:
            raise ConfigurationError(f"tau must be in [0,1] with normalization on, got {self.tau}")
        if self.tau < 0:
            raise ConfigurationError(f"tau must be non-negative, got {self.tau}")
        if self.workers < 1:
            raise ConfigurationError("probe workers must be >= 1")


@dataclass
class FusionConfig:
    lam: float = GRAPH_CONFIG['lambda']

    def validate(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ConfigurationError(f"lambda must be in [0,1], got {self.lam}")


@dataclass
class ModelConfig:
    encoder_name: str = ENCODER_CONFIG['encoder_name']
    builtin_layers: int = ENCODER_CONFIG['builtin_layers']
    builtin_hidden: int = ENCODER_CONFIG['builtin_hidden']
    builtin_heads: int = ENCODER_CONFIG['builtin_heads']
    freeze_encoder: bool = ENCODER_CONFIG['freeze_encoder']
    similarity_dim: Optional[int] = GRAPH_CONFIG['similarity_dim']
    gnn_hidden_size: int = ENCODER_CONFIG['gnn_hidden_size']
    gnn_layers: int = ENCODER_CONFIG['gnn_layers']
    gnn_heads: int = ENCODER_CONFIG['gnn_heads']
    dropout: float = ENCODER_CONFIG['dropout']
    decoder_hidden: int = DECODER_CONFIG['hidden_size']
    action_embed_size: int = DECODER_CONFIG['action_embed_size']
    type_embed_size: int = DECODER_CONFIG['type_embed_size']
    decoder_dropout: float = DECODER_CONFIG['dropout']
    context_attention: bool = DECODER_CONFIG['context_attention']
    max_steps: int = DECODER_CONFIG['max_steps']

    def validate(self):
        if self.gnn_hidden_size % self.gnn_heads != 0:
            raise ConfigurationError(
                f"gnn_hidden_size {self.gnn_hidden_size} not divisible by {self.gnn_heads} heads")
        if self.gnn_layers < 0:
            raise ConfigurationError("gnn_layers must be >= 0")
        if self.max_steps < 1:
            raise ConfigurationError("max_steps must be >= 1")


@dataclass
class TrainConfig:
    mu: float = TRAIN_CONFIG['mu']
    lam: float = GRAPH_CONFIG['lambda']
    tau: float = PROBE_CONFIG['tau']
    learning_rate: float = TRAIN_CONFIG['learning_rate']
    gnn_learning_rate: float = TRAIN_CONFIG['gnn_learning_rate']
    weight_decay: float = TRAIN_CONFIG['weight_decay']
    warmup_ratio: float = TRAIN_CONFIG['warmup_ratio']
    batch_size: int = TRAIN_CONFIG['batch_size']
    epochs: int = TRAIN_CONFIG['epochs']
    seed: int = TRAIN_CONFIG['seed']
    beam_size: int = DECODER_CONFIG['beam_size']
    snapshot_every: int = TRAIN_CONFIG['snapshot_every']
    snapshot_examples: int = TRAIN_CONFIG['snapshot_examples']
    max_grad_norm: float = TRAIN_CONFIG['max_grad_norm']
    save_every: int = TRAIN_CONFIG['save_every']
    eval_every: int = TRAIN_CONFIG['eval_every']

    def validate(self):
        if self.mu < 0:
            raise ConfigurationError(f"mu must be >= 0, got {self.mu}")
        if self.epochs < 1:
            raise ConfigurationError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be >= 1")
        if self.beam_size < 1:
            raise ConfigurationError("beam width must be >= 1")
        if not 0.0 <= self.warmup_ratio <= 1.0:
            raise ConfigurationError("warmup_ratio must be in [0,1]")


@dataclass
class PathConfig:
    data_dir: str = PATH_CONFIG['data_dir']
    train_file: str = PATH_CONFIG['train_file']
    dev_file: str = PATH_CONFIG['dev_file']
    cache_dir: str = PATH_CONFIG['cache_dir']
    ckpt_dir: str = PATH_CONFIG['ckpt_dir']
    report_dir: str = PATH_CONFIG['report_dir']


@dataclass
class RunConfig:
    """Toàn bộ cấu hình cho một lần chạy (probe + graph + model + train + paths)"""
    probe: ProbeConfig = field(default_factory=ProbeConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    paths: PathConfig = field(default_factory=PathConfig)
    ablations: List[str] = field(default_factory=list)
    oracle: Optional[str] = None
    link_threshold: float = GRAPH_CONFIG['link_threshold']

    def __post_init__(self):
        # tau / lambda sống ở hai nơi; probe và fusion là nguồn chính
        self.train.tau = self.probe.tau
        self.train.lam = self.fusion.lam
        override = os.environ.get(CACHE_ROOT_ENV)
        if override:
            self.paths.cache_dir = override

    # ------------------------------------------------------------------ #
    def validate(self) -> 'RunConfig':
        self.probe.validate()
        self.fusion.validate()
        self.model.validate()
        self.train.validate()
        unknown = [a for a in self.ablations if a not in ABLATIONS]
        if unknown:
            raise ConfigurationError(f"unknown ablation(s): {unknown}; choose from {list(ABLATIONS)}")
        if self.oracle is not None and self.oracle not in ORACLE_MODES:
            raise ConfigurationError(f"unknown oracle mode '{self.oracle}'; choose from {list(ORACLE_MODES)}")
        flags = set(self.ablations)
        if {'no_probe', 'no_implicit'} <= flags:
            raise ConfigurationError("no_probe and no_implicit together leave no linking graph; use no_linking")
        if 'exact_match' in flags and flags & {'no_probe', 'no_implicit'}:
            raise ConfigurationError("exact_match replaces the probe graph and is incompatible with no_probe/no_implicit")
        if 'no_linking' in flags and flags & {'no_probe', 'no_implicit', 'exact_match'}:
            raise ConfigurationError("no_linking already removes every linking edge")
        return self

    def has(self, ablation: str) -> bool:
        return ablation in self.ablations

    def effective_lambda(self) -> float:
        if self.has('no_probe'):
            return 0.0
        if self.has('no_implicit') or self.has('exact_match'):
            return 1.0
        return self.fusion.lam

    def effective_mu(self) -> float:
        return 0.0 if self.has('no_reg') else self.train.mu

    # ------------------------------------------------------------------ #
    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def config_hash(self) -> str:
        """Hash of everything that changes behaviour (paths excluded)"""
        payload = self.to_dict()
        payload.pop('paths', None)
        payload['ablations'] = sorted(payload['ablations'])
        blob = json.dumps(payload, sort_keys=True, default=str)
        return hashlib.sha1(blob.encode('utf-8')).hexdigest()[:16]

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'RunConfig':
        data = copy.deepcopy(data or {})
        sections = {
            'probe': ProbeConfig,
            'fusion': FusionConfig,
            'model': ModelConfig,
            'train': TrainConfig,
            'paths': PathConfig,
        }
        kwargs = {}
        for name, klass in sections.items():
            section = data.pop(name, {}) or {}
            allowed = {f.name for f in fields(klass)}
            extra = set(section) - allowed
            if extra:
                raise ConfigurationError(f"unknown keys in '{name}' section: {sorted(extra)}")
            kwargs[name] = klass(**section)
        allowed_top = {'ablations', 'oracle', 'link_threshold'}
        extra = set(data) - allowed_top
        if extra:
            raise ConfigurationError(f"unknown top-level config keys: {sorted(extra)}")
        kwargs.update(data)
        return cls(**kwargs)

    @classmethod
    def from_json_file(cls, path: str) -> 'RunConfig':
        try:
            with open(path, 'r', encoding='utf-8') as f:
                data = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigurationError(f"cannot read config file {path}: {e}") from e
        return cls.from_dict(data)

    def save(self, path: str) -> None:
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)
