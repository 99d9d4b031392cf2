"""
Run configuration files.

A run configuration is a `.env`-style text of `key=value` lines whose keys
are the lower-case field names of RunConfig. Every field defaults to the
engine setting of the same name, so a file only lists what it changes.
The sorted snapshot produced by to_text() is embedded in checkpoints.
"""

import dataclasses
import logging
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional

from decouple import Config, RepositoryEmpty, RepositoryEnv

from . import config as defaults
from .encoder import CamseConfig
from .exceptions import ConfigError
from .qa import TrainConfig
from .scoring import ScoringConfig

logger = logging.getLogger(__name__)


def _to_path(value: str) -> Optional[str]:
    return value or None


# decouple casts per annotated field type; bool goes through Config's boolean table
_CASTS = {
    int: int,
    float: float,
    bool: bool,
    str: str,
    Optional[str]: _to_path,
}


class TextRepository(RepositoryEmpty):
    """In-memory `.env` repository, parsed like decouple.RepositoryEnv."""

    def __init__(self, text: str):
        self.data = {}
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith('#') or '=' not in line:
                continue
            key, value = line.split('=', 1)
            value = value.strip()
            if len(value) >= 2 and value[0] == value[-1] and value[0] in ('"', "'"):
                value = value[1:-1]
            self.data[key.strip()] = value

    def __contains__(self, key):
        return key in self.data

    def __getitem__(self, key):
        return self.data[key]


def _check_lines(text: str, source: str) -> None:
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if stripped and not stripped.startswith('#') and '=' not in stripped:
            raise ConfigError(f"{source}:{line_no}: expected key=value, got '{stripped}'")


@dataclass
class RunConfig:
    # Encoder
    scales: int = defaults.SCALES
    subspaces: int = defaults.SUBSPACES
    embedding_dim: int = defaults.EMBEDDING_DIM
    context_size: int = defaults.CONTEXT_SIZE
    attention_context_size: int = defaults.ATTENTION_CONTEXT_SIZE
    attention_hidden: int = defaults.ATTENTION_HIDDEN
    attention_context: bool = defaults.ATTENTION_CONTEXT
    dropout: float = defaults.DROPOUT

    # Scoring
    gate_hidden: int = defaults.GATE_HIDDEN
    sas_bias: bool = defaults.SAS_BIAS
    scoring_mode: str = defaults.SCORING_MODE

    # Training
    batch_size: int = defaults.BATCH_SIZE
    epochs: int = defaults.EPOCHS
    learning_rate: float = defaults.LEARNING_RATE
    lr_decay: float = defaults.LR_DECAY
    adam_beta1: float = defaults.ADAM_BETA1
    adam_beta2: float = defaults.ADAM_BETA2
    adam_eps: float = defaults.ADAM_EPS
    max_statement_len: int = defaults.MAX_STATEMENT_LEN
    max_document_len: int = defaults.MAX_DOCUMENT_LEN
    evidence_cap: int = defaults.EVIDENCE_CAP
    fine_tune_embeddings: bool = defaults.FINE_TUNE_EMBEDDINGS
    separator: str = ''
    seed: int = defaults.SEED
    threads: int = 1

    # Evidence and preprocessing
    evidence_source: str = defaults.EVIDENCE_SOURCE
    bm25_k1: float = defaults.BM25_K1
    bm25_b: float = defaults.BM25_B
    dedup_threshold: float = defaults.DEDUP_THRESHOLD
    dedup: bool = True
    repr_context_size: int = defaults.REPR_CONTEXT_SIZE
    repr_hidden: int = defaults.REPR_HIDDEN
    repr_epochs: int = defaults.REPR_EPOCHS
    repr_learning_rate: float = defaults.REPR_LEARNING_RATE

    # Paths
    embeddings: Optional[str] = None
    train_data: Optional[str] = None
    dev_data: Optional[str] = None
    test_data: Optional[str] = None
    index: Optional[str] = None
    checkpoint: Optional[str] = None
    metrics: Optional[str] = None

    def validate(self) -> 'RunConfig':
        """
        Raises:
            ConfigError: If any value is out of range
        """
        if self.evidence_source not in defaults.VALID_EVIDENCE_SOURCES:
            raise ConfigError(
                f"Invalid evidence_source '{self.evidence_source}'. "
                f"Must be one of: {', '.join(defaults.VALID_EVIDENCE_SOURCES)}."
            )
        if self.evidence_source == 'bm25' and not self.index:
            raise ConfigError("evidence_source=bm25 needs an index path")
        if not 0 < self.dedup_threshold <= 1:
            raise ConfigError(f"dedup_threshold must be in (0, 1], got {self.dedup_threshold}")
        self.camse_config()
        self.scoring_config()
        self.train_config()
        return self

    def camse_config(self) -> CamseConfig:
        return CamseConfig(
            scales=self.scales, subspaces=self.subspaces, embedding_dim=self.embedding_dim,
            context_size=self.context_size, attention_context_size=self.attention_context_size,
            attention_hidden=self.attention_hidden, dropout=self.dropout,
            attention_context=self.attention_context,
        )

    def scoring_config(self) -> ScoringConfig:
        return ScoringConfig(
            scales=self.scales, subspaces=self.subspaces, context_size=self.context_size,
            gate_hidden=self.gate_hidden, sas_bias=self.sas_bias, mode=self.scoring_mode,
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            batch_size=self.batch_size, epochs=self.epochs, learning_rate=self.learning_rate,
            lr_decay=self.lr_decay, adam_beta1=self.adam_beta1, adam_beta2=self.adam_beta2,
            adam_eps=self.adam_eps, max_statement_len=self.max_statement_len,
            max_document_len=self.max_document_len, evidence_cap=self.evidence_cap, seed=self.seed,
            fine_tune_embeddings=self.fine_tune_embeddings, separator=self.separator,
            threads=self.threads,
        )

    def replace(self, **changes) -> 'RunConfig':
        return dataclasses.replace(self, **{k: v for k, v in changes.items() if v is not None})

    # ------------------------------------------------------------------------
    # Text form
    # ------------------------------------------------------------------------

    def to_text(self) -> str:
        """Sorted key=value snapshot; from_text() restores it exactly."""
        lines = []
        for f in sorted(fields(self), key=lambda f: f.name):
            value = getattr(self, f.name)
            if value is None:
                text = ''
            elif isinstance(value, bool):
                text = 'true' if value else 'false'
            elif isinstance(value, float):
                text = repr(value)
            else:
                text = str(value)
            lines.append(f"{f.name}={text}")
        return '\n'.join(lines) + '\n'

    @classmethod
    def from_repository(cls, repository: RepositoryEmpty, source: str = '<text>') -> 'RunConfig':
        """
        Read every key of a decouple repository; unset fields keep their defaults.

        Raises:
            ConfigError: On an unknown key or a value that does not cast
        """
        schema = {f.name: f for f in fields(cls)}
        read = Config(repository)
        kwargs = {}
        for key in repository.data:
            if key not in schema:
                raise ConfigError(f"{source}: unknown configuration key '{key}'")
            try:
                kwargs[key] = read(key, cast=_CASTS[schema[key].type])
            except ValueError as e:
                raise ConfigError(f"{source}: invalid value for '{key}': {repository[key]!r} ({e})")
        return cls(**kwargs)

    @classmethod
    def from_text(cls, text: str, source: str = '<text>') -> 'RunConfig':
        """
        Parse key=value text.

        Raises:
            ConfigError: On an unknown key, a malformed line or a bad value
        """
        _check_lines(text, source)
        return cls.from_repository(TextRepository(text), source)

    @classmethod
    def from_file(cls, path) -> 'RunConfig':
        path = Path(path)
        with open(path, encoding='utf-8') as handle:
            _check_lines(handle.read(), str(path))
        logger.debug(f"Reading run configuration from {path}")
        return cls.from_repository(RepositoryEnv(str(path), encoding='utf-8'), source=str(path))
