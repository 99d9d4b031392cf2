"""
Contextual self-attentive multi-scale sentence encoder.

For every scale i (window size 1..k) a sentence goes through:

    H^i = BiLSTM_i(conv_window(E, i))           n_i × 2u1
    M1  = tanh(H^i · W_s1)                      n_i × d_a
    M2  = BiLSTM'_i(M1)                         n_i × 2u2
    A^i = softmax over rows of (M2 · W_s2)      n_i × r
    T^i = (A^i)ᵀ · H^i                          r × 2u1

The statement and its evidence documents are encoded by the same weights.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .config import (
    ATTENTION_CONTEXT,
    ATTENTION_CONTEXT_SIZE,
    ATTENTION_HIDDEN,
    CONTEXT_SIZE,
    DROPOUT,
    EMBEDDING_DIM,
    SCALES,
    SUBSPACES,
)
from .exceptions import ConfigError, DimensionError, SequenceTooShortError
from .numerics import (
    LstmWeights,
    Parameter,
    ParameterSet,
    Tensor,
    bilstm,
    conv_window,
    dropout,
    matmul,
    softmax_axis,
    tanh,
    transpose,
)
from .text import EmbeddingTable, TokenSequence, lookup

logger = logging.getLogger(__name__)


@dataclass
class CamseConfig:
    scales: int = SCALES
    subspaces: int = SUBSPACES
    embedding_dim: int = EMBEDDING_DIM
    context_size: int = CONTEXT_SIZE
    attention_context_size: int = ATTENTION_CONTEXT_SIZE
    attention_hidden: int = ATTENTION_HIDDEN
    dropout: float = DROPOUT
    attention_context: bool = ATTENTION_CONTEXT

    def __post_init__(self):
        for name in ('scales', 'subspaces', 'embedding_dim', 'context_size', 'attention_hidden'):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be at least 1, got {getattr(self, name)}")
        if self.attention_context_size < 0:
            raise ConfigError(f"attention_context_size must be non-negative, got {self.attention_context_size}")
        if not 0 <= self.dropout < 1:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")

    @property
    def attention_size(self) -> int:
        """u2, defaulting to u1."""
        return self.attention_context_size or self.context_size

    @property
    def output_width(self) -> int:
        return 2 * self.context_size


@dataclass
class ScaleParams:
    window: int
    conv_weight: Parameter
    conv_bias: Parameter
    context_fwd: LstmWeights
    context_bwd: LstmWeights
    w_s1: Parameter
    w_s2: Parameter
    attention_fwd: Optional[LstmWeights] = None
    attention_bwd: Optional[LstmWeights] = None


class CamseParams:
    """Per-scale encoder weights registered in a shared ParameterSet."""

    def __init__(self, config: CamseConfig, params: ParameterSet, rng: np.random.Generator):
        self.config = config
        self.scales: List[ScaleParams] = []
        d = config.embedding_dim
        u1 = config.context_size
        u2 = config.attention_size
        for i in range(1, config.scales + 1):
            prefix = f"scale{i}"
            conv_weight = params.create(f"{prefix}.conv.weight", (i * d, d), rng)
            conv_bias = params.create(f"{prefix}.conv.bias", (d,), rng, init='zeros')
            context_fwd = params.create_lstm(f"{prefix}.context.fwd", d, u1, rng)
            context_bwd = params.create_lstm(f"{prefix}.context.bwd", d, u1, rng)
            w_s1 = params.create(f"{prefix}.attention.w_s1", (2 * u1, config.attention_hidden), rng)
            if config.attention_context:
                attention_fwd = params.create_lstm(f"{prefix}.attention.fwd", config.attention_hidden, u2, rng)
                attention_bwd = params.create_lstm(f"{prefix}.attention.bwd", config.attention_hidden, u2, rng)
                w_s2 = params.create(f"{prefix}.attention.w_s2", (2 * u2, config.subspaces), rng)
            else:
                attention_fwd = attention_bwd = None
                w_s2 = params.create(f"{prefix}.attention.w_s2", (config.attention_hidden, config.subspaces), rng)
            self.scales.append(ScaleParams(
                i, conv_weight, conv_bias, context_fwd, context_bwd, w_s1, w_s2, attention_fwd, attention_bwd
            ))


@dataclass
class EmbeddingTensor:
    """T^1..T^k (each r×2u1) plus the attention matrices that produced them."""
    scales: List[Tensor]
    attention: List[Tensor] = field(default_factory=list)

    @property
    def k(self) -> int:
        return len(self.scales)

    def as_array(self) -> np.ndarray:
        """k × r × 2u1 copy of T."""
        return np.stack([t.data for t in self.scales])


def multi_scale_context(e: Tensor, params: CamseParams, training: bool = False,
                        rng: Optional[np.random.Generator] = None) -> List[Tensor]:
    """
    H^i for i = 1..k, each (n-i+1) × 2u1.

    Raises:
        SequenceTooShortError: If n < k
    """
    k = params.config.scales
    if e.shape[0] < k:
        raise SequenceTooShortError(e.shape[0], k)
    contexts = []
    for scale in params.scales:
        conv = conv_window(e, scale.window, scale.conv_weight, scale.conv_bias)
        h = bilstm(conv, scale.context_fwd, scale.context_bwd)
        contexts.append(dropout(h, params.config.dropout, training, rng))
    return contexts


def contextual_attention(h: Tensor, scale: ScaleParams, config: CamseConfig, training: bool = False,
                         rng: Optional[np.random.Generator] = None) -> Tensor:
    """A^i (n_i × r); every column sums to 1 over the n_i positions."""
    if h.ndim != 2 or h.shape[1] != 2 * config.context_size:
        raise DimensionError(f"Context matrix of shape {h.shape} does not have width {2 * config.context_size}")
    m1 = dropout(tanh(matmul(h, scale.w_s1)), config.dropout, training, rng)
    if config.attention_context:
        m1 = bilstm(m1, scale.attention_fwd, scale.attention_bwd)
    return softmax_axis(matmul(m1, scale.w_s2), axis='columns')


def embed_tensor(h: Tensor, a: Tensor) -> Tensor:
    """T^i = (A^i)ᵀ · H^i."""
    if h.shape[0] != a.shape[0]:
        raise DimensionError(f"Attention rows {a.shape[0]} do not match context rows {h.shape[0]}")
    return matmul(transpose(a), h)


def encode(seq: TokenSequence, table: EmbeddingTable, params: CamseParams, training: bool = False,
           rng: Optional[np.random.Generator] = None) -> EmbeddingTensor:
    """Encode a (truncated) token sequence into the embedding tensor T."""
    contexts = multi_scale_context(lookup(seq, table), params, training, rng)
    scales, attention = [], []
    for h, scale in zip(contexts, params.scales):
        a = contextual_attention(h, scale, params.config, training, rng)
        attention.append(a)
        scales.append(embed_tensor(h, a))
    return EmbeddingTensor(scales, attention)
