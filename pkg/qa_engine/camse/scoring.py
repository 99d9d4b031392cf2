"""
Dual scoring of a (statement, document) embedding-tensor pair.

Per scale, aligned subspaces are compared by cosine (SMS) and every
ordered non-aligned pair by a small sigmoid MLP (SAS). A statement-only
gate weights each pair, the diagonal and off-diagonal parts are summed
separately, and one affine layer maps the 2k sums to the pair score S.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .config import GATE_HIDDEN, SAS_BIAS, SCALES, SCORING_MODE, SUBSPACES, CONTEXT_SIZE, VALID_SCORING_MODES
from .encoder import EmbeddingTensor
from .exceptions import ConfigError, DimensionError
from .numerics import (
    Parameter,
    ParameterSet,
    Tensor,
    add,
    concat,
    cosine_rows,
    diag_matrix,
    dot,
    embed_offdiagonal,
    matmul,
    mul,
    offdiagonal_pairs,
    reduce_sum,
    reshape,
    sigmoid,
    stack,
    take_rows,
    tanh,
)

logger = logging.getLogger(__name__)


@dataclass
class ScoringConfig:
    scales: int = SCALES
    subspaces: int = SUBSPACES
    context_size: int = CONTEXT_SIZE
    gate_hidden: int = GATE_HIDDEN
    sas_bias: bool = SAS_BIAS
    mode: str = SCORING_MODE

    def __post_init__(self):
        if self.mode not in VALID_SCORING_MODES:
            raise ConfigError(
                f"Invalid scoring mode '{self.mode}'. Must be one of: {', '.join(VALID_SCORING_MODES)}."
            )
        for name in ('scales', 'subspaces', 'context_size', 'gate_hidden'):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be at least 1, got {getattr(self, name)}")


@dataclass
class ScaleScoringParams:
    sas_weight: Parameter        # r(r-1) × 4u1, one row per ordered off-diagonal pair
    sas_bias: Optional[Parameter]
    gate_w1: Parameter           # h_g × (r·2u1)
    gate_w2: Parameter           # r² × h_g


class ScoringParams:
    def __init__(self, config: ScoringConfig, params: ParameterSet, rng: np.random.Generator):
        self.config = config
        r = config.subspaces
        width = 2 * config.context_size
        pairs = r * (r - 1)
        self.scales: List[ScaleScoringParams] = []
        for i in range(1, config.scales + 1):
            prefix = f"scale{i}"
            sas_weight = params.create(f"{prefix}.sas.weight", (pairs, 2 * width), rng) if pairs else None
            sas_bias = None
            if pairs and config.sas_bias:
                sas_bias = params.create(f"{prefix}.sas.bias", (pairs,), rng, init='zeros')
            gate_w1 = params.create(f"{prefix}.gate.w1", (config.gate_hidden, r * width), rng)
            gate_w2 = params.create(f"{prefix}.gate.w2", (r * r, config.gate_hidden), rng)
            self.scales.append(ScaleScoringParams(sas_weight, sas_bias, gate_w1, gate_w2))
        self.agg_weight = params.create("aggregate.weight", (2 * config.scales,), rng)
        self.agg_bias = params.create("aggregate.bias", (1,), rng, init='zeros')


@dataclass
class ScorePack:
    """Per-scale intermediate values of one pair score, as plain arrays."""
    sms: List[np.ndarray] = field(default_factory=list)
    sas: List[np.ndarray] = field(default_factory=list)
    gate: List[np.ndarray] = field(default_factory=list)
    o_sms: List[float] = field(default_factory=list)
    o_sas: List[float] = field(default_factory=list)
    score: float = 0.0
    degenerate_rows: List[np.ndarray] = field(default_factory=list)

    def combined_matrix(self, scale: int) -> np.ndarray:
        """r×r with SMS on the diagonal and SAS off the diagonal."""
        matrix = self.sas[scale].copy()
        np.fill_diagonal(matrix, self.sms[scale])
        return matrix


# ============================================================================
# Pathways
# ============================================================================

def sms(t1: Tensor, t2: Tensor) -> Tuple[Tensor, np.ndarray]:
    """
    Cosine of aligned subspace rows.

    Returns:
        (r cosines, mask of rows that had zero norm and were scored 0)
    """
    values, degenerate = cosine_rows(t1, t2)
    if degenerate.any():
        logger.warning(f"SMS: {int(degenerate.sum())} zero-norm subspace row(s) scored as 0")
    return values, degenerate


def sas(t1: Tensor, t2: Tensor, weight: Tensor, bias: Optional[Tensor]) -> Tensor:
    """
    r×r association scores, zero on the diagonal.

    Off-diagonal (u, v) = sigmoid(w_uv · [T1_u ‖ T2_v] + b_uv), pairs in
    row-major order.
    """
    if t1.shape != t2.shape:
        raise DimensionError(f"SAS operands differ in shape: {t1.shape} vs {t2.shape}")
    r = t1.shape[0]
    rows, cols = offdiagonal_pairs(r)
    if weight.shape != (len(rows), 2 * t1.shape[1]):
        raise DimensionError(f"SAS weight shape {weight.shape} does not fit r={r}, width {t1.shape[1]}")
    pairs = concat([take_rows(t1, rows), take_rows(t2, cols)], axis=1)
    logits = reduce_sum(mul(pairs, weight), axis=1)
    if bias is not None:
        logits = add(logits, bias)
    return embed_offdiagonal(sigmoid(logits), r)


def gate(t1: Tensor, w1: Tensor, w2: Tensor) -> Tensor:
    """G = reshape(sigmoid(W_g2 · tanh(W_g1 · flatten(T1))), r×r), from the statement only."""
    r = t1.shape[0]
    flat = reshape(t1, (t1.size, 1))
    g = sigmoid(matmul(w2, tanh(matmul(w1, flat))))
    return reshape(g, (r, r))


def aggregate_scale(sms_values: Tensor, sas_matrix: Tensor, g: Tensor) -> Tuple[Tensor, Tensor]:
    """
    (O_sms, O_sas): masked gate-weighted sums of the diagonal and
    off-diagonal parts. sms_values may be r cosines or a full r×r matrix.
    """
    r = g.shape[0]
    sms_matrix = diag_matrix(sms_values) if sms_values.ndim == 1 else sms_values
    if sms_matrix.shape != (r, r) or sas_matrix.shape != (r, r):
        raise DimensionError(
            f"aggregate_scale shapes {sms_matrix.shape}, {sas_matrix.shape}, {g.shape} are not all {r}×{r}"
        )
    mask_sms = Tensor(np.eye(r))
    mask_sas = Tensor(1.0 - np.eye(r))
    o_sms = reduce_sum(mul(mul(sms_matrix, g), mask_sms))
    o_sas = reduce_sum(mul(mul(sas_matrix, g), mask_sas))
    return o_sms, o_sas


# ============================================================================
# Pair Score
# ============================================================================

def statement_gates(t1: EmbeddingTensor, params: ScoringParams) -> List[Tensor]:
    """Per-scale gate matrices; reusable across every document of a statement."""
    return [gate(t, scale.gate_w1, scale.gate_w2) for t, scale in zip(t1.scales, params.scales)]


def score_pair(t1: EmbeddingTensor, t2: EmbeddingTensor, params: ScoringParams,
               gates: Optional[Sequence[Tensor]] = None) -> Tuple[Tensor, ScorePack]:
    """
    S = w_s · [O_sms^1..k, O_sas^1..k] + b_s.

    Pathways dropped by the scoring mode contribute the constant 0.

    Raises:
        ConfigError: If the tensors do not match the scoring configuration
    """
    config = params.config
    expected = (config.subspaces, 2 * config.context_size)
    if t1.k != config.scales or t2.k != config.scales:
        raise ConfigError(f"Expected {config.scales} scales, got {t1.k} and {t2.k}")
    for t in list(t1.scales) + list(t2.scales):
        if t.shape != expected:
            raise ConfigError(f"Embedding tensor scale of shape {t.shape} does not match {expected}")
    if gates is None:
        gates = statement_gates(t1, params)

    use_sms = config.mode in ('sms+sas', 'sms_only')
    use_sas = config.mode in ('sms+sas', 'sas_only') and config.subspaces > 1
    r = config.subspaces
    pack = ScorePack()
    o_sms_all, o_sas_all = [], []
    for a, b, g, scale in zip(t1.scales, t2.scales, gates, params.scales):
        zero = Tensor(np.zeros(()))
        if use_sms:
            sms_values, degenerate = sms(a, b)
        else:
            sms_values, degenerate = Tensor(np.zeros(r)), np.zeros(r, dtype=bool)
        if use_sas:
            sas_matrix = sas(a, b, scale.sas_weight, scale.sas_bias)
        else:
            sas_matrix = Tensor(np.zeros((r, r)))
        o_sms, o_sas = aggregate_scale(sms_values, sas_matrix, g)
        o_sms_all.append(o_sms if use_sms else zero)
        o_sas_all.append(o_sas if use_sas else zero)

        pack.sms.append(sms_values.data.copy())
        pack.sas.append(sas_matrix.data.copy())
        pack.gate.append(g.data.copy())
        pack.o_sms.append(float(o_sms_all[-1].data))
        pack.o_sas.append(float(o_sas_all[-1].data))
        pack.degenerate_rows.append(degenerate)

    features = stack(o_sms_all + o_sas_all)
    score = add(dot(params.agg_weight, features), reshape(params.agg_bias, ()))
    pack.score = float(score.data)
    return score, pack
