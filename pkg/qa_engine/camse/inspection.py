"""
Inspection payloads for trained models.

Attention dumps show, per scale, how each semantic subspace distributes its
weight over the i-gram units of a sentence; score dumps show the r×r
matrix of SMS (diagonal) and SAS (off-diagonal) values, the gate and the
aggregated sums behind one pair score.
"""

import csv
import logging
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .qa import CamseModel
from .scoring import score_pair
from .text import TokenSequence, tokenize, truncate

logger = logging.getLogger(__name__)

DEFAULT_KEYWORDS = 3


def ngram_units(raw: Sequence[str], window: int) -> List[str]:
    """The n-window+1 units a scale-`window` convolution sees."""
    return [' '.join(raw[j:j + window]) for j in range(len(raw) - window + 1)]


def subspace_keywords(units: Sequence[str], attention: np.ndarray, top: int = DEFAULT_KEYWORDS) -> List[List[Tuple[str, float]]]:
    """
    Highest-weighted units per subspace (ties by position).

    Args:
        units: Labels of the attention rows
        attention: n_i × r attention matrix
        top: Units kept per subspace
    """
    keywords = []
    for column in attention.T:
        order = sorted(range(len(units)), key=lambda j: (-column[j], j))[:top]
        keywords.append([(units[j], float(column[j])) for j in order])
    return keywords


def _sequence(model: CamseModel, text: str, max_len: int) -> TokenSequence:
    return truncate(tokenize(text, model.vocab), max_len, min_len=model.encoder_config.scales)


def attention_dump(model: CamseModel, text: str, top: int = DEFAULT_KEYWORDS) -> Dict:
    """Per-scale attention weights of a sentence in eval mode."""
    seq = _sequence(model, text, model.train_config.max_document_len)
    encoded = model.encode(seq)
    scales = []
    for i, attention in enumerate(encoded.attention, start=1):
        weights = attention.data
        units = ngram_units(seq.raw, i)
        scales.append({
            'scale': i,
            'units': units,
            'weights': weights.tolist(),
            'column_sums': weights.sum(axis=0).tolist(),
            'keywords': [
                [{'unit': unit, 'weight': weight} for unit, weight in subspace]
                for subspace in subspace_keywords(units, weights, top)
            ],
        })
    return {'text': ' '.join(seq.raw), 'tokens': len(seq), 'subspaces': model.encoder_config.subspaces,
            'scales': scales}


def write_attention_csv(dump: Dict, path) -> None:
    """One row per (scale, unit) with the r subspace weights."""
    r = dump['subspaces']
    with open(path, 'w', encoding='utf-8', newline='') as handle:
        writer = csv.writer(handle)
        writer.writerow(['scale', 'position', 'unit'] + [f"subspace_{j + 1}" for j in range(r)])
        for scale in dump['scales']:
            for position, (unit, row) in enumerate(zip(scale['units'], scale['weights'])):
                writer.writerow([scale['scale'], position, unit] + [repr(float(w)) for w in row])


def render_attention_heatmap(dump: Dict, path) -> Path:
    """Save one heatmap panel per scale (units × subspaces) as an image."""
    import matplotlib
    matplotlib.use('Agg')
    import matplotlib.pyplot as plt

    scales = dump['scales']
    height = max(2.0, 0.3 * max(len(s['units']) for s in scales) + 1.0)
    fig, axes = plt.subplots(1, len(scales), figsize=(4 * len(scales), height), squeeze=False)
    for ax, scale in zip(axes[0], scales):
        im = ax.imshow(np.array(scale['weights']), cmap='Reds', aspect='auto', vmin=0.0)
        ax.set_title(f"scale {scale['scale']}")
        ax.set_xlabel('subspace')
        ax.set_yticks(range(len(scale['units'])))
        ax.set_yticklabels(scale['units'], fontsize=7)
        fig.colorbar(im, ax=ax)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    logger.info(f"Attention heatmap written to {path}")
    return Path(path)


def score_dump(model: CamseModel, statement: str, document: str) -> Dict:
    """Combined SMS/SAS matrices, gates, aggregated sums and S for one pair."""
    t1 = model.encode(_sequence(model, statement, model.train_config.max_statement_len))
    t2 = model.encode(_sequence(model, document, model.train_config.max_document_len))
    _, pack = score_pair(t1, t2, model.scorer)
    return {
        'statement': statement,
        'document': document,
        'subspaces': model.scoring_config.subspaces,
        'mode': model.scoring_config.mode,
        'score': pack.score,
        'scales': [
            {
                'scale': i + 1,
                'matrix': pack.combined_matrix(i).tolist(),
                'gate': pack.gate[i].tolist(),
                'o_sms': pack.o_sms[i],
                'o_sas': pack.o_sas[i],
                'zero_norm_rows': [int(j) for j in np.flatnonzero(pack.degenerate_rows[i])],
            }
            for i in range(len(pack.sms))
        ],
    }
