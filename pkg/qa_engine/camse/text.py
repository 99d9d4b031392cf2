"""
Tokenization, vocabulary, word embeddings and near-duplicate filtering.

Text is consumed pre-tokenized: whitespace separates tokens. Id 0 is the
out-of-vocabulary sentinel and always maps to the zero vector.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .config import DEDUP_THRESHOLD, SCALES
from .exceptions import ConfigError, CorruptionError, EmptySequenceError, ParseError
from .numerics import Parameter, Tensor, take_rows

logger = logging.getLogger(__name__)

OOV_ID = 0
OOV_TOKEN = '<oov>'


# ============================================================================
# Vocabulary and Sequences
# ============================================================================

class Vocabulary:
    """Bijection between tokens and ids 1..|V|-1; id 0 is reserved for OOV."""

    def __init__(self, tokens: Iterable[str] = ()):
        self._ids: Dict[str, int] = {}
        self._tokens: List[str] = [OOV_TOKEN]
        for token in tokens:
            self.add(token)

    def add(self, token: str) -> int:
        if token not in self._ids:
            self._ids[token] = len(self._tokens)
            self._tokens.append(token)
        return self._ids[token]

    def id_of(self, token: str) -> int:
        return self._ids.get(token, OOV_ID)

    def token_of(self, token_id: int) -> str:
        if not 0 <= token_id < len(self._tokens):
            raise CorruptionError(f"Token id {token_id} outside vocabulary of size {len(self._tokens)}")
        return self._tokens[token_id]

    @property
    def tokens(self) -> List[str]:
        """Real tokens in id order (the OOV sentinel excluded)."""
        return self._tokens[1:]

    def __contains__(self, token: str) -> bool:
        return token in self._ids

    def __len__(self) -> int:
        return len(self._tokens)

    @classmethod
    def from_texts(cls, texts: Iterable[str]) -> 'Vocabulary':
        vocab = cls()
        for text in texts:
            for token in text.split():
                vocab.add(token)
        return vocab


@dataclass(frozen=True)
class TokenSequence:
    ids: Tuple[int, ...]
    raw: Tuple[str, ...]

    def __len__(self) -> int:
        return len(self.ids)


def tokenize(text: str, vocab: Vocabulary) -> TokenSequence:
    """
    Split on whitespace and map each token to its id (unknown tokens to 0).

    Raises:
        EmptySequenceError: If the text has no tokens
    """
    raw = tuple(text.split())
    if not raw:
        raise EmptySequenceError()
    return TokenSequence(tuple(vocab.id_of(token) for token in raw), raw)


def truncate(seq: TokenSequence, max_len: int, min_len: int = SCALES) -> TokenSequence:
    """
    Keep the first max_len tokens.

    Args:
        seq: Token sequence
        max_len: Maximum length
        min_len: Smallest acceptable max_len (the widest convolution window)

    Raises:
        ConfigError: If max_len < min_len
    """
    if max_len < min_len:
        raise ConfigError(
            f"Truncation length {max_len} is below the widest convolution window {min_len}"
        )
    if len(seq) <= max_len:
        return seq
    return TokenSequence(seq.ids[:max_len], seq.raw[:max_len])


# ============================================================================
# Embedding Table
# ============================================================================

class EmbeddingTable:
    """
    |V|×d word vectors.

    Frozen tables are plain tensors and receive no gradients; fine-tuned
    tables are Parameters. Row 0 is kept at zero in both modes.
    """

    PARAMETER_NAME = 'embeddings'

    def __init__(self, matrix: np.ndarray, trainable: bool = False):
        matrix = np.array(matrix, dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape[0] < 1:
            raise CorruptionError(f"Embedding matrix must be |V|×d, got shape {matrix.shape}")
        if not np.all(np.isfinite(matrix)):
            raise CorruptionError("Embedding matrix contains non-finite values")
        matrix[OOV_ID] = 0.0
        self.trainable = trainable
        if trainable:
            self.weights = Parameter(matrix, self.PARAMETER_NAME)
        else:
            self.weights = Tensor(matrix, name=self.PARAMETER_NAME)

    @property
    def size(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.weights.shape[1]

    def mask_oov_grad(self) -> None:
        """Drop any gradient on the OOV row before an optimizer step."""
        if self.trainable and self.weights.grad is not None:
            self.weights.grad[OOV_ID] = 0.0


def lookup(seq: TokenSequence, table: EmbeddingTable) -> Tensor:
    """
    Gather the n×d word matrix for a sequence.

    Raises:
        CorruptionError: If an id is outside the table
    """
    for token_id in seq.ids:
        if not 0 <= token_id < table.size:
            raise CorruptionError(f"Token id {token_id} outside embedding table of size {table.size}")
    return take_rows(table.weights, seq.ids)


def random_embeddings(vocab: Vocabulary, dim: int, seed: int, trainable: bool = False) -> EmbeddingTable:
    """Seeded uniform ±0.1 vectors for when no pre-trained file is given."""
    rng = np.random.default_rng(seed)
    matrix = rng.uniform(-0.1, 0.1, size=(len(vocab), dim))
    return EmbeddingTable(matrix, trainable=trainable)


def load_embeddings(path, trainable: bool = False) -> Tuple[Vocabulary, EmbeddingTable]:
    """
    Read a word2vec-style text file.

    Line 1 is "<vocab_size> <dim>"; each following line is a token and dim
    floats.

    Raises:
        ParseError: On a malformed header or row, with the line number
    """
    path = Path(path)
    with open(path, encoding='utf-8') as handle:
        lines = handle.read().splitlines()

    if not lines:
        raise ParseError("Empty embedding file", path=str(path), line=1)
    header = lines[0].split()
    try:
        count, dim = int(header[0]), int(header[1])
        if len(header) != 2 or count < 0 or dim < 1:
            raise ValueError
    except (ValueError, IndexError):
        raise ParseError(f"Malformed header '{lines[0]}'", path=str(path), line=1)

    vocab = Vocabulary()
    rows = [np.zeros(dim)]
    for line_no, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != dim + 1:
            raise ParseError(
                f"Expected a token and {dim} values, got {len(parts) - 1} values",
                path=str(path), line=line_no
            )
        token = parts[0]
        if token in vocab:
            raise ParseError(f"Duplicate token '{token}'", path=str(path), line=line_no)
        try:
            vector = np.array([float(v) for v in parts[1:]])
        except ValueError:
            raise ParseError(f"Non-numeric value in row for '{token}'", path=str(path), line=line_no)
        if not np.all(np.isfinite(vector)):
            raise ParseError(f"Non-finite value in row for '{token}'", path=str(path), line=line_no)
        vocab.add(token)
        rows.append(vector)

    if len(rows) - 1 != count:
        raise ParseError(f"Header announces {count} rows, file has {len(rows) - 1}", path=str(path), line=1)

    logger.info(f"Loaded {count} embeddings of width {dim} from {path}")
    return vocab, EmbeddingTable(np.vstack(rows), trainable=trainable)


def save_embeddings(path, vocab: Vocabulary, table: EmbeddingTable) -> None:
    """Write the table (OOV row excluded) in the same text format."""
    matrix = table.weights.data
    with open(path, 'w', encoding='utf-8') as handle:
        handle.write(f"{len(vocab) - 1} {table.dim}\n")
        for token_id, token in enumerate(vocab.tokens, start=1):
            values = ' '.join(repr(float(v)) for v in matrix[token_id])
            handle.write(f"{token} {values}\n")


# ============================================================================
# Levenshtein Deduplication
# ============================================================================

def levenshtein(a: str, b: str) -> int:
    """Character edit distance by dynamic programming."""
    if len(a) < len(b):
        a, b = b, a
    previous = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        current = [i]
        for j, cb in enumerate(b, start=1):
            current.append(min(
                previous[j] + 1,
                current[j - 1] + 1,
                previous[j - 1] + (ca != cb),
            ))
        previous = current
    return previous[-1]


def levenshtein_ratio(a: str, b: str) -> float:
    """1 - dist/max(|a|, |b|); two empty strings have ratio 1."""
    longest = max(len(a), len(b))
    if longest == 0:
        return 1.0
    return 1.0 - levenshtein(a, b) / longest


def dedup_train(train: Sequence, test: Sequence, threshold: float = DEDUP_THRESHOLD,
                key: Optional[Callable] = None) -> list:
    """
    Drop training questions too similar to any test question.

    Args:
        train: Training items (strings, or objects read through key)
        test: Test items
        threshold: Ratio at or above which a training item is dropped
        key: Maps an item to its question string (default: str items or .question)

    Returns:
        Filtered training list, order preserved
    """
    if not 0 < threshold <= 1:
        raise ConfigError(f"Dedup threshold must be in (0, 1], got {threshold}")
    if key is None:
        key = lambda item: item if isinstance(item, str) else item.question  # noqa: E731

    test_texts = [key(item) for item in test]
    kept = []
    for item in train:
        text = key(item)
        if any(levenshtein_ratio(text, other) >= threshold for other in test_texts):
            continue
        kept.append(item)

    dropped = len(train) - len(kept)
    if dropped:
        logger.info(f"Dropped {dropped} of {len(train)} training questions as near-duplicates of test")
    return kept
