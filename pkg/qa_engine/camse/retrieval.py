"""
Evidence retrieval for candidate choices.

Two sources are supported:
- BM25 over an inverted index of a textbook-style corpus, queried with
  question ⊕ choice.
- Nearest neighbours among solved questions, compared through the hidden
  activation of a small Bi-LSTM + MLP classifier trained on their answers.
"""

import dataclasses
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .config import (
    BATCH_SIZE,
    BM25_B,
    BM25_K1,
    EVIDENCE_CAP,
    MAX_STATEMENT_LEN,
    REPR_CONTEXT_SIZE,
    REPR_EPOCHS,
    REPR_HIDDEN,
    REPR_LEARNING_RATE,
    SEED,
)
from .exceptions import DatasetError, IndexFormatError
from .numerics import (
    AdamState,
    ParameterSet,
    Tape,
    Tensor,
    add,
    adam_step,
    bilstm,
    concat,
    cross_entropy,
    matmul,
    mean,
    reshape,
    slice_cols,
    take_rows,
    tanh,
)
from .text import EmbeddingTable, TokenSequence, Vocabulary, lookup, tokenize, truncate

logger = logging.getLogger(__name__)

INDEX_FORMAT_VERSION = 1

Query = Union[TokenSequence, str]


def _raw_tokens(item: Query) -> Tuple[str, ...]:
    return item.raw if isinstance(item, TokenSequence) else tuple(item.split())


# ============================================================================
# BM25 Inverted Index
# ============================================================================

@dataclass(frozen=True)
class ScoredDoc:
    doc_id: int
    score: float
    rank: int


@dataclass
class InvertedIndex:
    """Token → [(doc id, term frequency)] postings, sorted by doc id."""
    postings: Dict[str, List[Tuple[int, int]]]
    doc_lengths: List[int]
    avg_length: float
    documents: List[str] = field(default_factory=list)

    @property
    def doc_count(self) -> int:
        return len(self.doc_lengths)

    def term_frequency(self, token: str, doc_id: int) -> int:
        for posted_id, tf in self.postings.get(token, ()):
            if posted_id == doc_id:
                return tf
        return 0

    def document_frequency(self, token: str) -> int:
        return len(self.postings.get(token, ()))


def build_index(corpus: Sequence[Query]) -> InvertedIndex:
    """
    Index a corpus of pre-tokenized documents (doc id = position).

    Raises:
        DatasetError: If the corpus is empty or a document has no tokens
    """
    if not corpus:
        raise DatasetError("Cannot build an index over an empty corpus")

    postings: Dict[str, List[Tuple[int, int]]] = {}
    lengths = []
    documents = []
    for doc_id, doc in enumerate(corpus):
        tokens = _raw_tokens(doc)
        if not tokens:
            raise DatasetError(f"Document {doc_id} has no tokens")
        counts: Dict[str, int] = {}
        for token in tokens:
            counts[token] = counts.get(token, 0) + 1
        for token in sorted(counts):
            postings.setdefault(token, []).append((doc_id, counts[token]))
        lengths.append(len(tokens))
        documents.append(' '.join(tokens))

    index = InvertedIndex(postings, lengths, sum(lengths) / len(lengths), documents)
    logger.info(f"Indexed {index.doc_count} documents, {len(postings)} distinct terms")
    return index


def bm25(query: Query, index: InvertedIndex, k1: float = BM25_K1, b: float = BM25_B) -> List[ScoredDoc]:
    """
    Okapi BM25 with idf = ln((N - df + 0.5)/(df + 0.5) + 1).

    Repeated query terms contribute once per occurrence. Documents scoring 0
    are omitted; ties are broken by ascending doc id.
    """
    n = index.doc_count
    scores: Dict[int, float] = {}
    for term in _raw_tokens(query):
        postings = index.postings.get(term)
        if not postings:
            continue
        df = len(postings)
        idf = math.log((n - df + 0.5) / (df + 0.5) + 1)
        for doc_id, tf in postings:
            dl = index.doc_lengths[doc_id]
            contribution = idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * dl / index.avg_length))
            scores[doc_id] = scores.get(doc_id, 0.0) + contribution

    ordered = sorted(((doc_id, s) for doc_id, s in scores.items() if s > 0), key=lambda x: (-x[1], x[0]))
    return [ScoredDoc(doc_id, s, rank) for rank, (doc_id, s) in enumerate(ordered, start=1)]


def top_k_evidence(statement: Query, index: InvertedIndex, k: int = EVIDENCE_CAP,
                   k1: float = BM25_K1, b: float = BM25_B) -> List[ScoredDoc]:
    if k < 1:
        raise DatasetError(f"top_k_evidence needs k >= 1, got {k}")
    return bm25(statement, index, k1=k1, b=b)[:k]


def read_corpus(path) -> List[str]:
    """One pre-tokenized document per line."""
    with open(path, encoding='utf-8') as handle:
        return handle.read().splitlines()


def save_index(index: InvertedIndex, path) -> None:
    payload = {
        'format_version': INDEX_FORMAT_VERSION,
        'doc_count': index.doc_count,
        'avg_length': index.avg_length,
        'doc_lengths': index.doc_lengths,
        'documents': index.documents,
        'postings': {token: [list(p) for p in plist] for token, plist in index.postings.items()},
    }
    with open(path, 'w', encoding='utf-8') as handle:
        json.dump(payload, handle, sort_keys=True, ensure_ascii=False, separators=(',', ':'))
        handle.write('\n')
    logger.info(f"Index saved to {path}")


def load_index(path) -> InvertedIndex:
    """
    Raises:
        IndexFormatError: If the file is not a valid index of this version
    """
    try:
        with open(path, encoding='utf-8') as handle:
            payload = json.load(handle)
    except json.JSONDecodeError as e:
        raise IndexFormatError(f"{path}: not a JSON index file ({e})")

    if not isinstance(payload, dict) or payload.get('format_version') != INDEX_FORMAT_VERSION:
        raise IndexFormatError(f"{path}: unsupported index format version")
    try:
        postings = {
            token: [(int(doc_id), int(tf)) for doc_id, tf in plist]
            for token, plist in payload['postings'].items()
        }
        lengths = [int(x) for x in payload['doc_lengths']]
        index = InvertedIndex(postings, lengths, float(payload['avg_length']), list(payload.get('documents', [])))
    except (KeyError, TypeError, ValueError) as e:
        raise IndexFormatError(f"{path}: malformed index ({e})")
    if index.doc_count != payload.get('doc_count'):
        raise IndexFormatError(f"{path}: doc count does not match stored lengths")
    return index


def attach_bm25_evidence(instances: Sequence, index: InvertedIndex, k: int = EVIDENCE_CAP) -> list:
    """
    Replace each instance's evidence with the top-k BM25 documents retrieved
    for question ⊕ choice.
    """
    if not index.documents:
        raise IndexFormatError("Index carries no document texts to attach as evidence")
    attached = []
    for instance in instances:
        evidence = []
        for choice in instance.choices:
            hits = top_k_evidence(f"{instance.question} {choice}", index, k=k)
            evidence.append([index.documents[hit.doc_id] for hit in hits])
        attached.append(dataclasses.replace(instance, evidence=evidence))
    return attached


# ============================================================================
# LSTM-MLP Representation Classifier
# ============================================================================

class ReprClassifier:
    """
    Bi-LSTM (final forward and backward states) → tanh hidden layer → softmax
    over answer classes. The hidden activation is the representation.
    """

    def __init__(self, vocab: Vocabulary, table: EmbeddingTable, classes: Sequence[str],
                 context_size: int = REPR_CONTEXT_SIZE, hidden_size: int = REPR_HIDDEN,
                 seed: int = SEED, max_len: int = MAX_STATEMENT_LEN):
        if len(classes) < 2:
            raise DatasetError(f"Representation classifier needs at least 2 classes, got {len(classes)}")
        self.vocab = vocab
        self.table = table
        self.classes = list(classes)
        self.class_ids = {label: i for i, label in enumerate(self.classes)}
        self.context_size = context_size
        self.hidden_size = hidden_size
        self.max_len = max_len

        rng = np.random.default_rng(seed)
        self.params = ParameterSet()
        self.fwd = self.params.create_lstm('repr.context.fwd', table.dim, context_size, rng)
        self.bwd = self.params.create_lstm('repr.context.bwd', table.dim, context_size, rng)
        self.w_hidden = self.params.create('repr.hidden.weight', (2 * context_size, hidden_size), rng)
        self.b_hidden = self.params.create('repr.hidden.bias', (hidden_size,), rng, init='zeros')
        self.w_out = self.params.create('repr.out.weight', (hidden_size, len(self.classes)), rng)
        self.b_out = self.params.create('repr.out.bias', (len(self.classes),), rng, init='zeros')

    def _hidden(self, text: str) -> Tensor:
        seq = truncate(tokenize(text, self.vocab), self.max_len, min_len=1)
        states = bilstm(lookup(seq, self.table), self.fwd, self.bwd)
        n = len(seq)
        u = self.context_size
        final = concat([
            slice_cols(take_rows(states, [n - 1]), 0, u),
            slice_cols(take_rows(states, [0]), u, 2 * u),
        ], axis=1)
        return tanh(add(matmul(final, self.w_hidden), self.b_hidden))

    def logits(self, text: str) -> Tensor:
        return reshape(add(matmul(self._hidden(text), self.w_out), self.b_out), (len(self.classes),))

    def represent(self, text: str) -> np.ndarray:
        return self._hidden(text).data.reshape(-1).copy()

    def predict(self, text: str) -> str:
        return self.classes[int(np.argmax(self.logits(text).data))]


def train_repr_classifier(texts: Sequence[str], labels: Sequence[str], vocab: Vocabulary,
                          table: EmbeddingTable, epochs: int = REPR_EPOCHS,
                          learning_rate: float = REPR_LEARNING_RATE, batch_size: int = BATCH_SIZE,
                          seed: int = SEED, **sizes) -> ReprClassifier:
    """
    Train the representation classifier with cross-entropy over class labels.

    Raises:
        DatasetError: On mismatched inputs or fewer than two classes
    """
    if len(texts) != len(labels) or not texts:
        raise DatasetError(f"Need equally many texts and labels, got {len(texts)} and {len(labels)}")
    classes = sorted(set(labels))
    model = ReprClassifier(vocab, table, classes, seed=seed, **sizes)
    targets = [model.class_ids[label] for label in labels]
    state = AdamState(base_lr=learning_rate, decay=1.0)
    rng = np.random.default_rng(seed)

    for epoch in range(epochs):
        order = rng.permutation(len(texts))
        total = 0.0
        for start in range(0, len(order), batch_size):
            batch = order[start:start + batch_size]
            model.params.zero_grad()
            with Tape() as tape:
                loss = mean([cross_entropy(model.logits(texts[i]), targets[i]) for i in batch])
                tape.backward(loss)
            adam_step(model.params, state)
            total += float(loss.data) * len(batch)
        logger.debug(f"Representation classifier epoch {epoch + 1}: loss {total / len(texts):.4f}")

    logger.info(f"Trained representation classifier over {len(classes)} classes for {epochs} epochs")
    return model


@dataclass
class NeighborBank:
    """Solved questions with precomputed representations."""
    ids: List[str]
    texts: List[str]
    labels: List[str]
    vectors: np.ndarray


def build_neighbor_bank(classifier: ReprClassifier, instances: Sequence) -> NeighborBank:
    """Bank of solved instances labelled by their gold choice text."""
    ids, texts, labels = [], [], []
    for instance in instances:
        if instance.answer is None:
            continue
        ids.append(instance.id)
        texts.append(instance.question)
        labels.append(instance.choices[instance.answer])
    vectors = np.vstack([classifier.represent(text) for text in texts]) if texts else np.zeros((0, classifier.hidden_size))
    return NeighborBank(ids, texts, labels, vectors)


def _cosines(vector: np.ndarray, matrix: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(matrix, axis=1) * np.linalg.norm(vector)
    dots = matrix @ vector
    return np.where(norms > 1e-12, dots / np.where(norms > 1e-12, norms, 1.0), 0.0)


def neighbor_evidence(question: str, choices: Sequence[str], classifier: ReprClassifier,
                      bank: NeighborBank, per_class_k: int = EVIDENCE_CAP,
                      exclude_ids: Sequence[str] = ()) -> List[List[str]]:
    """
    For each choice class, the per_class_k most cosine-similar bank
    questions of that class (ties by ascending bank position).
    """
    similarities = _cosines(classifier.represent(question), bank.vectors) if len(bank.ids) else np.zeros(0)
    excluded = set(exclude_ids)
    evidence = []
    for choice in choices:
        members = [j for j, label in enumerate(bank.labels) if label == choice and bank.ids[j] not in excluded]
        if not members:
            logger.warning(f"Class '{choice}' is absent from the neighbour bank; no evidence attached")
            evidence.append([])
            continue
        members.sort(key=lambda j: (-similarities[j], j))
        evidence.append([bank.texts[j] for j in members[:per_class_k]])
    return evidence


def attach_neighbor_evidence(instances: Sequence, classifier: ReprClassifier, bank: NeighborBank,
                             per_class_k: int = EVIDENCE_CAP) -> list:
    """Replace evidence with neighbour questions, excluding each instance itself."""
    return [
        dataclasses.replace(
            instance,
            evidence=neighbor_evidence(instance.question, instance.choices, classifier, bank,
                                       per_class_k=per_class_k, exclude_ids=[instance.id]),
        )
        for instance in instances
    ]
