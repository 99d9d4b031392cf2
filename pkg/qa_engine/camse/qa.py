"""
Multiple-choice question answering over per-choice evidence.

A candidate's reliability is the plain sum of the pair scores between its
statement (question ⊕ choice) and each of its evidence documents. The
prediction is the most reliable candidate; training minimises the
cross-entropy of the softmax over candidate reliabilities.
"""

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .config import (
    ADAM_BETA1,
    ADAM_BETA2,
    ADAM_EPS,
    BATCH_SIZE,
    EPOCHS,
    EVIDENCE_CAP,
    FINE_TUNE_EMBEDDINGS,
    LEARNING_RATE,
    LR_DECAY,
    MAX_DOCUMENT_LEN,
    MAX_STATEMENT_LEN,
    SEED,
)
from .encoder import CamseConfig, CamseParams, EmbeddingTensor, encode
from .exceptions import ConfigError, DatasetError, DivergenceError, ParseError
from .numerics import AdamState, ParameterSet, Tape, Tensor, adam_step, add, cross_entropy, mean, stack
from .scoring import ScorePack, ScoringConfig, ScoringParams, score_pair, statement_gates
from .text import EmbeddingTable, TokenSequence, Vocabulary, tokenize, truncate

logger = logging.getLogger(__name__)


# ============================================================================
# Dataset
# ============================================================================

@dataclass
class QaInstance:
    """Question, n_c choices, per-choice evidence texts and the gold index."""
    id: str
    question: str
    choices: List[str]
    evidence: List[List[str]]
    answer: Optional[int] = None

    def __post_init__(self):
        if len(self.choices) < 2:
            raise DatasetError(f"Instance {self.id}: needs at least 2 choices, got {len(self.choices)}")
        if len(self.evidence) != len(self.choices):
            raise DatasetError(
                f"Instance {self.id}: {len(self.evidence)} evidence lists for {len(self.choices)} choices"
            )
        if self.answer is not None and not 0 <= self.answer < len(self.choices):
            raise DatasetError(f"Instance {self.id}: answer {self.answer} outside 0..{len(self.choices) - 1}")

    def to_record(self) -> dict:
        return {
            'id': self.id,
            'question': self.question,
            'choices': list(self.choices),
            'evidence': [list(docs) for docs in self.evidence],
            'answer': self.answer,
        }


def load_dataset(path) -> List[QaInstance]:
    """
    Read one JSON record {id, question, choices, evidence, answer} per line.

    Raises:
        ParseError: On malformed JSON or an invalid record, with the line number
    """
    instances = []
    with open(path, encoding='utf-8') as handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                instances.append(QaInstance(
                    id=str(record['id']),
                    question=record['question'],
                    choices=list(record['choices']),
                    evidence=[list(docs) for docs in record['evidence']],
                    answer=record.get('answer'),
                ))
            except (json.JSONDecodeError, KeyError, TypeError) as e:
                raise ParseError(f"Invalid dataset record ({e})", path=str(path), line=line_no)
            except DatasetError as e:
                raise ParseError(e.message, path=str(path), line=line_no)
    logger.info(f"Loaded {len(instances)} instances from {path}")
    return instances


def save_dataset(path, instances: Sequence[QaInstance]) -> None:
    with open(path, 'w', encoding='utf-8') as handle:
        for instance in instances:
            handle.write(json.dumps(instance.to_record(), sort_keys=True, ensure_ascii=False))
            handle.write('\n')


def dataset_texts(instances: Sequence[QaInstance]) -> List[str]:
    """Every question, choice and evidence text, for building a vocabulary."""
    texts = []
    for instance in instances:
        texts.append(instance.question)
        texts.extend(instance.choices)
        for docs in instance.evidence:
            texts.extend(docs)
    return texts


# ============================================================================
# Model
# ============================================================================

@dataclass
class TrainConfig:
    batch_size: int = BATCH_SIZE
    epochs: int = EPOCHS
    learning_rate: float = LEARNING_RATE
    lr_decay: float = LR_DECAY
    adam_beta1: float = ADAM_BETA1
    adam_beta2: float = ADAM_BETA2
    adam_eps: float = ADAM_EPS
    max_statement_len: int = MAX_STATEMENT_LEN
    max_document_len: int = MAX_DOCUMENT_LEN
    evidence_cap: int = EVIDENCE_CAP
    seed: int = SEED
    fine_tune_embeddings: bool = FINE_TUNE_EMBEDDINGS
    separator: str = ''
    threads: int = 1

    def __post_init__(self):
        for name in ('batch_size', 'epochs', 'max_statement_len', 'max_document_len', 'evidence_cap', 'threads'):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be at least 1, got {getattr(self, name)}")
        if self.learning_rate <= 0 or not 0 < self.lr_decay <= 1:
            raise ConfigError(f"Invalid learning-rate schedule (lr={self.learning_rate}, decay={self.lr_decay})")


class CamseModel:
    """Vocabulary, embeddings, encoder and scorer sharing one ParameterSet."""

    def __init__(self, vocab: Vocabulary, table: EmbeddingTable, encoder_config: CamseConfig,
                 scoring_config: ScoringConfig, train_config: Optional[TrainConfig] = None):
        self.train_config = train_config or TrainConfig()
        if table.dim != encoder_config.embedding_dim:
            raise ConfigError(
                f"Embedding width {table.dim} does not match embedding_dim {encoder_config.embedding_dim}"
            )
        if (scoring_config.scales, scoring_config.subspaces, scoring_config.context_size) != (
                encoder_config.scales, encoder_config.subspaces, encoder_config.context_size):
            raise ConfigError("Scoring configuration does not match the encoder's scales, subspaces or context size")
        for name in ('max_statement_len', 'max_document_len'):
            if getattr(self.train_config, name) < encoder_config.scales:
                raise ConfigError(
                    f"{name} ({getattr(self.train_config, name)}) must be at least scales ({encoder_config.scales})"
                )

        self.vocab = vocab
        self.table = table
        rng = np.random.default_rng(self.train_config.seed)
        self.params = ParameterSet()
        self.encoder = CamseParams(encoder_config, self.params, rng)
        self.scorer = ScoringParams(scoring_config, self.params, rng)
        if table.trainable:
            self.params.add(table.weights)
        logger.debug(f"Model built with {len(self.params)} parameter tensors ({self.params.count()} values)")

    @property
    def encoder_config(self) -> CamseConfig:
        return self.encoder.config

    @property
    def scoring_config(self) -> ScoringConfig:
        return self.scorer.config

    def statement(self, question: str, choice: str) -> TokenSequence:
        separator = f" {self.train_config.separator} " if self.train_config.separator else " "
        seq = tokenize(f"{question}{separator}{choice}", self.vocab)
        return truncate(seq, self.train_config.max_statement_len, min_len=self.encoder_config.scales)

    def document(self, text: str) -> TokenSequence:
        seq = tokenize(text, self.vocab)
        return truncate(seq, self.train_config.max_document_len, min_len=self.encoder_config.scales)

    def encode(self, seq: TokenSequence, training: bool = False,
               rng: Optional[np.random.Generator] = None) -> EmbeddingTensor:
        return encode(seq, self.table, self.encoder, training, rng)


# ============================================================================
# Scoring, Prediction, Loss
# ============================================================================

def candidate_score(statement: TokenSequence, evidence_docs: Sequence[str], model: CamseModel,
                    training: bool = False, rng: Optional[np.random.Generator] = None) -> Tuple[Tensor, bool]:
    """
    S_i: sum of pair scores over the first evidence_cap documents, in order.

    The statement is encoded once and its gates reused for every document.

    Returns:
        (S_i, True when there was no evidence and S_i is 0)
    """
    docs = list(evidence_docs)[:model.train_config.evidence_cap]
    if not docs:
        return Tensor(np.zeros(())), True
    t1 = model.encode(statement, training, rng)
    gates = statement_gates(t1, model.scorer)
    total = None
    for doc in docs:
        s, _ = score_pair(t1, model.encode(model.document(doc), training, rng), model.scorer, gates=gates)
        total = s if total is None else add(total, s)
    return total, False


def candidate_scores(instance: QaInstance, model: CamseModel, training: bool = False,
                     rng: Optional[np.random.Generator] = None) -> Tensor:
    """n_c vector of candidate reliabilities."""
    scores = []
    empty = []
    for choice, docs in zip(instance.choices, instance.evidence):
        s, is_empty = candidate_score(model.statement(instance.question, choice), docs, model, training, rng)
        scores.append(s)
        if is_empty:
            empty.append(choice)
    if empty:
        logger.warning(f"Instance {instance.id}: no evidence for {len(empty)} choice(s); scored as 0")
    counts = {min(len(docs), model.train_config.evidence_cap) for docs in instance.evidence}
    if len(counts) > 1:
        logger.debug(f"Instance {instance.id}: ragged evidence counts {sorted(counts)}")
    return stack(scores)


def select_answer(scores: np.ndarray) -> int:
    """Argmax with ties going to the lowest index."""
    return int(np.argmax(scores))


def predict(instance: QaInstance, model: CamseModel) -> int:
    return select_answer(candidate_scores(instance, model).data)


def loss(instance: QaInstance, model: CamseModel, training: bool = False,
         rng: Optional[np.random.Generator] = None) -> Tensor:
    """
    -log softmax(S_1..S_nc)[gold].

    Raises:
        DatasetError: If the instance has no gold answer
    """
    if instance.answer is None:
        raise DatasetError(f"Instance {instance.id} has no gold answer")
    return cross_entropy(candidate_scores(instance, model, training, rng), instance.answer)


# ============================================================================
# Evaluation
# ============================================================================

def _require_gold(instances: Sequence[QaInstance]) -> None:
    if not instances:
        raise DatasetError("Cannot evaluate an empty dataset")
    missing = [inst.id for inst in instances if inst.answer is None]
    if missing:
        raise DatasetError(f"{len(missing)} instance(s) lack a gold answer, e.g. {missing[0]}")


def _scores_in_order(instances: Sequence[QaInstance], model: CamseModel, threads: int) -> List[np.ndarray]:
    def score(instance):
        return candidate_scores(instance, model).data.copy()

    if threads <= 1:
        return [score(instance) for instance in instances]
    with ThreadPoolExecutor(max_workers=threads) as executor:
        return list(executor.map(score, instances))


def evaluate(test_set: Sequence[QaInstance], model: CamseModel, threads: int = 1) -> float:
    """
    Fraction of instances predicted correctly.

    Raises:
        DatasetError: If the set is empty or lacks gold answers
    """
    return evaluate_report(test_set, model, threads)['accuracy']


def evaluate_report(test_set: Sequence[QaInstance], model: CamseModel, threads: int = 1) -> dict:
    """Accuracy plus per-instance predicted/gold indices and candidate scores."""
    _require_gold(test_set)
    all_scores = _scores_in_order(test_set, model, threads)
    records = []
    correct = 0
    for instance, scores in zip(test_set, all_scores):
        predicted = select_answer(scores)
        correct += int(predicted == instance.answer)
        records.append({
            'id': instance.id,
            'predicted': predicted,
            'gold': instance.answer,
            'scores': [float(s) for s in scores],
        })
    return {
        'accuracy': correct / len(test_set),
        'correct': correct,
        'count': len(test_set),
        'instances': records,
    }


def _mean_embedding(text: str, vocab: Vocabulary, table: EmbeddingTable) -> np.ndarray:
    ids = [vocab.id_of(token) for token in text.split()]
    if not ids:
        return np.zeros(table.dim)
    return table.weights.data[ids].mean(axis=0)


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    denom = float(np.linalg.norm(a) * np.linalg.norm(b))
    return float(a @ b) / denom if denom > 1e-12 else 0.0


def baseline_scores(instance: QaInstance, vocab: Vocabulary, table: EmbeddingTable,
                    evidence_cap: int = EVIDENCE_CAP) -> np.ndarray:
    """Per-candidate sum of cosines between mean-pooled statement and documents."""
    scores = []
    for choice, docs in zip(instance.choices, instance.evidence):
        statement = _mean_embedding(f"{instance.question} {choice}", vocab, table)
        scores.append(sum(_cosine(statement, _mean_embedding(doc, vocab, table)) for doc in docs[:evidence_cap]))
    return np.array(scores, dtype=np.float64)


def baseline_mean_cosine(instance: QaInstance, vocab: Vocabulary, table: EmbeddingTable,
                         evidence_cap: int = EVIDENCE_CAP) -> int:
    """Word-level siamese control: no context, attention or association."""
    return select_answer(baseline_scores(instance, vocab, table, evidence_cap))


def evaluate_baseline(test_set: Sequence[QaInstance], vocab: Vocabulary, table: EmbeddingTable,
                      evidence_cap: int = EVIDENCE_CAP) -> float:
    _require_gold(test_set)
    correct = sum(
        int(baseline_mean_cosine(inst, vocab, table, evidence_cap) == inst.answer) for inst in test_set
    )
    return correct / len(test_set)


# ============================================================================
# Training
# ============================================================================

@dataclass
class TrainResult:
    best_epoch: int
    best_dev_accuracy: Optional[float]
    history: List[Dict] = field(default_factory=list)


def train(train_set: Sequence[QaInstance], dev_set: Sequence[QaInstance], model: CamseModel,
          config: Optional[TrainConfig] = None, metrics_path=None) -> TrainResult:
    """
    Minibatch Adam with per-epoch learning-rate decay and dropout.

    Keeps the parameters of the epoch with the best dev accuracy (earlier
    epoch on ties; the last epoch when there is no dev set) and restores
    them into the model before returning.

    Args:
        train_set: Training instances with gold answers
        dev_set: Dev instances (may be empty)
        model: Model to train in place
        config: Training hyperparameters (defaults to model.train_config)
        metrics_path: Optional JSON-lines file for per-epoch records

    Raises:
        DatasetError: If the training set is empty
        DivergenceError: If a batch loss is not finite
    """
    config = config or model.train_config
    if not train_set:
        raise DatasetError("Cannot train on an empty dataset")
    _require_gold(train_set)

    rng = np.random.default_rng(config.seed)
    state = AdamState(
        base_lr=config.learning_rate, beta1=config.adam_beta1, beta2=config.adam_beta2,
        eps=config.adam_eps, decay=config.lr_decay,
    )
    if metrics_path is not None:
        Path(metrics_path).write_text('', encoding='utf-8')

    history = []
    best_snapshot = None
    best_epoch = 0
    best_accuracy = None
    n = len(train_set)

    for epoch in range(config.epochs):
        state.epoch = epoch
        order = rng.permutation(n)
        total = 0.0
        for batch_no, start in enumerate(range(0, n, config.batch_size), start=1):
            batch = order[start:start + config.batch_size]
            model.params.zero_grad()
            with Tape() as tape:
                batch_loss = mean([loss(train_set[i], model, training=True, rng=rng) for i in batch])
                value = float(batch_loss.data)
                if not np.isfinite(value):
                    raise DivergenceError(epoch + 1, batch_no, value)
                if batch_loss.requires_grad:
                    tape.backward(batch_loss)
            model.table.mask_oov_grad()
            adam_step(model.params, state)
            total += value * len(batch)
            logger.debug(f"Epoch {epoch + 1} batch {batch_no}: loss {value:.6f}")

        dev_accuracy = evaluate(dev_set, model, config.threads) if dev_set else None
        record = {
            'epoch': epoch + 1,
            'train_loss': total / n,
            'dev_accuracy': dev_accuracy,
            'lr': state.learning_rate,
        }
        history.append(record)
        if metrics_path is not None:
            with open(metrics_path, 'a', encoding='utf-8') as handle:
                handle.write(json.dumps(record, sort_keys=True) + '\n')
        dev_text = f"{dev_accuracy:.4f}" if dev_accuracy is not None else "n/a"
        logger.info(f"Epoch {epoch + 1}/{config.epochs}: train loss {record['train_loss']:.4f}, dev accuracy {dev_text}")

        improved = best_snapshot is None or dev_accuracy is None or dev_accuracy > best_accuracy
        if improved:
            best_snapshot = model.params.snapshot()
            best_epoch = epoch + 1
            best_accuracy = dev_accuracy

    model.params.restore(best_snapshot)
    logger.info(f"Kept parameters from epoch {best_epoch}")
    return TrainResult(best_epoch, best_accuracy, history)
