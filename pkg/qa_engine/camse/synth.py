"""
Deterministic synthetic corpora for desk-scale training runs.

Two generators are provided:

- Entity corpus: diseases are ordered multi-token entities; every disease
  in a family is a permutation of the same family tokens, so bag-of-words
  overlap cannot tell a choice's evidence from its distractors while the
  token order (a multi-word unit) can.
- Association corpus: questions mention only a disease's causes and the
  gold evidence only its symptoms, so question and gold evidence share no
  token and the link is learnable only from co-occurrence.

Each instance is drawn from its own generator seeded by (seed, split,
position), so generation is a pure function of the configuration.
"""

import itertools
import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import List, Sequence, Tuple

import numpy as np

from .config import SEED
from .exceptions import SynthConfigError
from .qa import QaInstance, save_dataset
from .text import EmbeddingTable, Vocabulary, random_embeddings, save_embeddings

logger = logging.getLogger(__name__)

VALID_KINDS = ('entity', 'association')
MIN_NOISE_TOKENS = 10

TRAIN_FILE = 'train.jsonl'
TEST_FILE = 'test.jsonl'
EMBEDDINGS_FILE = 'embeddings.txt'
MANIFEST_FILE = 'manifest.json'


@dataclass
class SynthConfig:
    vocab_size: int = 200
    num_diseases: int = 12
    entity_length: int = 3
    symptoms_per_disease: int = 3
    question_length: int = 12
    num_choices: int = 4
    train_size: int = 500
    test_size: int = 200
    evidence_per_choice: int = 2
    embedding_dim: int = 32
    seed: int = SEED

    def validate(self) -> None:
        """
        Raises:
            SynthConfigError: If the configuration cannot be realised
        """
        if self.entity_length < 2:
            raise SynthConfigError(f"entity_length must be at least 2, got {self.entity_length}")
        if self.num_choices < 2:
            raise SynthConfigError(f"num_choices must be at least 2, got {self.num_choices}")
        if self.num_diseases < self.num_choices:
            raise SynthConfigError(
                f"num_diseases ({self.num_diseases}) must be at least num_choices ({self.num_choices})"
            )
        if self.symptoms_per_disease < 1 or self.evidence_per_choice < 1 or self.embedding_dim < 1:
            raise SynthConfigError("symptoms_per_disease, evidence_per_choice and embedding_dim must be positive")
        if self.train_size < 1 or self.test_size < 1:
            raise SynthConfigError("train_size and test_size must be positive")
        longest_span = max(self.entity_length, self.symptoms_per_disease)
        if self.question_length <= longest_span:
            raise SynthConfigError(
                f"question_length ({self.question_length}) must exceed the entity/cause span ({longest_span})"
            )


@dataclass
class SynthCorpus:
    kind: str
    train: List[QaInstance]
    test: List[QaInstance]
    vocab: Vocabulary
    table: EmbeddingTable


def _instance_rng(cfg: SynthConfig, split: int, index: int) -> np.random.Generator:
    return np.random.default_rng([cfg.seed, split, index])


def _noise_budget(cfg: SynthConfig, reserved: int) -> int:
    budget = cfg.vocab_size - reserved
    if budget < MIN_NOISE_TOKENS:
        raise SynthConfigError(
            f"vocab_size {cfg.vocab_size} leaves {budget} noise tokens after {reserved} structural tokens; "
            f"need at least {MIN_NOISE_TOKENS}"
        )
    return budget


def _codes(cfg: SynthConfig) -> List[str]:
    return [f"d{i:02d}" for i in range(cfg.num_diseases)]


def _choice_order(rng: np.random.Generator, gold: int, pool: Sequence[int], num_choices: int) -> Tuple[List[int], int]:
    """Gold disease plus distractors from pool, gold at a uniformly drawn slot."""
    distractors = [int(x) for x in rng.choice([p for p in pool if p != gold], size=num_choices - 1, replace=False)]
    slot = int(rng.integers(num_choices))
    diseases = distractors[:slot] + [gold] + distractors[slot:]
    return diseases, slot


def _embed_span(rng: np.random.Generator, noise: Sequence[str], length: int, span: Sequence[str]) -> str:
    filler = [noise[int(i)] for i in rng.integers(len(noise), size=length - len(span))]
    at = int(rng.integers(len(filler) + 1))
    return ' '.join(filler[:at] + list(span) + filler[at:])


def _finish(cfg: SynthConfig, kind: str, train: List[QaInstance], test: List[QaInstance],
            tokens: Sequence[str]) -> SynthCorpus:
    vocab = Vocabulary(sorted(tokens))
    table = random_embeddings(vocab, cfg.embedding_dim, cfg.seed)
    logger.info(f"Generated {kind} corpus: {len(train)} train / {len(test)} test, {len(vocab) - 1} tokens")
    return SynthCorpus(kind, train, test, vocab, table)


# ============================================================================
# Entity Corpus
# ============================================================================

def _entity_families(cfg: SynthConfig) -> List[List[Tuple[str, ...]]]:
    family_size = cfg.num_choices
    orderings = list(itertools.permutations(range(cfg.entity_length)))
    if len(orderings) < family_size:
        raise SynthConfigError(
            f"entity_length {cfg.entity_length} gives only {len(orderings)} orderings; "
            f"{family_size} distinct entities per family are needed"
        )
    count = -(-cfg.num_diseases // family_size)
    families = []
    rng = np.random.default_rng([cfg.seed, 0])
    for f in range(count):
        tokens = [f"e{f:02d}{chr(ord('a') + t)}" for t in range(cfg.entity_length)]
        picked = rng.choice(len(orderings), size=family_size, replace=False)
        families.append([tuple(tokens[j] for j in orderings[int(p)]) for p in sorted(picked)])
    return families


def gen_entity_corpus(cfg: SynthConfig) -> SynthCorpus:
    """
    Questions embed one disease entity in noise; each choice's evidence
    embeds that choice's entity; distractors come from the gold's family.
    """
    cfg.validate()
    families = _entity_families(cfg)
    entities = [entity for family in families for entity in family][:cfg.num_diseases]
    family_of = [i // cfg.num_choices for i in range(cfg.num_diseases)]
    codes = _codes(cfg)
    entity_tokens = sorted({token for entity in entities for token in entity})
    noise = [f"w{i:03d}" for i in range(_noise_budget(cfg, len(entity_tokens) + len(codes)))]

    def make(split: int, index: int) -> QaInstance:
        rng = _instance_rng(cfg, split, index)
        gold = int(rng.integers(cfg.num_diseases))
        pool = [d for d in range(cfg.num_diseases) if family_of[d] == family_of[gold]]
        if len(pool) < cfg.num_choices:
            pool = list(range(cfg.num_diseases))
        diseases, answer = _choice_order(rng, gold, pool, cfg.num_choices)
        question = _embed_span(rng, noise, cfg.question_length, entities[gold])
        evidence = [
            [_embed_span(rng, noise, cfg.question_length, entities[d]) for _ in range(cfg.evidence_per_choice)]
            for d in diseases
        ]
        return QaInstance(f"{'train' if split == 1 else 'test'}-{index:05d}", question,
                          [codes[d] for d in diseases], evidence, answer)

    train = [make(1, i) for i in range(cfg.train_size)]
    test = [make(2, i) for i in range(cfg.test_size)]
    return _finish(cfg, 'entity', train, test, entity_tokens + codes + noise)


# ============================================================================
# Association Corpus
# ============================================================================

def gen_association_corpus(cfg: SynthConfig) -> SynthCorpus:
    """
    Questions mention a disease's causes plus question noise; evidence for a
    choice mentions that choice's symptoms plus evidence noise.
    """
    cfg.validate()
    m = cfg.symptoms_per_disease
    causes = [[f"c{d:02d}{chr(ord('a') + j)}" for j in range(m)] for d in range(cfg.num_diseases)]
    symptoms = [[f"s{d:02d}{chr(ord('a') + j)}" for j in range(m)] for d in range(cfg.num_diseases)]
    codes = _codes(cfg)
    reserved = 2 * m * cfg.num_diseases + len(codes)
    budget = _noise_budget(cfg, reserved)
    question_noise = [f"q{i:03d}" for i in range(budget // 2)]
    evidence_noise = [f"v{i:03d}" for i in range(budget - budget // 2)]
    if min(len(question_noise), len(evidence_noise)) < MIN_NOISE_TOKENS // 2:
        raise SynthConfigError("Too few noise tokens to split between questions and evidence")

    def make(split: int, index: int) -> QaInstance:
        rng = _instance_rng(cfg, split, index)
        gold = int(rng.integers(cfg.num_diseases))
        diseases, answer = _choice_order(rng, gold, range(cfg.num_diseases), cfg.num_choices)
        cause_span = [causes[gold][int(j)] for j in rng.permutation(m)]
        question = _embed_span(rng, question_noise, cfg.question_length, cause_span)
        evidence = []
        for d in diseases:
            docs = []
            for _ in range(cfg.evidence_per_choice):
                span = [symptoms[d][int(j)] for j in rng.permutation(m)]
                docs.append(_embed_span(rng, evidence_noise, cfg.question_length, span))
            evidence.append(docs)
        return QaInstance(f"{'train' if split == 1 else 'test'}-{index:05d}", question,
                          [codes[d] for d in diseases], evidence, answer)

    train = [make(1, i) for i in range(cfg.train_size)]
    test = [make(2, i) for i in range(cfg.test_size)]
    tokens = [t for group in causes + symptoms for t in group] + codes + question_noise + evidence_noise
    return _finish(cfg, 'association', train, test, tokens)


def generate(kind: str, cfg: SynthConfig) -> SynthCorpus:
    if kind == 'entity':
        return gen_entity_corpus(cfg)
    if kind == 'association':
        return gen_association_corpus(cfg)
    raise SynthConfigError(f"Unknown corpus kind '{kind}'. Must be one of: {', '.join(VALID_KINDS)}.")


def write_corpus(corpus: SynthCorpus, cfg: SynthConfig, out_dir) -> Path:
    """Write train/test datasets, the embedding file and manifest.json."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_dataset(out_dir / TRAIN_FILE, corpus.train)
    save_dataset(out_dir / TEST_FILE, corpus.test)
    save_embeddings(out_dir / EMBEDDINGS_FILE, corpus.vocab, corpus.table)
    manifest = {
        'kind': corpus.kind,
        'config': asdict(cfg),
        'files': {'train': TRAIN_FILE, 'test': TEST_FILE, 'embeddings': EMBEDDINGS_FILE},
        'train_count': len(corpus.train),
        'test_count': len(corpus.test),
        'vocab_size': len(corpus.vocab) - 1,
        'embedding_dim': corpus.table.dim,
    }
    (out_dir / MANIFEST_FILE).write_text(json.dumps(manifest, indent=2, sort_keys=True) + '\n', encoding='utf-8')
    logger.info(f"Synthetic corpus written to {out_dir}")
    return out_dir
